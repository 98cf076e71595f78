# src/common/models.py
from typing import Any, Dict, Iterator, List, Sequence, Union

import numpy as np


class Example:
    """
    Un ejemplo (x_i, y_i) con sus atributos protegidos (nombre de atributo -> valor de grupo).
    """
    def __init__(self, features: Union[List[float], np.ndarray], label: int, groups: Dict[str, int] = None,
                 index: int = 0):
        if isinstance(features, list):
            self.features = np.array(features, dtype=np.float64)
        elif isinstance(features, np.ndarray):
            self.features = features.astype(np.float64, copy=False)
        else:
            raise TypeError("Example features must be a list of floats or a numpy array.")

        if not self.features.ndim == 1:
            raise ValueError("Example features must be a 1-dimensional array.")
        if int(label) != label or label < 0:
            raise ValueError("Example label must be a non-negative integer.")

        self.label = int(label)
        self.groups = {k: int(v) for k, v in (groups or {}).items()}
        self.index = int(index)

    def to_dict(self) -> Dict[str, Any]:
        """Convierte el ejemplo a un diccionario para serialización."""
        return {
            "index": self.index,
            "features": self.features.tolist(),
            "label": self.label,
            "groups": self.groups,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Example':
        if "features" not in data or "label" not in data:
            raise ValueError("Dictionary must contain 'features' and 'label' keys.")
        return cls(data["features"], data["label"], data.get("groups"), data.get("index", 0))

    @property
    def dim(self) -> int:
        return len(self.features)

    def __repr__(self) -> str:
        return f"Example(index={self.index}, dim={self.dim}, label={self.label}, groups={self.groups})"


class Batch:
    """
    Lote muestreado B: índices en el dataset (orden ascendente), matriz de features,
    etiquetas y atributos protegidos por ejemplo.
    """
    def __init__(self, indices: Sequence[int], features: np.ndarray, labels: np.ndarray,
                 groups: Dict[str, np.ndarray] = None):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.groups = {k: np.asarray(v, dtype=np.int64) for k, v in (groups or {}).items()}

        n = len(self.indices)
        if self.features.ndim != 2 or self.features.shape[0] != n or self.labels.shape != (n,):
            raise ValueError("Batch indices, features and labels must have consistent row counts.")
        for name, values in self.groups.items():
            if values.shape != (n,):
                raise ValueError(f"Group attribute '{name}' has {values.shape[0]} rows, expected {n}.")
        if n > 1 and np.any(np.diff(self.indices) <= 0):
            raise ValueError("Batch indices must be strictly ascending.")

    @classmethod
    def from_examples(cls, examples: Sequence[Example]) -> 'Batch':
        examples = sorted(examples, key=lambda e: e.index)
        if not examples:
            return cls.empty(0)
        names = sorted({name for ex in examples for name in ex.groups})
        return cls(
            [ex.index for ex in examples],
            np.stack([ex.features for ex in examples]),
            np.array([ex.label for ex in examples]),
            {name: np.array([ex.groups.get(name, -1) for ex in examples]) for name in names},
        )

    @classmethod
    def empty(cls, dim: int) -> 'Batch':
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, dim)), np.zeros(0, dtype=np.int64), {})

    def examples(self) -> Iterator[Example]:
        for row in range(len(self)):
            yield Example(
                self.features[row],
                int(self.labels[row]),
                {name: int(values[row]) for name, values in self.groups.items()},
                int(self.indices[row]),
            )

    def __len__(self) -> int:
        return len(self.indices)

    def __repr__(self) -> str:
        return f"Batch(size={len(self)}, dim={self.features.shape[1] if self.features.ndim == 2 else 0})"
