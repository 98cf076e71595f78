# src/data/dataset.py
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.common.models import Batch, Example

COLUMN_KINDS = ("numeric", "categorical", "protected", "label", "ignored")


class ColumnSpec:
    """Descriptor de una columna del CSV de entrada."""
    def __init__(self, name: str, kind: str, levels: Optional[List[str]] = None, attribute: Optional[str] = None):
        if kind not in COLUMN_KINDS:
            raise ValueError(f"Column kind '{kind}' not supported. Use one of {COLUMN_KINDS}.")
        self.name = name
        self.kind = kind
        self.levels = levels
        self.attribute = attribute or (name if kind == "protected" else None)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "kind": self.kind, "levels": self.levels, "attribute": self.attribute}

    def __repr__(self) -> str:
        return f"ColumnSpec('{self.name}', kind='{self.kind}')"


class TabularSchema:
    """
    Columnas ordenadas (numéricas, categóricas, protegidas y una etiqueta) y el
    valor centinela de dato faltante.
    """
    def __init__(self, columns: Sequence[ColumnSpec], missing_sentinel: str = "?"):
        columns = list(columns)
        labels = [c for c in columns if c.kind == "label"]
        if len(labels) != 1:
            raise ValueError(f"Schema must have exactly one label column, found {len(labels)}.")
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise ValueError("Schema column names must be unique.")
        self.columns = columns
        self.missing_sentinel = missing_sentinel

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.columns]

    @property
    def label(self) -> str:
        return next(c.name for c in self.columns if c.kind == "label")

    def of_kind(self, kind: str) -> List[str]:
        return [c.name for c in self.columns if c.kind == kind]

    def __repr__(self) -> str:
        return f"TabularSchema(columns={len(self.columns)}, label='{self.label}')"


class Dataset:
    """
    Dataset D ya codificado: matriz de features, etiquetas, atributos protegidos por
    ejemplo (binarios) y una nota de procedencia.
    """
    def __init__(self, features: np.ndarray, labels: np.ndarray, groups: Optional[Dict[str, np.ndarray]] = None,
                 feature_names: Optional[List[str]] = None, provenance: Optional[Dict[str, Any]] = None):
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.groups = {k: np.asarray(v, dtype=np.int64) for k, v in (groups or {}).items()}
        n = self.labels.shape[0]
        if self.features.ndim != 2 or self.features.shape[0] != n or self.labels.ndim != 1:
            raise ValueError("Dataset features and labels must have consistent row counts.")
        for name, values in self.groups.items():
            if values.shape != (n,):
                raise ValueError(f"Protected attribute '{name}' has {values.shape} rows, expected {n}.")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("Dataset features must be finite.")
        self.feature_names = list(feature_names) if feature_names is not None else \
            [f"x{i}" for i in range(self.features.shape[1])]
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("feature_names must have one entry per feature column.")
        self.provenance = dict(provenance or {})

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, rows: Sequence[int], note: Optional[str] = None) -> 'Dataset':
        rows = np.asarray(rows, dtype=np.int64)
        provenance = dict(self.provenance)
        if note:
            provenance["subset"] = note
        return Dataset(self.features[rows], self.labels[rows], {k: v[rows] for k, v in self.groups.items()},
                       self.feature_names, provenance)

    def batch(self, rows: Sequence[int]) -> Batch:
        """Lote con los índices del dataset (deben venir en orden ascendente)."""
        rows = np.asarray(rows, dtype=np.int64)
        return Batch(rows, self.features[rows], self.labels[rows], {k: v[rows] for k, v in self.groups.items()})

    def example(self, row: int) -> Example:
        return Example(self.features[row], int(self.labels[row]),
                       {k: int(v[row]) for k, v in self.groups.items()}, row)

    def __repr__(self) -> str:
        return f"Dataset(rows={len(self)}, dim={self.dim}, attributes={sorted(self.groups)})"


class DataSplits:
    """Particiones train / validation / test de un mismo dataset."""
    def __init__(self, train: Dataset, validation: Dataset, test: Optional[Dataset] = None):
        self.train = train
        self.validation = validation
        self.test = test

    def items(self):
        yield "train", self.train
        yield "validation", self.validation
        if self.test is not None:
            yield "test", self.test

    def __repr__(self) -> str:
        sizes = {name: len(ds) for name, ds in self.items()}
        return f"DataSplits({sizes})"
