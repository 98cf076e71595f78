# src/data/synthetic.py
"""
Generador de datos tabulares sintéticos con un grupo minoritario más difícil.

Atributos protegidos binarios:
- sex: minoría con proporción ρ, features desplazadas en `shift` y etiquetas más ruidosas.
- age_group: balanceado, desplazado en shift/2.
Las etiquetas salen de un umbral sobre x·w* (cuantil del balance de clases) y luego se
invierten con una tasa que depende del grupo de sex.
"""
from typing import Any, Dict

import numpy as np

from src.data.dataset import Dataset
from src.numerics.random_streams import StreamKey, gaussian, uniform


class SyntheticSpec:
    def __init__(self, n: int = 20000, dim: int = 20, minority_rate: float = 0.2, shift: float = 1.0,
                 majority_noise: float = 0.05, minority_noise: float = 0.25, class_balance: float = 0.5,
                 feature_scale: float = 1.0, seed: int = 0):
        if n < 1 or dim < 1:
            raise ValueError("n and dim must be positive.")
        for name, value in (("minority_rate", minority_rate), ("majority_noise", majority_noise),
                            ("minority_noise", minority_noise), ("class_balance", class_balance)):
            if not (0.0 < value < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {value}.")
        if feature_scale <= 0:
            raise ValueError("feature_scale must be > 0.")
        self.n = int(n)
        self.dim = int(dim)
        self.minority_rate = float(minority_rate)
        self.shift = float(shift)
        self.majority_noise = float(majority_noise)
        self.minority_noise = float(minority_noise)
        self.class_balance = float(class_balance)
        self.feature_scale = float(feature_scale)
        self.seed = int(seed)

    def replace(self, **changes) -> 'SyntheticSpec':
        data = self.to_dict()
        data.update(changes)
        return SyntheticSpec(**data)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n, "dim": self.dim, "minority_rate": self.minority_rate, "shift": self.shift,
            "majority_noise": self.majority_noise, "minority_noise": self.minority_noise,
            "class_balance": self.class_balance, "feature_scale": self.feature_scale, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SyntheticSpec':
        return cls(**data)

    def __repr__(self) -> str:
        return f"SyntheticSpec({self.to_dict()})"


SYNTHETIC_PRESETS: Dict[str, Dict[str, Any]] = {
    "minority-hard": {"minority_rate": 0.2, "shift": 1.0, "majority_noise": 0.05, "minority_noise": 0.25},
    # Mismos grupos con features pequeñas: normas de gradiente bajas
    "low-gradient": {"minority_rate": 0.2, "shift": 1.0, "majority_noise": 0.05, "minority_noise": 0.25,
                     "feature_scale": 0.2},
}


def synthetic_preset(name: str, **overrides) -> SyntheticSpec:
    if name not in SYNTHETIC_PRESETS:
        raise ValueError(f"Unknown synthetic preset '{name}'. Use one of {sorted(SYNTHETIC_PRESETS)}.")
    params = dict(SYNTHETIC_PRESETS[name])
    params.update(overrides)
    return SyntheticSpec(**params)


def synth_generate(spec: SyntheticSpec) -> Dataset:
    key = StreamKey(spec.seed, "synthetic")
    n, d = spec.n, spec.dim

    sex = (uniform(key.at(index=0), n) < spec.minority_rate).astype(np.int64)
    age_group = (uniform(key.at(index=1), n) < 0.5).astype(np.int64)

    X = gaussian(key.at(index=2), n * d, 1.0).reshape(n, d)
    X += spec.shift * sex[:, None] + 0.5 * spec.shift * age_group[:, None]
    X *= spec.feature_scale

    w_star = gaussian(key.at(index=3), d, 1.0) / np.sqrt(d)
    score = X @ w_star
    labels = (score > np.quantile(score, 1.0 - spec.class_balance)).astype(np.int64)

    flip_rate = np.where(sex == 1, spec.minority_noise, spec.majority_noise)
    flips = uniform(key.at(index=4), n) < flip_rate
    labels = np.where(flips, 1 - labels, labels)

    provenance = {"source": "synthetic", "preprocessing_version": "synthetic/1", "spec": spec.to_dict()}
    return Dataset(X, labels, {"sex": sex, "age_group": age_group}, None, provenance)
