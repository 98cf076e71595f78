# src/clip/adaptive.py
import math
from typing import Any, Dict, Sequence

import numpy as np

from src.common.exceptions import EmptyBatch, NotAdaptive
from src.numerics.random_streams import StreamKey, gaussian


class ClipState:
    """
    Estado del umbral de recorte: C actual, cuantil objetivo γ, tasa η_C, ruido σ_b del
    conteo de no recortados y si el umbral es adaptativo. Inmutable: cada actualización
    retorna un estado nuevo.
    """
    def __init__(self, C: float, target_quantile: float = 0.5, eta_c: float = 0.2,
                 sigma_b: float = 0.0, adaptive: bool = False, clamp_fraction: bool = False):
        if not (C > 0) or not math.isfinite(C):
            raise ValueError(f"Clipping bound C must be finite and > 0, got {C}.")
        if not (0.0 < target_quantile < 1.0):
            raise ValueError("target_quantile must lie in (0, 1).")
        if not (eta_c > 0):
            raise ValueError("eta_c must be > 0.")
        if sigma_b < 0:
            raise ValueError("sigma_b must be >= 0.")
        self.C = float(C)
        self.target_quantile = float(target_quantile)
        self.eta_c = float(eta_c)
        self.sigma_b = float(sigma_b)
        self.adaptive = bool(adaptive)
        self.clamp_fraction = bool(clamp_fraction)

    def with_bound(self, C: float) -> 'ClipState':
        return ClipState(C, self.target_quantile, self.eta_c, self.sigma_b, self.adaptive,
                         self.clamp_fraction)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "C": self.C,
            "target_quantile": self.target_quantile,
            "eta_c": self.eta_c,
            "sigma_b": self.sigma_b,
            "adaptive": self.adaptive,
            "clamp_fraction": self.clamp_fraction,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ClipState':
        return cls(data["C"], data.get("target_quantile", 0.5), data.get("eta_c", 0.2),
                   data.get("sigma_b", 0.0), data.get("adaptive", False),
                   data.get("clamp_fraction", False))

    def __repr__(self) -> str:
        return f"ClipState(C={self.C:.6g}, gamma={self.target_quantile}, adaptive={self.adaptive})"


def noisy_unclipped_fraction(bits: Sequence[int], batch_size: int, sigma_b: float, key: StreamKey) -> float:
    """
    b̃ = (Σ b_i + N(0, σ_b²)) / |B|. Puede quedar fuera de [0, 1]; no se recorta aquí.
    """
    if batch_size < 1:
        raise EmptyBatch("Cannot estimate the unclipped fraction of an empty batch.")
    noise = gaussian(key, 1, sigma_b)[0]
    return float((np.sum(bits) + noise) / batch_size)


def update_threshold(state: ClipState, fraction: float) -> ClipState:
    """C <- C · exp(-η_C (b̃ - γ)). γ, η_C y σ_b no cambian."""
    if not state.adaptive:
        raise NotAdaptive("update_threshold called on a non-adaptive ClipState.")
    if state.clamp_fraction:
        fraction = min(1.0, max(0.0, fraction))
    return state.with_bound(state.C * math.exp(-state.eta_c * (fraction - state.target_quantile)))
