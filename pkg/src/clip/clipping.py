# src/clip/clipping.py
"""
Reglas de recorte por muestra.

hard: α = min(1, C/‖g‖). Todo gradiente por encima de C queda con norma C (nunca por encima:
si el redondeo de α·g pasa de C, α baja de a un ulp).
soft: α = tanh(C/(‖g‖ + ε_div)). La norma resultante n·tanh(C/(n+ε)) es estrictamente
creciente en n y siempre menor que C, así que normas distintas siguen siendo distintas.
"""
from typing import Any, Dict, NamedTuple, Tuple

import numpy as np

from src.common.exceptions import InvalidBound
from src.numerics.linalg import as_vector, l2_norm, row_norms

# Margen relativo para buscar filas recortadas cerca de C en clip_batch
BOUND_MARGIN = 1e-9


class StrategyInfo(NamedTuple):
    rule: str        # "hard" | "soft"
    adaptive: bool
    label: str


# Registro de estrategias (nombre de configuración -> regla de recorte)
STRATEGIES: Dict[str, StrategyInfo] = {
    "hard": StrategyInfo("hard", False, "DPSGD"),
    "soft-fixed": StrategyInfo("soft", False, "Fixed Soft Clipping"),
    "adaptive-hard": StrategyInfo("hard", True, "Adaptive-DPSGD"),
    "softadaclip": StrategyInfo("soft", True, "SoftAdaClip"),
}


def strategy_info(name: str) -> StrategyInfo:
    if name not in STRATEGIES:
        raise ValueError(f"Unknown clipping strategy '{name}'. Use one of {sorted(STRATEGIES)}.")
    return STRATEGIES[name]


class PerSampleGradient:
    """
    Gradiente de una muestra y su recorte: g_i, ‖g_i‖, α_i, ḡ_i = α_i·g_i y b_i = 1{‖g_i‖ <= C}.
    """
    def __init__(self, raw: np.ndarray, norm: float, alpha: float, clipped: np.ndarray, unclipped: int):
        self.raw = raw
        self.norm = float(norm)
        self.alpha = float(alpha)
        self.clipped = clipped
        self.unclipped = int(unclipped)

    @property
    def clipped_norm(self) -> float:
        return float(np.linalg.norm(self.clipped))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "norm": self.norm,
            "alpha": self.alpha,
            "clipped_norm": self.clipped_norm,
            "unclipped": self.unclipped,
        }

    def __repr__(self) -> str:
        return (f"PerSampleGradient(dim={len(self.raw)}, norm={self.norm:.6g}, alpha={self.alpha:.6g}, "
                f"unclipped={self.unclipped})")


def _check_bound(C: float) -> None:
    if not (C > 0) or not np.isfinite(C):
        raise InvalidBound(f"Clipping bound must be finite and > 0, got {C}.")


def hard_factors(norms: np.ndarray, C: float) -> np.ndarray:
    """min(1, C/n) por fila; 1 donde la norma es cero."""
    norms = np.asarray(norms, dtype=np.float64)
    ratio = np.divide(C, norms, out=np.ones_like(norms), where=norms > 0)
    return np.minimum(1.0, ratio)


def soft_factors(norms: np.ndarray, C: float, eps_div: float) -> np.ndarray:
    return np.tanh(C / (np.asarray(norms, dtype=np.float64) + eps_div))


def fit_within_bound(g: np.ndarray, alpha: float, C: float, strict: bool = False) -> Tuple[float, np.ndarray]:
    """
    Escala g por α y, si el redondeo deja ‖α·g‖ por encima de C (o en C con `strict`),
    baja α de a un ulp hasta cumplir la cota. Retorna (α final, α·g).
    """
    alpha = float(alpha)
    clipped = alpha * g
    norm = np.linalg.norm(clipped)
    while norm > C or (strict and norm >= C):
        alpha = float(np.nextafter(alpha, 0.0))
        clipped = alpha * g
        norm = np.linalg.norm(clipped)
    return alpha, clipped


def hard_clip(g, C: float) -> PerSampleGradient:
    _check_bound(C)
    g = as_vector(g)
    norm = l2_norm(g)
    # En la región ‖g‖ <= C el gradiente no se toca (α = 1)
    alpha, clipped = fit_within_bound(g, hard_factors(np.array([norm]), C)[0], C)
    return PerSampleGradient(g, norm, alpha, clipped, norm <= C)


def soft_clip(g, C: float, eps_div: float = 1e-6) -> PerSampleGradient:
    _check_bound(C)
    if not (eps_div > 0):
        raise InvalidBound(f"eps_div must be > 0, got {eps_div}.")
    g = as_vector(g)
    norm = l2_norm(g)
    alpha, clipped = fit_within_bound(g, soft_factors(np.array([norm]), C, eps_div)[0], C, strict=True)
    return PerSampleGradient(g, norm, alpha, clipped, norm <= C)


def unclipped_indicator(g, C: float) -> int:
    """b = 1 si la norma CRUDA del gradiente es <= C (no la norma ya escalada)."""
    _check_bound(C)
    return int(l2_norm(as_vector(g)) <= C)


def clip_batch(G: np.ndarray, C: float, strategy: str, eps_div: float = 1e-6,
               norms: np.ndarray = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Aplica la regla de `strategy` a cada fila de G.
    Retorna (filas recortadas, α por fila, bits b_i, normas crudas).
    """
    _check_bound(C)
    info = strategy_info(strategy)
    if norms is None:
        norms = row_norms(G)
    if info.rule == "hard":
        alphas = hard_factors(norms, C)
    else:
        if not (eps_div > 0):
            raise InvalidBound(f"eps_div must be > 0, got {eps_div}.")
        alphas = soft_factors(norms, C, eps_div)
    bits = (norms <= C).astype(np.int64)
    clipped = G * alphas[:, None]
    # Solo las filas que quedan en C (o apenas por encima) pueden violar la cota por redondeo
    strict = info.rule == "soft"
    for i in np.flatnonzero(row_norms(clipped) >= C * (1.0 - BOUND_MARGIN)):
        alphas[i], clipped[i] = fit_within_bound(G[i], alphas[i], C, strict)
    return clipped, alphas, bits, norms
