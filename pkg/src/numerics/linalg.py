# src/numerics/linalg.py
import numpy as np

from src.common.exceptions import NonFiniteInput


def as_vector(data) -> np.ndarray:
    """Convierte listas o arrays a un vector denso 1-D contiguo en float64."""
    vec = np.ascontiguousarray(data, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError("Vector data must be a 1-dimensional array.")
    return vec


def l2_norm(v: np.ndarray) -> float:
    """
    Norma euclidiana sqrt(Σ v_k²) de un vector finito.
    Es la norma que usan todas las reglas de recorte.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("l2_norm received a vector with NaN or infinite entries.")
    return float(np.linalg.norm(v))


def row_norms(G: np.ndarray) -> np.ndarray:
    """Norma ℓ2 de cada fila de una matriz (una fila por gradiente de muestra)."""
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2:
        raise ValueError("row_norms expects a 2-D matrix.")
    if not np.all(np.isfinite(G)):
        raise NonFiniteInput("row_norms received a matrix with NaN or infinite entries.")
    return np.sqrt(np.einsum('ij,ij->i', G, G))
