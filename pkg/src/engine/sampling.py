# src/engine/sampling.py
import math

import numpy as np

from src.numerics.random_streams import StreamKey, uniform


def poisson_sample(N: int, q: float, key: StreamKey) -> np.ndarray:
    """
    Submuestreo de Poisson: cada índice entra con probabilidad q, de forma independiente.
    Retorna los índices en orden ascendente; un lote vacío es un resultado válido.
    """
    if N < 1:
        raise ValueError("Dataset size N must be >= 1.")
    if not (0.0 < q <= 1.0):
        raise ValueError(f"Sampling rate q must lie in (0, 1], got {q}.")
    if q == 1.0:
        return np.arange(N, dtype=np.int64)
    return np.flatnonzero(uniform(key, N) < q).astype(np.int64)


def steps_per_epoch(q: float) -> int:
    """Una época son ceil(1/q) pasos (una pasada esperada por el dataset)."""
    return int(math.ceil(1.0 / q - 1e-12))
