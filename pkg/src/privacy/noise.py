# src/privacy/noise.py
import numpy as np

from src.common.exceptions import InvalidBound, NonFiniteInput
from src.numerics.linalg import as_vector
from src.numerics.random_streams import StreamKey, gaussian


def add_gradient_noise(sum_grads, sigma: float, C: float, key: StreamKey) -> np.ndarray:
    """Mecanismo gaussiano: Σ ḡ_i + N(0, σ²C²I). Con σ = 0 retorna la suma sin cambios."""
    if not (C > 0):
        raise InvalidBound(f"Clipping bound must be > 0, got {C}.")
    if sigma < 0:
        raise ValueError(f"Noise multiplier must be >= 0, got {sigma}.")
    sum_grads = as_vector(sum_grads)
    if not np.all(np.isfinite(sum_grads)):
        raise NonFiniteInput("Gradient sum contains NaN or infinite entries.")
    if sigma == 0:
        return sum_grads.copy()
    return sum_grads + gaussian(key, sum_grads.shape[0], sigma * C)
