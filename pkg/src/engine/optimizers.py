# src/engine/optimizers.py
from typing import Any, Dict, Optional, Tuple

import numpy as np

from config.setting import TRAIN_DEFAULTS


class OptimizerState:
    """Momentos m, v de Adam, contador de pasos y sus hiperparámetros. SGD no usa momentos."""
    def __init__(self, kind: str, dim: int, beta1: Optional[float] = None, beta2: Optional[float] = None,
                 eps_adam: Optional[float] = None):
        if kind not in ("sgd", "adam"):
            raise ValueError(f"Optimizer '{kind}' not supported. Use 'sgd' or 'adam'.")
        self.kind = kind
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0
        self.beta1 = TRAIN_DEFAULTS["beta1"] if beta1 is None else float(beta1)
        self.beta2 = TRAIN_DEFAULTS["beta2"] if beta2 is None else float(beta2)
        self.eps_adam = TRAIN_DEFAULTS["eps_adam"] if eps_adam is None else float(eps_adam)

    def copy(self) -> 'OptimizerState':
        new = OptimizerState(self.kind, len(self.m), self.beta1, self.beta2, self.eps_adam)
        new.m, new.v, new.t = self.m.copy(), self.v.copy(), self.t
        return new

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "t": self.t, "beta1": self.beta1, "beta2": self.beta2, "eps_adam": self.eps_adam}

    def __repr__(self) -> str:
        return f"OptimizerState(kind='{self.kind}', t={self.t})"


def adam_update(opt: OptimizerState, g: np.ndarray, lr: float) -> Tuple[OptimizerState, np.ndarray]:
    """Adam con corrección de sesgo. Retorna (estado nuevo, delta = -lr·m̂/(sqrt(v̂)+ε))."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != opt.m.shape:
        raise ValueError(f"Gradient of shape {g.shape} does not match optimizer state {opt.m.shape}.")
    new = opt.copy()
    new.t += 1
    new.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * g
    new.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * g * g
    m_hat = new.m / (1.0 - opt.beta1 ** new.t)
    v_hat = new.v / (1.0 - opt.beta2 ** new.t)
    return new, -lr * m_hat / (np.sqrt(v_hat) + opt.eps_adam)


def sgd_update(opt: OptimizerState, g: np.ndarray, lr: float) -> Tuple[OptimizerState, np.ndarray]:
    new = opt.copy()
    new.t += 1
    return new, -lr * np.asarray(g, dtype=np.float64)


def apply_optimizer(opt: OptimizerState, g: np.ndarray, lr: float) -> Tuple[OptimizerState, np.ndarray]:
    if opt.kind == "adam":
        return adam_update(opt, g, lr)
    return sgd_update(opt, g, lr)
