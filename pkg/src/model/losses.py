# src/model/losses.py
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit, logsumexp

from src.common.exceptions import NonFiniteLoss, ShapeMismatch

# Los logits se saturan en ±LOGIT_CLAMP antes de exponenciar
LOGIT_CLAMP = 30.0

LOSS_KINDS = ("bce", "ce")


class LossSpec:
    """
    Pérdida por muestra con reducción de suma.

    - "bce": entropía cruzada binaria sobre un logit con peso de clase positiva.
    - "ce": entropía cruzada de K clases con pesos por clase (convención de pesos de
      CrossEntropyLoss: la pérdida de la muestra i se multiplica por w[y_i]).
    """
    def __init__(self, kind: str, pos_weight: float = 1.0, class_weights: Optional[List[float]] = None):
        if kind not in LOSS_KINDS:
            raise ValueError(f"Loss kind '{kind}' not supported. Use one of {LOSS_KINDS}.")
        if pos_weight <= 0:
            raise ValueError("pos_weight must be > 0.")
        if kind == "ce":
            if not class_weights:
                raise ValueError("'ce' loss requires class_weights.")
            if any(w <= 0 for w in class_weights):
                raise ValueError("All class weights must be > 0.")
        self.kind = kind
        self.pos_weight = float(pos_weight)
        self.class_weights = np.asarray(class_weights, dtype=np.float64) if class_weights else None
        self.reduction = "sum"

    @property
    def num_outputs(self) -> int:
        return 1 if self.kind == "bce" else len(self.class_weights)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "pos_weight": self.pos_weight,
            "class_weights": None if self.class_weights is None else self.class_weights.tolist(),
            "reduction": self.reduction,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LossSpec':
        return cls(data["kind"], data.get("pos_weight", 1.0), data.get("class_weights"))

    def __repr__(self) -> str:
        return f"LossSpec(kind='{self.kind}', pos_weight={self.pos_weight}, class_weights={self.to_dict()['class_weights']})"


def loss_and_dlogits(loss: LossSpec, logits: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pérdida por muestra y su derivada respecto a los logits.

    logits: (B, K); labels: (B,). Retorna (losses (B,), dlogits (B, K)).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0] or logits.shape[1] != loss.num_outputs:
        raise ShapeMismatch(f"Logits of shape {logits.shape} do not match {labels.shape[0]} labels "
                            f"and {loss.num_outputs} outputs.")
    if labels.size and (labels.min() < 0 or labels.max() >= max(2, loss.num_outputs)):
        raise ValueError("Labels out of range for the loss.")

    z = np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP)

    if loss.kind == "bce":
        zb = z[:, 0]
        y = labels.astype(np.float64)
        # softplus(z) = log(1 + e^z), forma estable
        losses = loss.pos_weight * y * np.logaddexp(0.0, -zb) + (1.0 - y) * np.logaddexp(0.0, zb)
        s = expit(zb)
        dlogits = (loss.pos_weight * y * (s - 1.0) + (1.0 - y) * s)[:, None]
    else:
        lse = logsumexp(z, axis=1, keepdims=True)
        log_probs = z - lse
        rows = np.arange(labels.shape[0])
        w = loss.class_weights[labels]
        losses = -w * log_probs[rows, labels]
        probs = np.exp(log_probs)
        probs[rows, labels] -= 1.0
        dlogits = w[:, None] * probs

    if not np.all(np.isfinite(losses)):
        raise NonFiniteLoss("Per-sample loss is not finite (check for saturated or NaN logits).")
    return losses, dlogits


def predict_labels(loss: LossSpec, logits: np.ndarray) -> np.ndarray:
    """Etiqueta predicha: sigmoide > 0.5 para un logit, argmax para K salidas."""
    logits = np.asarray(logits, dtype=np.float64)
    if loss.kind == "bce":
        return (expit(np.clip(logits[:, 0], -LOGIT_CLAMP, LOGIT_CLAMP)) > 0.5).astype(np.int64)
    return np.argmax(logits, axis=1).astype(np.int64)
