# src/model/metrics.py
from typing import NamedTuple

import numpy as np
from sklearn.metrics import accuracy_score, f1_score

from src.common.exceptions import EmptySplit
from src.model.losses import LossSpec, loss_and_dlogits, predict_labels
from src.model.mlp import ModelParams, MlpSpec, forward_batch

# Filas evaluadas por bloque (solo limita memoria)
EVAL_BLOCK = 4096


class EvalResult(NamedTuple):
    sum_loss: float
    accuracy: float
    f1: float
    count: int


def classification_scores(labels: np.ndarray, predictions: np.ndarray, num_classes: int):
    """
    Exactitud y F1. Con dos clases (un logit o cabeza de 2 salidas) es el F1 de la clase
    positiva; con K >= 3 clases se usa macro-F1.
    """
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    accuracy = float(accuracy_score(labels, predictions))
    if num_classes <= 2:
        f1 = f1_score(labels, predictions, pos_label=1, average="binary", labels=[0, 1], zero_division=0)
    else:
        f1 = f1_score(labels, predictions, labels=list(range(num_classes)), average="macro", zero_division=0)
    return accuracy, float(f1)


def evaluate_arrays(params: ModelParams, spec: MlpSpec, loss: LossSpec, X: np.ndarray, y: np.ndarray) -> EvalResult:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptySplit("Cannot evaluate on an empty split.")

    sum_loss = 0.0
    predictions = []
    for start in range(0, X.shape[0], EVAL_BLOCK):
        logits = forward_batch(params, spec, X[start:start + EVAL_BLOCK], mode="eval")
        losses, _ = loss_and_dlogits(loss, logits, y[start:start + EVAL_BLOCK])
        sum_loss += float(np.sum(losses))
        predictions.append(predict_labels(loss, logits))

    accuracy, f1 = classification_scores(y, np.concatenate(predictions), max(2, loss.num_outputs))
    return EvalResult(sum_loss, accuracy, f1, int(X.shape[0]))


def evaluate(params: ModelParams, spec: MlpSpec, loss: LossSpec, split) -> EvalResult:
    """
    Pérdida total (reducción suma), exactitud y F1 sobre un split en modo eval.
    `split` es cualquier objeto con `features` y `labels` (un Dataset).
    """
    return evaluate_arrays(params, spec, loss, split.features, split.labels)
