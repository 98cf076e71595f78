# src/model/mlp.py
"""
Perceptrón multicapa con gradientes por muestra exactos (reverse-mode escrito a mano).

Cada capa oculta es: Linear -> GroupNorm (opcional) -> ReLU -> Dropout (opcional).
La capa de salida es lineal: un logit (binario) o K logits.

La normalización de grupo usa solo las activaciones de la propia muestra, así que el
gradiente de una muestra no depende del resto del lote.
"""
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.common.exceptions import ShapeMismatch
from src.common.models import Example
from src.model.losses import LossSpec, loss_and_dlogits
from src.numerics.random_streams import StreamKey, gaussian, uniform

GROUP_NORM_EPS = 1e-5


class MlpSpec:
    """
    Arquitectura: anchos (entrada -> ocultas... -> salida), grupos de GroupNorm por capa
    oculta (None = sin normalización) y tasa de dropout por capa oculta.
    """
    def __init__(self, widths: Sequence[int], norm_groups: Optional[Sequence[Optional[int]]] = None,
                 dropout: Optional[Sequence[float]] = None):
        widths = [int(w) for w in widths]
        if len(widths) < 2:
            raise ValueError("MlpSpec needs at least input and output widths.")
        if any(w <= 0 for w in widths):
            raise ValueError("All layer widths must be positive.")
        n_hidden = len(widths) - 2
        norm_groups = list(norm_groups) if norm_groups is not None else [None] * n_hidden
        dropout = [float(p) for p in dropout] if dropout is not None else [0.0] * n_hidden
        if len(norm_groups) != n_hidden or len(dropout) != n_hidden:
            raise ValueError("norm_groups and dropout must have one entry per hidden layer.")
        for width, groups in zip(widths[1:-1], norm_groups):
            if groups is not None and (groups <= 0 or width % groups != 0):
                raise ValueError(f"Group count {groups} must evenly divide layer width {width}.")
        if any(not (0.0 <= p < 1.0) for p in dropout):
            raise ValueError("Dropout rates must lie in [0, 1).")

        self.widths = widths
        self.norm_groups = norm_groups
        self.dropout = dropout

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    @property
    def head(self) -> str:
        return "logit" if self.output_dim == 1 else "softmax"

    @property
    def num_hidden(self) -> int:
        return len(self.widths) - 2

    @property
    def dropout_width(self) -> int:
        """Cantidad de uniformes que necesita una muestra para todas sus máscaras."""
        return sum(w for w, p in zip(self.widths[1:-1], self.dropout) if p > 0)

    def to_dict(self) -> Dict[str, Any]:
        return {"widths": self.widths, "norm_groups": self.norm_groups, "dropout": self.dropout}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MlpSpec':
        return cls(data["widths"], data.get("norm_groups"), data.get("dropout"))

    def __repr__(self) -> str:
        return f"MlpSpec(widths={self.widths}, norm_groups={self.norm_groups}, dropout={self.dropout})"


class ParamSlice(NamedTuple):
    name: str
    layer: int
    offset: int
    shape: Tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def build_layout(spec: MlpSpec) -> List[ParamSlice]:
    """Orden del vector plano θ: por capa W, b y (si hay GroupNorm) gamma, beta."""
    layout = []
    offset = 0
    for layer, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        entries = [("W", (fan_out, fan_in)), ("b", (fan_out,))]
        if layer < spec.num_hidden and spec.norm_groups[layer] is not None:
            entries += [("gamma", (fan_out,)), ("beta", (fan_out,))]
        for name, shape in entries:
            sl = ParamSlice(f"{name}{layer}", layer, offset, shape)
            layout.append(sl)
            offset += sl.size
    return layout


class ModelParams:
    """Vector plano de parámetros θ con su mapa de capas."""
    def __init__(self, theta: np.ndarray, layout: List[ParamSlice]):
        theta = np.asarray(theta, dtype=np.float64)
        expected = sum(sl.size for sl in layout)
        if theta.ndim != 1 or theta.shape[0] != expected:
            raise ShapeMismatch(f"Parameter vector has length {theta.shape}, layout expects {expected}.")
        if not np.all(np.isfinite(theta)):
            raise ValueError("Model parameters must be finite.")
        self.theta = theta
        self.layout = layout
        self._by_name = {sl.name: sl for sl in layout}

    def get(self, name: str) -> np.ndarray:
        sl = self._by_name[name]
        return self.theta[sl.offset:sl.offset + sl.size].reshape(sl.shape)

    def has(self, name: str) -> bool:
        return name in self._by_name

    def with_theta(self, theta: np.ndarray) -> 'ModelParams':
        return ModelParams(theta, self.layout)

    def __len__(self) -> int:
        return self.theta.shape[0]

    def __repr__(self) -> str:
        return f"ModelParams(size={len(self)}, tensors={len(self.layout)})"


def init_params(spec: MlpSpec, key: StreamKey) -> ModelParams:
    """
    Pesos He: N(0, 2/fan_in) con un flujo por capa; sesgos y beta en cero, gamma en uno.
    """
    layout = build_layout(spec)
    theta = np.zeros(sum(sl.size for sl in layout), dtype=np.float64)
    for sl in layout:
        if sl.name.startswith("W"):
            fan_in = sl.shape[1]
            theta[sl.offset:sl.offset + sl.size] = gaussian(key.at(index=sl.layer), sl.size, np.sqrt(2.0 / fan_in))
        elif sl.name.startswith("gamma"):
            theta[sl.offset:sl.offset + sl.size] = 1.0
    return ModelParams(theta, layout)


def zero_params(spec: MlpSpec) -> ModelParams:
    layout = build_layout(spec)
    return ModelParams(np.zeros(sum(sl.size for sl in layout)), layout)


def _dropout_masks(spec: MlpSpec, keys: Sequence[StreamKey]) -> List[Optional[np.ndarray]]:
    """Máscaras invertidas (u >= p)/(1-p) por capa oculta, una fila por muestra."""
    width = spec.dropout_width
    if width == 0:
        return [None] * spec.num_hidden
    u = np.stack([uniform(k, width) for k in keys]) if keys else np.zeros((0, width))
    masks = []
    start = 0
    for layer in range(spec.num_hidden):
        p = spec.dropout[layer]
        if p > 0:
            n = spec.widths[layer + 1]
            masks.append((u[:, start:start + n] >= p) / (1.0 - p))
            start += n
        else:
            masks.append(None)
    return masks


def _check_layout(params: ModelParams, spec: MlpSpec) -> None:
    """Cada tensor de θ debe tener el nombre y la forma que pide la arquitectura."""
    expected = build_layout(spec)
    if len(params.layout) != len(expected):
        raise ShapeMismatch(f"Parameters hold {len(params.layout)} tensors, the model spec expects {len(expected)}.")
    for got, want in zip(params.layout, expected):
        if got.name != want.name or tuple(got.shape) != tuple(want.shape):
            raise ShapeMismatch(f"Parameter {got.name} has shape {got.shape}, the model spec expects "
                                f"{want.name} with shape {want.shape}.")


def _forward(params: ModelParams, spec: MlpSpec, X: np.ndarray, keys: Optional[Sequence[StreamKey]]):
    """Pasada hacia adelante en lote. keys=None es modo eval (sin dropout)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ShapeMismatch(f"Input of shape {X.shape} does not match model input width {spec.input_dim}.")
    _check_layout(params, spec)

    masks = _dropout_masks(spec, keys) if keys is not None else [None] * spec.num_hidden
    caches = []
    A = X
    for layer in range(spec.num_hidden):
        W, b = params.get(f"W{layer}"), params.get(f"b{layer}")
        Z = A @ W.T + b
        cache = {"A_prev": A, "mask": masks[layer]}
        groups = spec.norm_groups[layer]
        if groups is not None:
            B, n = Z.shape
            Zg = Z.reshape(B, groups, n // groups)
            mu = Zg.mean(axis=2, keepdims=True)
            var = Zg.var(axis=2, keepdims=True)
            inv_std = 1.0 / np.sqrt(var + GROUP_NORM_EPS)
            xhat = (Zg - mu) * inv_std
            Y = params.get(f"gamma{layer}") * xhat.reshape(B, n) + params.get(f"beta{layer}")
            cache.update({"xhat": xhat, "inv_std": inv_std})
        else:
            Y = Z
        H = np.maximum(Y, 0.0)
        cache["active"] = Y > 0
        A = H * masks[layer] if masks[layer] is not None else H
        caches.append(cache)

    last = spec.num_hidden
    logits = A @ params.get(f"W{last}").T + params.get(f"b{last}")
    caches.append({"A_prev": A})
    return logits, caches


def forward_batch(params: ModelParams, spec: MlpSpec, X: np.ndarray, mode: str = "eval",
                  base_key: Optional[StreamKey] = None, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Logits (B, K). En modo train la máscara de la fila i sale de base_key.at(index=indices[i])."""
    return _forward(params, spec, X, _row_keys(mode, base_key, indices, len(X)))[0]


def forward(params: ModelParams, spec: MlpSpec, x: np.ndarray, mode: str = "eval",
            key: Optional[StreamKey] = None) -> np.ndarray:
    """Logits de un solo ejemplo. Modo eval: determinista y sin dropout."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != spec.input_dim:
        raise ShapeMismatch(f"Feature vector of shape {x.shape} does not match input width {spec.input_dim}.")
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'.")
    keys = None
    if mode == "train":
        if key is None:
            raise ValueError("Train-mode forward needs a StreamKey for the dropout masks.")
        keys = [key]
    return _forward(params, spec, x[None, :], keys)[0][0]


def _row_keys(mode: str, base_key: Optional[StreamKey], indices: Optional[Sequence[int]], n: int):
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'.")
    if mode == "eval" or base_key is None:
        return None
    indices = range(n) if indices is None else indices
    return [base_key.at(index=int(i)) for i in indices]


def per_sample_grads(params: ModelParams, spec: MlpSpec, loss: LossSpec, X: np.ndarray, y: np.ndarray,
                     base_key: Optional[StreamKey] = None,
                     indices: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradientes por muestra del lote: matriz G (B, P) en el orden del layout y la pérdida de cada fila.
    Con base_key las filas usan dropout (modo train); sin ella la red se evalúa sin dropout.
    """
    keys = _row_keys("train", base_key, indices, len(X))
    logits, caches = _forward(params, spec, X, keys)
    losses, dZ = loss_and_dlogits(loss, logits, y)
    B = dZ.shape[0]
    grads: Dict[str, np.ndarray] = {}

    last = spec.num_hidden
    A_prev = caches[last]["A_prev"]
    grads[f"W{last}"] = np.einsum('bo,bi->boi', dZ, A_prev).reshape(B, -1)
    grads[f"b{last}"] = dZ
    dA = dZ @ params.get(f"W{last}")

    for layer in reversed(range(spec.num_hidden)):
        cache = caches[layer]
        dH = dA * cache["mask"] if cache["mask"] is not None else dA
        dY = dH * cache["active"]
        groups = spec.norm_groups[layer]
        if groups is not None:
            n = dY.shape[1]
            xhat = cache["xhat"]
            grads[f"gamma{layer}"] = dY * xhat.reshape(B, n)
            grads[f"beta{layer}"] = dY
            dxhat = (dY * params.get(f"gamma{layer}")).reshape(xhat.shape)
            dZg = cache["inv_std"] * (dxhat - dxhat.mean(axis=2, keepdims=True)
                                      - xhat * (dxhat * xhat).mean(axis=2, keepdims=True))
            dZ = dZg.reshape(B, n)
        else:
            dZ = dY
        grads[f"W{layer}"] = np.einsum('bo,bi->boi', dZ, cache["A_prev"]).reshape(B, -1)
        grads[f"b{layer}"] = dZ
        if layer > 0:
            dA = dZ @ params.get(f"W{layer}")

    G = np.concatenate([grads[sl.name].reshape(B, -1) for sl in params.layout], axis=1)
    return G, losses


def per_sample_grad(params: ModelParams, spec: MlpSpec, loss: LossSpec, ex: Example,
                    key: Optional[StreamKey] = None) -> Tuple[np.ndarray, float]:
    """
    Gradiente exacto de la pérdida de un solo ejemplo respecto a todos los parámetros
    (aplanado en el orden del layout) y el valor de esa pérdida.
    `key` es la clave de dropout del ejemplo; sin ella no se aplica dropout.
    """
    if ex.dim != spec.input_dim:
        raise ShapeMismatch(f"Example of dimension {ex.dim} does not match input width {spec.input_dim}.")
    keys = [key] if key is not None else None
    G, losses = _per_sample_rows(params, spec, loss, ex.features[None, :], np.array([ex.label]), keys)
    return G[0], float(losses[0])


def _per_sample_rows(params, spec, loss, X, y, keys):
    if keys is None:
        return per_sample_grads(params, spec, loss, X, y)
    # Una sola fila: la clave ya es la de la muestra
    return per_sample_grads(params, spec, loss, X, y, base_key=keys[0], indices=[keys[0].index])


def example_loss(params: ModelParams, spec: MlpSpec, loss: LossSpec, x: np.ndarray, y: int,
                 key: Optional[StreamKey] = None) -> float:
    """Pérdida de un ejemplo (útil para diferencias finitas)."""
    keys = [key] if key is not None else None
    logits, _ = _forward(params, spec, np.asarray(x, dtype=np.float64)[None, :], keys)
    losses, _ = loss_and_dlogits(loss, logits, np.array([y]))
    return float(losses[0])
