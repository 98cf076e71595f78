# src/model/presets.py
"""
Arquitecturas predefinidas para los experimentos tabulares.

- income-simple: dos capas ocultas de 256 con ReLU, un logit y BCE con peso positivo 2.0.
- income-complex: 128-64-32-2, GroupNorm tras las dos primeras lineales y dropout 0.3
  tras la tercera; CE con pesos [1.0, 2.0].
- eicu-complex: misma red que income-complex con pesos [0.5, 1.0].
- linear: sin capas ocultas (problemas de juguete y cálculos a mano).
"""
from typing import Optional, Sequence, Tuple

from src.model.losses import LossSpec
from src.model.mlp import MlpSpec

PRESET_NAMES = ("income-simple", "income-complex", "eicu-complex", "linear")

DEFAULT_NORM_GROUPS = 8


def _complex(input_dim: int, hidden: Sequence[int], groups: int) -> MlpSpec:
    return MlpSpec([input_dim, *hidden, 2], norm_groups=[groups, groups, None], dropout=[0.0, 0.0, 0.3])


def preset(name: str, input_dim: int, groups: int = DEFAULT_NORM_GROUPS,
           hidden: Optional[Sequence[int]] = None) -> Tuple[MlpSpec, LossSpec]:
    """
    Retorna (MlpSpec, LossSpec) del preset. `hidden` permite anchos reducidos
    (por ejemplo en tests) sin cambiar la estructura de la red.
    """
    if input_dim <= 0:
        raise ValueError("input_dim must be positive.")
    if name == "income-simple":
        hidden = list(hidden) if hidden is not None else [256, 256]
        return MlpSpec([input_dim, *hidden, 1]), LossSpec("bce", pos_weight=2.0)
    if name in ("income-complex", "eicu-complex"):
        hidden = list(hidden) if hidden is not None else [128, 64, 32]
        if len(hidden) != 3:
            raise ValueError("Complex presets need exactly three hidden widths.")
        weights = [1.0, 2.0] if name == "income-complex" else [0.5, 1.0]
        return _complex(input_dim, hidden, groups), LossSpec("ce", class_weights=weights)
    if name == "linear":
        return MlpSpec([input_dim, 1]), LossSpec("bce")
    raise ValueError(f"Unknown model preset '{name}'. Use one of {PRESET_NAMES}.")
