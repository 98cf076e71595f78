# src/engine/config.py
import math
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.clip.clipping import STRATEGIES
from src.engine.sampling import steps_per_epoch
from config.setting import CLIP_DEFAULTS, PRIVACY_DEFAULTS, TRAIN_DEFAULTS


class TrainConfig(BaseModel):
    """
    Hiperparámetros de una corrida. Se indica `steps` (T) o `epochs`; la tasa de muestreo
    se da como `sampling_rate` (q) o como `expected_batch_size` (q = |B|/N).
    """
    model_config = ConfigDict(extra="forbid")

    steps: Optional[int] = Field(default=None, ge=1)
    epochs: Optional[int] = Field(default=None, ge=1)
    sampling_rate: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    expected_batch_size: Optional[int] = Field(default=None, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    optimizer: Literal["sgd", "adam"] = "adam"
    beta1: float = Field(default=TRAIN_DEFAULTS["beta1"], ge=0.0, lt=1.0)
    beta2: float = Field(default=TRAIN_DEFAULTS["beta2"], ge=0.0, lt=1.0)
    eps_adam: float = Field(default=TRAIN_DEFAULTS["eps_adam"], gt=0.0)

    strategy: str = "softadaclip"
    clip_bound: float = Field(default=0.1, gt=0.0)
    noise_multiplier: Optional[float] = Field(default=None, ge=0.0)
    target_quantile: float = Field(default=CLIP_DEFAULTS["target_quantile"], gt=0.0, lt=1.0)
    eta_c: float = Field(default=CLIP_DEFAULTS["eta_c"], gt=0.0)
    sigma_b: Optional[float] = Field(default=None, ge=0.0)
    fraction_noise_std: float = Field(default=CLIP_DEFAULTS["fraction_noise_std"], ge=0.0)
    clamp_fraction: bool = False
    eps_div: float = Field(default=CLIP_DEFAULTS["eps_div"], gt=0.0)

    target_epsilon: Optional[float] = Field(default=None, gt=0.0)
    target_delta: float = Field(default=PRIVACY_DEFAULTS["delta"], gt=0.0, lt=1.0)
    adaptive_accounting: Literal["with", "without"] = "with"
    orders: Optional[List[int]] = None

    normalize_by: Literal["realized", "expected"] = "realized"
    patience: Optional[int] = Field(default=TRAIN_DEFAULTS["patience"], ge=1)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    chunk_size: int = Field(default=TRAIN_DEFAULTS["chunk_size"], ge=1)

    @model_validator(mode="after")
    def _check(self) -> 'TrainConfig':
        if self.strategy not in STRATEGIES:
            raise ValueError(f"Unknown strategy '{self.strategy}'. Use one of {sorted(STRATEGIES)}.")
        if self.steps is None and self.epochs is None:
            raise ValueError("Either 'steps' or 'epochs' must be set.")
        if (self.sampling_rate is None) == (self.expected_batch_size is None):
            raise ValueError("Set exactly one of 'sampling_rate' and 'expected_batch_size'.")
        if self.orders is not None and any(a < 2 for a in self.orders):
            raise ValueError("Renyi orders must be integers >= 2.")
        return self

    @property
    def adaptive(self) -> bool:
        return STRATEGIES[self.strategy].adaptive

    def resolve_q(self, N: int) -> float:
        if self.sampling_rate is not None:
            return float(self.sampling_rate)
        if self.expected_batch_size > N:
            raise ValueError(f"expected_batch_size {self.expected_batch_size} exceeds dataset size {N}.")
        return self.expected_batch_size / N

    def steps_per_epoch(self, N: int) -> int:
        return steps_per_epoch(self.resolve_q(N))

    def total_steps(self, N: int) -> int:
        if self.steps is not None:
            return int(self.steps)
        return int(self.epochs) * self.steps_per_epoch(N)

    def resolve_sigma_b(self, N: int) -> float:
        """σ_b explícito o fraction_noise_std × |B| esperado."""
        if self.sigma_b is not None:
            return float(self.sigma_b)
        return self.fraction_noise_std * self.resolve_q(N) * N

    def accounts_fraction(self) -> bool:
        return self.adaptive and self.adaptive_accounting == "with"

    @property
    def patience_or_inf(self) -> float:
        return math.inf if self.patience is None else self.patience
