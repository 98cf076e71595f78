# src/cli/experiment_config.py
"""
Archivo de experimento (YAML) con secciones data, model, privacy, clip, train y analysis.
Cada sección es un modelo pydantic que rechaza claves desconocidas.
"""
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.common.exceptions import ConfigError
from src.engine.config import TrainConfig
from config.setting import CLIP_DEFAULTS, PRIVACY_DEFAULTS, TRAIN_DEFAULTS


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticSection(_Section):
    preset: Optional[str] = "minority-hard"
    n: int = Field(default=20000, ge=1)
    dim: int = Field(default=20, ge=1)
    minority_rate: Optional[float] = None
    shift: Optional[float] = None
    majority_noise: Optional[float] = None
    minority_noise: Optional[float] = None
    class_balance: float = 0.5
    feature_scale: Optional[float] = None
    seed: int = 0


class DataSection(_Section):
    source: Literal["synthetic", "adult", "cache"] = "synthetic"
    name: Optional[str] = None
    path: Optional[str] = None
    has_header: bool = True
    synthetic: SyntheticSection = Field(default_factory=SyntheticSection)
    balance_attribute: Optional[str] = None
    fractions: List[float] = [0.7, 0.1, 0.2]
    split_seed: int = 0
    exclude_protected: bool = True

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.source == "synthetic":
            return f"synthetic-{self.synthetic.preset or 'custom'}"
        return self.source


class ModelSection(_Section):
    preset: Literal["income-simple", "income-complex", "eicu-complex", "linear"] = "income-simple"
    groups: int = Field(default=8, ge=1)
    hidden: Optional[List[int]] = None


class PrivacySection(_Section):
    epsilon: Optional[float] = Field(default=PRIVACY_DEFAULTS["epsilon"], gt=0.0)
    delta: float = Field(default=PRIVACY_DEFAULTS["delta"], gt=0.0, lt=1.0)
    noise_multiplier: Optional[float] = Field(default=None, ge=0.0)
    orders: Optional[List[int]] = None
    adaptive_accounting: Literal["with", "without"] = "with"


class ClipSection(_Section):
    strategy: Literal["hard", "soft-fixed", "adaptive-hard", "softadaclip"] = "softadaclip"
    clip_bound: float = Field(default=0.1, gt=0.0)
    target_quantile: float = Field(default=CLIP_DEFAULTS["target_quantile"], gt=0.0, lt=1.0)
    eta_c: float = Field(default=CLIP_DEFAULTS["eta_c"], gt=0.0)
    sigma_b: Optional[float] = Field(default=None, ge=0.0)
    fraction_noise_std: float = Field(default=CLIP_DEFAULTS["fraction_noise_std"], ge=0.0)
    clamp_fraction: bool = False
    eps_div: float = Field(default=CLIP_DEFAULTS["eps_div"], gt=0.0)


class TrainSection(_Section):
    steps: Optional[int] = Field(default=None, ge=1)
    epochs: Optional[int] = Field(default=None, ge=1)
    sampling_rate: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    expected_batch_size: Optional[int] = Field(default=None, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    optimizer: Literal["sgd", "adam"] = "adam"
    beta1: float = TRAIN_DEFAULTS["beta1"]
    beta2: float = TRAIN_DEFAULTS["beta2"]
    eps_adam: float = TRAIN_DEFAULTS["eps_adam"]
    normalize_by: Literal["realized", "expected"] = "realized"
    patience: Optional[int] = Field(default=TRAIN_DEFAULTS["patience"], ge=1)
    seed: int = 0
    chunk_size: int = Field(default=TRAIN_DEFAULTS["chunk_size"], ge=1)


class AnalysisSection(_Section):
    attributes: List[str] = ["sex", "age_group"]
    split: Literal["train", "validation", "test"] = "test"
    mean_reduction: bool = False
    reference: str = "softadaclip"


class ExperimentConfig(_Section):
    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    privacy: Optional[PrivacySection] = None
    clip: ClipSection = Field(default_factory=ClipSection)
    train: TrainSection
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)


def parse_experiment(document: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(document or {})
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e


def load_experiment(path: str) -> ExperimentConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e
    if document is not None and not isinstance(document, dict):
        raise ConfigError(f"Config file {path} must contain a mapping of sections.")
    return parse_experiment(document)


def dump_experiment(exp: ExperimentConfig) -> str:
    return yaml.safe_dump(exp.model_dump(mode="json"), sort_keys=False)


def to_train_config(exp: ExperimentConfig, seed: Optional[int] = None, threads: int = 1,
                    orders: Optional[List[int]] = None) -> TrainConfig:
    """
    Traduce las secciones del experimento al TrainConfig validado del motor.
    Sin sección [privacy] el TrainConfig queda sin σ ni objetivo; el motor lo rechaza al entrenar.
    """
    privacy = exp.privacy
    privacy_kwargs: dict = {"orders": orders}
    if privacy is not None:
        privacy_kwargs = {
            "noise_multiplier": privacy.noise_multiplier,
            "target_epsilon": privacy.epsilon if privacy.noise_multiplier is None else None,
            "target_delta": privacy.delta,
            "adaptive_accounting": privacy.adaptive_accounting,
            "orders": orders if orders is not None else privacy.orders,
        }
    train = exp.train.model_dump()
    train["seed"] = train["seed"] if seed is None else seed
    clip = exp.clip.model_dump()
    try:
        return TrainConfig(threads=threads, **train, **clip, **privacy_kwargs)
    except ValidationError as e:
        raise ConfigError(f"Invalid training configuration: {e}") from e
