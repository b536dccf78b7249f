import logging
import logging.config
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from dotenv import dotenv_values
from pydantic import Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from errors import ConfigError

LOG_LEVELS = ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG")

class Settings(BaseSettings):
    # Application
    app_name: str = "DDMP"
    app_version: str = "1.0.0"

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"

    class Config:
        env_file = ".env"
        env_prefix = "DDMP_"
        case_sensitive = False
        extra = "ignore"


class TrainConfig(BaseSettings):
    """
    Every parameter of a pipeline run

    Values come from (highest priority first) CLI flags, a flat key=value
    config file, DDMP_* environment variables / .env, then the defaults below.
    """

    # Training loop
    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=256, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    seed: int = Field(default=0, ge=0)

    # Diffusion
    timesteps: int = Field(default=1000, ge=1)
    beta_start: float = Field(default=1e-4, gt=0, lt=1)
    beta_end: float = Field(default=0.02, gt=0, lt=1)
    trajectory_length: int = Field(default=10, ge=1)
    clip_min: float = -1.0
    clip_max: float = 2.0
    one_hot_targets: bool = False

    # Disambiguation
    k: int = Field(default=10, ge=1)
    q: Optional[float] = Field(default=None, ge=0, le=1)
    lam: float = Field(default=0.05, ge=0, le=1)
    use_complementarity: bool = True
    use_transition: bool = True
    warmup_epochs: int = Field(default=10, ge=0)
    update_every: int = Field(default=1, ge=1)
    update_draws: int = Field(default=1, ge=1)
    self_loops: bool = False
    knn_space: Literal["features", "prior"] = "features"

    # Noise network
    hidden_dim: int = Field(default=128, ge=1)
    time_dim: int = Field(default=64, ge=2)
    n_tokens: int = Field(default=4, ge=1)
    ff_blocks: int = Field(default=2, ge=1)

    # Prior encoder
    encoder_hidden: int = Field(default=128, ge=1)
    encoder_epochs: int = Field(default=50, ge=1)
    encoder_lr: float = Field(default=1e-3, gt=0)

    # Evaluation
    n_draws: int = Field(default=10, ge=1)
    n_bins: int = Field(default=10, ge=1)
    folds: int = Field(default=10, ge=2)
    test_fraction: float = Field(default=0.2, gt=0, lt=1)

    # Data / output
    standardize: bool = True
    dump_state: bool = False

    class Config:
        env_file = ".env"
        env_prefix = "DDMP_"
        case_sensitive = False
        extra = "ignore"

    @field_validator("time_dim")
    @classmethod
    def validate_time_dim(cls, v):
        if v % 2:
            raise ValueError("time embedding dimension must be even")
        return v

    @model_validator(mode="after")
    def validate_relations(self):
        if self.beta_start > self.beta_end:
            raise ValueError("beta_start must not exceed beta_end")
        if self.hidden_dim % self.n_tokens:
            raise ValueError("hidden_dim must be divisible by n_tokens")
        if self.clip_min >= self.clip_max:
            raise ValueError("clip_min must be below clip_max")
        return self


class SynthConfig(BaseSettings):
    """Parameters of the synthetic blob + partialization generator"""

    n: int = Field(default=2000, ge=2)
    classes: int = Field(default=4, ge=2)
    dim: int = Field(default=8, ge=1)
    separation: float = Field(default=6.0, ge=0)
    q: float = Field(default=0.3, ge=0, le=1)
    test_fraction: float = Field(default=0.2, gt=0, lt=1)
    seed: int = Field(default=0, ge=0)

    class Config:
        env_prefix = "DDMP_"
        case_sensitive = False
        extra = "ignore"

    @model_validator(mode="after")
    def validate_sizes(self):
        if self.classes > self.n:
            raise ValueError("classes must not exceed n")
        return self


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a flat `key = value` config file

    Keys are normalized to field names: lower case, dashes become underscores.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")

    values = dotenv_values(path)
    return {
        key.strip().lower().replace("-", "_"): value
        for key, value in values.items()
        if value is not None
    }


def flag_name(field: str) -> str:
    return "--" + field.replace("_", "-")


def build_config(model_cls, overrides: Optional[Dict[str, Any]] = None,
                 config_file: Optional[Union[str, Path]] = None,
                 base: Optional[Dict[str, Any]] = None):
    """
    Build a config model from a config file plus explicit overrides

    Overrides win over file values, file values over `base` (e.g. the config
    stored with a checkpoint); missing keys fall back to the environment and the
    model defaults. Validation failures become ConfigError naming the flag.
    """
    values: Dict[str, Any] = dict(base or {})
    if config_file:
        values.update(load_config_file(config_file))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    known = {key: value for key, value in values.items() if key in model_cls.model_fields}

    try:
        return model_cls(**known)
    except ValidationError as e:
        problems = []
        for err in e.errors():
            loc = err.get("loc") or ()
            where = flag_name(str(loc[0])) if loc else "config"
            problems.append(f"{where}: {err.get('msg')}")
        raise ConfigError("; ".join(problems)) from e


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging once per process"""
    settings = get_settings()
    level = (level or settings.log_level).upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"--log-level: unknown level '{level}'")

    logging.config.dictConfig({
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {"default": {"format": settings.log_format}},
        "handlers": {
            "stderr": {
                "class": "logging.StreamHandler",
                "formatter": "default",
                "stream": "ext://sys.stderr",
            }
        },
        "root": {"level": level, "handlers": ["stderr"]},
    })


@lru_cache()
def get_settings() -> Settings:
    return Settings()
