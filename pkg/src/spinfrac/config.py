"""Configuration."""

import os
from functools import cache
from pathlib import Path
from typing import Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class SettingsLogging(BaseModel):
    """Logging settings."""

    level: Literal["debug", "info", "warning", "error", "critical"] = "info"
    external_packages: Literal["debug", "info", "warning", "error", "critical"] = (
        "warning"
    )

    model_config = ConfigDict(frozen=True)


class SettingsOutput(BaseModel):
    """Where and how often run artifacts are written."""

    directory: Path = Path("results")
    vtk_every: int = Field(0, ge=0)
    # 17 significant digits round-trip a float64.
    float_format: str = "%.17g"

    model_config = ConfigDict(frozen=True)


class SettingsLinear(BaseModel):
    """Defaults of the linear algebra layer."""

    direct_dense_threshold: int = Field(2000, ge=0)
    preconditioner: Literal["none", "jacobi", "aggregation"] = "jacobi"
    aggregation_levels: int = Field(4, ge=1)
    gmres_restart: int = Field(200, ge=1)

    model_config = ConfigDict(frozen=True)


class Settings(BaseSettings):
    """All settings."""

    logging: SettingsLogging = SettingsLogging()  # has no required
    output: SettingsOutput = SettingsOutput()  # has no required
    linear: SettingsLinear = SettingsLinear()  # has no required

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="SPINFRAC__",
        env_nested_delimiter="__",
        frozen=True,
    )


@cache
def get_settings() -> Settings:
    """Load all parameters.

    Note that this function is cached and environment will be read just once.
    """
    return Settings()


# Load the remaining variables into the environment
# Necessary for things like OMP_NUM_THREADS picked up by the BLAS backend
config = dotenv_values()
for k, v in config.items():
    if k.lower().startswith("spinfrac_"):
        continue
    if v is None:
        continue
    os.environ[k] = os.environ.get(k, v)  # environment has precedence
