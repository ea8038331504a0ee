"""Run configuration for the overloadsim command line"""
import hashlib
import tomllib
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from measures.cascades import BinningSpec


class PathsConfig(BaseModel):
    """Input files and output directory"""
    input_log: Optional[Path] = None
    network: Optional[Path] = None
    truth: Optional[Path] = None
    seeds_log: Optional[Path] = None  # training log for background initiation rates
    output_dir: Path = Path("outputs")


class SimulationSettings(BaseModel):
    horizon: int = Field(720, ge=1)
    m_max: int = Field(30, ge=1)
    alpha: float = Field(0.8, ge=0.0, le=1.0)
    start: datetime = datetime(2018, 6, 1, tzinfo=timezone.utc)
    response_selection: Literal["proportional", "max"] = "proportional"
    background_rate: float = Field(0.05, ge=0.0)  # used when no seeds log is given


class GridSettings(BaseModel):
    m_max_values: list[int] = Field(default_factory=lambda: list(range(5, 40, 5)))
    alpha_values: list[float] = Field(default_factory=lambda: [round(0.1 * i, 1) for i in range(10)])
    repetitions: int = Field(10, ge=1)


class InfluenceSettings(BaseModel):
    """Transfer entropy estimation"""
    k: int = Field(1, ge=1)
    threshold: float = Field(0.0, ge=0.0)
    permutations: int = Field(0, ge=0)


class SensitivitySettings(BaseModel):
    n_base: int = Field(256, ge=1)
    num_resamples: int = Field(1000, ge=1)


class Settings(BaseSettings):
    """Overloadsim configuration settings"""

    # Reproducibility
    seed: int = Field(0, ge=0, lt=2**64)

    # Workers
    jobs: int = Field(1, ge=1)

    # Logging
    verbosity: int = 0

    paths: PathsConfig = PathsConfig()
    simulation: SimulationSettings = SimulationSettings()
    grid: GridSettings = GridSettings()
    binning: BinningSpec = BinningSpec()
    influence: InfluenceSettings = InfluenceSettings()
    sensitivity: SensitivitySettings = SensitivitySettings()

    model_config = SettingsConfigDict(
        env_prefix="OVERLOADSIM_",
        env_nested_delimiter="__",
        env_file=".env",
        extra="ignore"  # Ignore extra fields from .env
    )

    def config_hash(self) -> str:
        """SHA-256 of the settings that affect results (workers and verbosity excluded)."""
        canonical = self.model_dump_json(exclude={"jobs", "verbosity"})
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(config_file: Optional[Path] = None, overrides: Optional[dict] = None) -> Settings:
    """
    Settings from a TOML file, command-line overrides and the environment.

    Flags override file values; environment variables (OVERLOADSIM_SEED,
    OVERLOADSIM_SIMULATION__HORIZON, ...) fill what neither sets.

    Example:
        settings = load_settings(Path("run.toml"), {"seed": 7, "simulation": {"alpha": 0.5}})
    """
    values: dict = {}
    if config_file is not None:
        config_file = Path(config_file)
        if not config_file.is_file():
            raise FileNotFoundError(f"Config file not found: {config_file}")
        with config_file.open("rb") as f:
            values = tomllib.load(f)
    if overrides:
        values = _merge(values, overrides)
    return Settings(**values)
