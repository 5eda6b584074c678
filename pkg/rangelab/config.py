"""Configuration management for rangelab."""

import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from rangelab.exceptions import ConfigurationError

KERNEL_VARIANTS = ("nearest-neighbor", "spread-out-uniform")
OFFSPRING_LAWS = ("binary", "geometric")


class ExperimentConfig(BaseModel):
    """Experiment-level configuration."""

    seed: int = 7
    experiment_id: str = "default"
    replicas: int = 1000
    workers: int = 1

    @field_validator("replicas", "workers")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        """Validate replica and worker counts."""
        if v < 1:
            raise ValueError(f"Must be at least 1, got {v}")
        return v


class LatticeConfig(BaseModel):
    """Lattice and step-kernel configuration."""

    d: int = 3
    L: int = 1
    variant: str = "nearest-neighbor"

    @field_validator("variant")
    @classmethod
    def validate_variant(cls, v: str) -> str:
        """Validate kernel variant."""
        if v not in KERNEL_VARIANTS:
            raise ValueError(f"Invalid kernel variant: {v}. Must be one of {list(KERNEL_VARIANTS)}")
        return v


class VoterConfig(BaseModel):
    """Voter model configuration."""

    t_max: float = 100.0
    site_cap: int = 1_000_000


class OpConfig(BaseModel):
    """Oriented percolation configuration."""

    p: float = 1.0
    n_max: int = 100


class BrwConfig(BaseModel):
    """Branching random walk configuration."""

    offspring: str = "binary"
    n_max: int = 100
    cap: int = 1_000_000

    @field_validator("offspring")
    @classmethod
    def validate_offspring(cls, v: str) -> str:
        """Validate offspring law."""
        if v not in OFFSPRING_LAWS:
            raise ValueError(f"Invalid offspring law: {v}. Must be one of {list(OFFSPRING_LAWS)}")
        return v


class TreeConfig(BaseModel):
    """Lattice tree laboratory configuration."""

    z: str = "1/4"
    depth: int = 6

    @field_validator("z")
    @classmethod
    def validate_z(cls, v: str) -> str:
        """Validate that the activity parses as a positive rational."""
        if Fraction(v) <= 0:
            raise ValueError(f"Activity z must be positive, got {v}")
        return v

    def activity(self) -> Fraction:
        """Get the activity as an exact rational."""
        return Fraction(self.z)


class SbmConfig(BaseModel):
    """Super-Brownian reference configuration."""

    gamma: float = 1.0
    sigma0_sq: float = 1.0
    tol: float = 1e-8


class ScalingConfig(BaseModel):
    """Lattice-tree scaling constants."""

    A: float = 1.0
    V: float = 1.0


class LoggingConfig(BaseModel):
    """Logging configuration."""

    level: str = "INFO"
    format: str = "json"
    output: str = "stdout"

    @field_validator("level")
    @classmethod
    def validate_level(cls, v: str) -> str:
        """Validate logging level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        v = v.upper()
        if v not in valid_levels:
            raise ValueError(f"Invalid log level: {v}. Must be one of {valid_levels}")
        return v


class MetricsConfig(BaseModel):
    """Metrics configuration."""

    enabled: bool = True


class OutputConfig(BaseSettings):
    """Output configuration.

    The output root is the only setting read from the environment
    (``RANGELAB_OUTPUT_DIR``).
    """

    model_config = SettingsConfigDict(env_prefix="RANGELAB_OUTPUT_", case_sensitive=False)

    dir: str = "results"


# Sections excluded from the experiment hash
_UNHASHED_SECTIONS = {"logging", "metrics", "output"}


class Config(BaseModel):
    """Main configuration class."""

    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)
    lattice: LatticeConfig = Field(default_factory=LatticeConfig)
    voter: VoterConfig = Field(default_factory=VoterConfig)
    op: OpConfig = Field(default_factory=OpConfig)
    brw: BrwConfig = Field(default_factory=BrwConfig)
    tree: TreeConfig = Field(default_factory=TreeConfig)
    sbm: SbmConfig = Field(default_factory=SbmConfig)
    scaling: ScalingConfig = Field(default_factory=ScalingConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("output", mode="before")
    @classmethod
    def build_output(cls, v: Any) -> Any:
        """Build the output section through the settings loader so the env root applies."""
        if isinstance(v, dict):
            return OutputConfig(**v)
        return v

    @classmethod
    def from_yaml(cls, config_path: str) -> "Config":
        """Load configuration from YAML file.

        Args:
            config_path: Path to configuration file

        Returns:
            Config instance

        Raises:
            FileNotFoundError: If config file doesn't exist
            ConfigurationError: If config file is invalid
        """
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {config_path}")

        with open(path) as f:
            data = yaml.safe_load(f) or {}

        # Handle 'extends' directive
        if "extends" in data:
            base_path = path.parent / data.pop("extends")
            if base_path.exists():
                base = cls.from_yaml(str(base_path))
                data = cls._merge_configs(base.model_dump(), data)

        try:
            return cls(**data)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid config {config_path}: {e}")

    @staticmethod
    def _merge_configs(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        """Recursively merge configuration dictionaries.

        Args:
            base: Base configuration
            override: Override configuration

        Returns:
            Merged configuration
        """
        result = base.copy()
        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = Config._merge_configs(result[key], value)
            else:
                result[key] = value
        return result

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Config":
        """Return a copy with dotted-key overrides applied.

        Args:
            overrides: Mapping like ``{"lattice.d": 2}``; ``None`` values are skipped

        Returns:
            New validated Config

        Raises:
            ConfigurationError: If a key is unknown or a value is invalid
        """
        nested: Dict[str, Any] = {}
        for dotted, value in overrides.items():
            if value is None:
                continue
            section, _, key = dotted.partition(".")
            if section not in type(self).model_fields or not key:
                raise ConfigurationError(f"Unknown config key: {dotted}")
            nested.setdefault(section, {})[key] = value
        try:
            return Config(**self._merge_configs(self.model_dump(), nested))
        except ValidationError as e:
            raise ConfigurationError(f"Invalid override: {e}")

    def config_hash(self) -> str:
        """Hash every semantically relevant field.

        Returns:
            Hex SHA-256 digest of the canonical JSON snapshot
        """
        data = self.model_dump(exclude=_UNHASHED_SECTIONS)
        data["experiment"].pop("workers", None)
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(config_path: Optional[str] = None, env: Optional[str] = None) -> Config:
    """Load configuration from file or environment name.

    Args:
        config_path: Path to configuration file
        env: Environment name (dev, prod, etc.)

    Returns:
        Config instance
    """
    if config_path:
        return Config.from_yaml(config_path)

    if env:
        config_dir = Path(__file__).parent.parent / "configs"
        config_file = config_dir / f"{env}.yaml"
        if config_file.exists():
            return Config.from_yaml(str(config_file))

    return Config()


# Global config instance
_config: Optional[Config] = None


def get_config() -> Config:
    """Get global configuration instance."""
    global _config
    if _config is None:
        _config = load_config()
    return _config


def set_config(config: Config) -> None:
    """Set global configuration instance."""
    global _config
    _config = config
