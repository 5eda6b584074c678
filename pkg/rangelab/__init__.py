"""Range lab package.

Simulation and exact-verification laboratory for critical lattice models
(voter model, oriented percolation, branching random walk, lattice trees)
whose rescaled ranges converge to the range of super-Brownian motion.
"""

__version__ = "1.0.0"

from rangelab.ancestry import AncestralSystem, check_ar_axioms, rescale
from rangelab.config import Config, get_config, load_config, set_config
from rangelab.exceptions import (
    ArtifactNotFoundError,
    CompositionViolationError,
    ConfigurationError,
    GuardRefusalError,
    ModelNotFoundError,
    PreconditionError,
    RangeLabError,
    ShootingError,
    UnsupportedConditionError,
)
from rangelab.farm import ReplicaFarm
from rangelab.lattice import Kernel, ScalingFunction, kernel_make
from rangelab.loader import ModelSpec, load_model, validate_model_interface
from rangelab.logging import get_logger, setup_logging
from rangelab.types import Curve, EstimatorReport, ExperimentManifest

__all__ = [
    # Version
    "__version__",
    # Config
    "Config",
    "get_config",
    "load_config",
    "set_config",
    # Exceptions
    "RangeLabError",
    "ConfigurationError",
    "PreconditionError",
    "GuardRefusalError",
    "UnsupportedConditionError",
    "ShootingError",
    "CompositionViolationError",
    "ModelNotFoundError",
    "ArtifactNotFoundError",
    # Lattice and ancestry
    "Kernel",
    "ScalingFunction",
    "kernel_make",
    "AncestralSystem",
    "check_ar_axioms",
    "rescale",
    # Loader
    "ModelSpec",
    "load_model",
    "validate_model_interface",
    # Farm
    "ReplicaFarm",
    # Logging
    "setup_logging",
    "get_logger",
    # Types
    "Curve",
    "EstimatorReport",
    "ExperimentManifest",
]
