"""Model supplier registry.

A supplier is a small picklable object that builds one realization per
replica from a generator. Estimators and condition checks only talk to
suppliers, so they work unchanged across models.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from rangelab.ancestry import CONTINUOUS, DISCRETE, AncestralSystem
from rangelab.config import Config
from rangelab.exceptions import ConfigurationError, ModelNotFoundError
from rangelab.lattice import BRANCHING, OP, Kernel, ScalingFunction, kernel_make
from rangelab.logging import get_logger
from rangelab.models.brw import OffspringLaw, brw_sbm_params, offspring_law, simulate_brw
from rangelab.models.op import OpParams, simulate_op
from rangelab.models.voter import simulate_voter
from rangelab.sbm import SbmParams, voter_sbm_params

logger = get_logger(__name__)


@dataclass(frozen=True)
class ModelSpec:
    """Model tag, kernel parameters and model options."""

    model: str
    d: int = 3
    L: int = 1
    variant: str = "nearest-neighbor"
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_config(cls, model: str, config: Config) -> "ModelSpec":
        """Build a spec from the lattice section and the model's own section.

        Args:
            model: Registry tag
            config: Configuration

        Returns:
            ModelSpec
        """
        sections = {
            "voter": config.voter.model_dump(),
            "op": {**config.op.model_dump(), **config.scaling.model_dump()},
            "brw": config.brw.model_dump(),
            "gw": config.brw.model_dump(),
        }
        return cls(
            model=model,
            d=config.lattice.d,
            L=config.lattice.L,
            variant=config.lattice.variant,
            options=sections.get(model, {}),
        )

    def kernel(self) -> Kernel:
        return kernel_make(self.variant, self.d, self.L)


class ModelSupplier:
    """Base supplier: one realization per (replica, generator)."""

    name: str = "model"
    time_kind: str = DISCRETE
    spaceless: bool = False

    def __init__(self, kernel: Optional[Kernel]):
        self.kernel = kernel

    def simulate(self, replica: int, rng: np.random.Generator) -> AncestralSystem:
        raise NotImplementedError

    def scaling(self) -> ScalingFunction:
        raise NotImplementedError

    def sbm_params(self) -> SbmParams:
        raise NotImplementedError

    @property
    def horizon(self) -> float:
        raise NotImplementedError

    def with_horizon(self, horizon: float) -> "ModelSupplier":
        """Copy whose runs reach at least ``horizon``."""
        raise NotImplementedError

    def describe(self) -> Dict[str, Any]:
        return {
            "model": self.name,
            "time_kind": self.time_kind,
            "kernel": self.kernel.to_dict() if self.kernel is not None else None,
            "horizon": self.horizon,
        }


class VoterSupplier(ModelSupplier):
    """Voter model from a single 1 at the origin."""

    name = "voter"
    time_kind = CONTINUOUS

    def __init__(self, kernel: Kernel, t_max: float = 100.0, site_cap: int = 1_000_000):
        if kernel.d < 2:
            raise ConfigurationError(f"The voter model needs d >= 2, got {kernel.d}")
        super().__init__(kernel)
        self.t_max = float(t_max)
        self.site_cap = site_cap

    def simulate(self, replica: int, rng: np.random.Generator) -> AncestralSystem:
        return simulate_voter(self.kernel, rng, self.t_max, self.site_cap)

    def scaling(self) -> ScalingFunction:
        return ScalingFunction.for_voter(self.kernel.d)

    def sbm_params(self) -> SbmParams:
        return voter_sbm_params(self.kernel)

    @property
    def horizon(self) -> float:
        return self.t_max

    def with_horizon(self, horizon: float) -> "VoterSupplier":
        return VoterSupplier(self.kernel, max(self.t_max, float(horizon)), self.site_cap)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info["site_cap"] = self.site_cap
        return info


class OpSupplier(ModelSupplier):
    """Oriented percolation cluster of (0, o)."""

    name = "op"

    def __init__(self, params: OpParams, A: float = 1.0, V: float = 1.0):
        super().__init__(params.kernel)
        self.params = params
        self.A = A
        self.V = V

    def simulate(self, replica: int, rng: np.random.Generator) -> AncestralSystem:
        return simulate_op(self.params, rng)

    def scaling(self) -> ScalingFunction:
        return ScalingFunction(OP, A=self.A, V=self.V)

    def sbm_params(self) -> SbmParams:
        return SbmParams(gamma=1.0, sigma0_sq=self.V)

    @property
    def horizon(self) -> float:
        return float(self.params.n_max)

    def with_horizon(self, horizon: float) -> "OpSupplier":
        n_max = max(self.params.n_max, int(math.ceil(horizon)))
        return OpSupplier(replace(self.params, n_max=n_max), self.A, self.V)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"p": self.params.p, "A": self.A, "V": self.V})
        return info


class BrwSupplier(ModelSupplier):
    """Critical branching random walk."""

    name = "brw"

    def __init__(
        self,
        kernel: Optional[Kernel],
        offspring: str = "binary",
        n_max: int = 100,
        cap: int = 1_000_000,
    ):
        super().__init__(kernel)
        self.offspring = offspring
        offspring_law(offspring)
        self.n_max = n_max
        self.cap = cap

    @property
    def law(self) -> OffspringLaw:
        return offspring_law(self.offspring)

    def simulate(self, replica: int, rng: np.random.Generator) -> AncestralSystem:
        return simulate_brw(self.kernel, self.law, rng, self.n_max, self.cap)

    def scaling(self) -> ScalingFunction:
        return ScalingFunction(BRANCHING)

    def sbm_params(self) -> SbmParams:
        return brw_sbm_params(self.law, self.kernel)

    @property
    def horizon(self) -> float:
        return float(self.n_max)

    def with_horizon(self, horizon: float) -> "BrwSupplier":
        n_max = max(self.n_max, int(math.ceil(horizon)))
        return type(self)(self.kernel, self.offspring, n_max, self.cap)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"offspring": self.law.to_dict(), "cap": self.cap})
        return info


class GwSupplier(BrwSupplier):
    """Spaceless BRW: the Galton-Watson family tree, every particle at the origin."""

    name = "gw"
    spaceless = True

    def __init__(
        self,
        kernel: Optional[Kernel] = None,
        offspring: str = "binary",
        n_max: int = 100,
        cap: int = 1_000_000,
    ):
        super().__init__(None, offspring, n_max, cap)


def _voter(spec: ModelSpec) -> ModelSupplier:
    opts = spec.options
    return VoterSupplier(spec.kernel(), opts.get("t_max", 100.0), opts.get("site_cap", 1_000_000))


def _op(spec: ModelSpec) -> ModelSupplier:
    opts = spec.options
    params = OpParams(spec.kernel(), float(opts.get("p", 1.0)), int(opts.get("n_max", 100)))
    return OpSupplier(params, opts.get("A", 1.0), opts.get("V", 1.0))


def _brw(spec: ModelSpec) -> ModelSupplier:
    opts = spec.options
    return BrwSupplier(
        spec.kernel(),
        opts.get("offspring", "binary"),
        opts.get("n_max", 100),
        opts.get("cap", 1_000_000),
    )


def _gw(spec: ModelSpec) -> ModelSupplier:
    opts = spec.options
    return GwSupplier(
        None, opts.get("offspring", "binary"), opts.get("n_max", 100), opts.get("cap", 1_000_000)
    )


MODEL_REGISTRY = {"voter": _voter, "op": _op, "brw": _brw, "gw": _gw}


def load_model(spec: ModelSpec) -> ModelSupplier:
    """Build the supplier for a model spec.

    Args:
        spec: Model spec

    Returns:
        Validated ModelSupplier

    Raises:
        ModelNotFoundError: If the tag is not registered
        ConfigurationError: If the kernel or model options are invalid
    """
    if spec.model not in MODEL_REGISTRY:
        raise ModelNotFoundError(
            f"Unknown model: {spec.model}. Available: {sorted(MODEL_REGISTRY)}"
        )
    supplier = MODEL_REGISTRY[spec.model](spec)
    validate_model_interface(supplier)
    logger.info(f"Model supplier loaded: {spec.model} (d={spec.d}, L={spec.L}, {spec.variant})")
    return supplier


def validate_model_interface(model: Any) -> None:
    """Validate model implements required interface.

    Args:
        model: Supplier instance

    Raises:
        ConfigurationError: If the supplier doesn't implement required methods
    """
    required_methods = ["simulate", "scaling", "describe", "sbm_params", "with_horizon"]

    for method in required_methods:
        if not hasattr(model, method):
            raise ConfigurationError(f"Model must implement '{method}' method")

        if not callable(getattr(model, method)):
            raise ConfigurationError(f"Model.{method} must be callable")

    logger.debug("Model interface validated")
