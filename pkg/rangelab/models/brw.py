"""Critical branching random walk, the lattice surrogate for super-Brownian motion.

Each particle of generation i independently leaves a critical number of
children, each displaced from the parent by an independent kernel step.
Parameter dictionary at scale n (time nt, space sqrt(n), mass 1/n) with
m(t) = t v 1: offspring variance s2 gives (gamma, sigma0^2) = (s2, sigma^2)
and s_D = 2/s2.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Set, Tuple

import numpy as np

from rangelab.ancestry import GenerationalSystem
from rangelab.config import OFFSPRING_LAWS
from rangelab.exceptions import ConfigurationError
from rangelab.lattice import Kernel, Site, origin
from rangelab.logging import get_logger
from rangelab.sbm import SbmParams

logger = get_logger(__name__)


@dataclass(frozen=True)
class OffspringLaw:
    """Critical offspring distribution."""

    name: str
    variance: float
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    pgf: Callable[[float], float]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.sampler(rng, size)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "mean": 1.0, "variance": self.variance}


def _binary(rng: np.random.Generator, size: int) -> np.ndarray:
    return 2 * rng.integers(0, 2, size=size)


def _geometric(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.geometric(0.5, size=size) - 1


_LAWS = {
    "binary": OffspringLaw("binary", 1.0, _binary, lambda s: 0.5 * (1.0 + s * s)),
    "geometric": OffspringLaw("geometric", 2.0, _geometric, lambda s: 1.0 / (2.0 - s)),
}


def offspring_law(name: str) -> OffspringLaw:
    """Look up an offspring law by name.

    Raises:
        ConfigurationError: If the law is unknown
    """
    law = _LAWS.get(name)
    if law is None:
        raise ConfigurationError(
            f"Unknown offspring law: {name}. Must be one of {list(OFFSPRING_LAWS)}"
        )
    return law


def brw_sbm_params(law: OffspringLaw, kernel: Optional[Kernel]) -> SbmParams:
    """SBM parameters (gamma, sigma0^2) matched to a BRW."""
    sigma2 = float(kernel.sigma2) if kernel is not None else 1.0
    return SbmParams(gamma=law.variance, sigma0_sq=sigma2)


class BrwRealization(GenerationalSystem):
    """Family tree of one BRW run.

    Particles are kept per generation as position arrays with the index of
    their parent in the previous generation. Ancestry is site-level
    reachability; mass is the particle count.
    """

    model_tag = "brw"

    def __init__(
        self,
        law: OffspringLaw,
        kernel: Optional[Kernel],
        positions: List[np.ndarray],
        parent_index: List[np.ndarray],
        n_max: int,
        truncated: bool = False,
        d: int = 1,
    ):
        d = kernel.d if kernel is not None else d
        generations, parents = _site_view(positions, parent_index, d)
        super().__init__(d, generations, parents, truncated)
        self.law = law
        self.kernel = kernel
        self.positions = positions
        self.parent_index = parent_index
        self.n_max = n_max

    @property
    def spaceless(self) -> bool:
        return self.kernel is None

    def mass(self, t: float) -> float:
        i = int(np.floor(t))
        if i < 0:
            return 0.0
        if i < len(self.positions):
            return float(len(self.positions[i]))
        return float(len(self.occupied(t)))

    def masses(self) -> np.ndarray:
        """Particle counts per stored generation."""
        return np.array([len(p) for p in self.positions], dtype=float)

    def log_header(self) -> Dict[str, Any]:
        header = super().log_header()
        header.update(
            {
                "law": self.law.name,
                "kernel": self.kernel.to_dict() if self.kernel is not None else None,
                "n_max": self.n_max,
            }
        )
        return header

    def event_records(self) -> List[Dict[str, Any]]:
        records = []
        for i in range(1, len(self.positions)):
            for site, parent in zip(self.positions[i].tolist(), self.parent_index[i].tolist()):
                records.append({"time": i, "kind": "birth", "site": site, "parent": parent})
        return records

    @classmethod
    def from_event_log(
        cls, header: Dict[str, Any], records: List[Dict[str, Any]]
    ) -> "BrwRealization":
        """Replay a persisted birth log."""
        kernel = Kernel.from_dict(header["kernel"]) if header.get("kernel") else None
        d = int(header["d"])
        horizon = int(header["horizon"])
        sites: List[List[List[int]]] = [[] for _ in range(horizon + 1)]
        parents: List[List[int]] = [[] for _ in range(horizon + 1)]
        for r in records:
            sites[r["time"]].append(r["site"])
            parents[r["time"]].append(r["parent"])
        positions = [np.zeros((1, d), dtype=np.int64)]
        parent_index = [np.zeros(0, dtype=np.int64)]
        for i in range(1, horizon + 1):
            positions.append(np.asarray(sites[i], dtype=np.int64).reshape(-1, d))
            parent_index.append(np.asarray(parents[i], dtype=np.int64))
        return cls(
            offspring_law(header["law"]),
            kernel,
            positions,
            parent_index,
            int(header["n_max"]),
            truncated=bool(header.get("truncated")),
            d=d,
        )


def _site_view(
    positions: List[np.ndarray], parent_index: List[np.ndarray], d: int
) -> Tuple[List[FrozenSet[Site]], Dict[Tuple[int, Site], FrozenSet[Site]]]:
    """Collapse particles to occupied sites and a site-level parent map."""
    generations: List[FrozenSet[Site]] = [frozenset({origin(d)})]
    parents: Dict[Tuple[int, Site], FrozenSet[Site]] = {}
    for i in range(1, len(positions)):
        child = positions[i]
        if len(child) == 0:
            generations.append(frozenset())
            continue
        pairs = np.unique(np.hstack([child, positions[i - 1][parent_index[i]]]), axis=0)
        links: Dict[Site, Set[Site]] = {}
        for row in pairs.tolist():
            links.setdefault(tuple(row[:d]), set()).add(tuple(row[d:]))
        for x, ps in links.items():
            parents[(i, x)] = frozenset(ps)
        generations.append(frozenset(links))
    return generations, parents


def simulate_brw(
    kernel: Optional[Kernel],
    law: OffspringLaw,
    rng: np.random.Generator,
    n_max: int,
    cap: int = 1_000_000,
    d: int = 1,
) -> BrwRealization:
    """Run a critical BRW from one particle at the origin.

    Args:
        kernel: Step kernel; None keeps every particle at the origin
        law: Critical offspring law
        rng: Generator for this replica
        n_max: Generation horizon
        cap: Maximum cumulative particle count
        d: Dimension when kernel is None

    Returns:
        BrwRealization, flagged truncated when the cap is hit
    """
    if n_max < 1:
        raise ConfigurationError(f"n_max must be >= 1, got {n_max}")
    dim = kernel.d if kernel is not None else d
    positions = [np.zeros((1, dim), dtype=np.int64)]
    parent_index = [np.zeros(0, dtype=np.int64)]
    total = 1
    truncated = False
    for i in range(1, n_max + 1):
        current = positions[-1]
        if len(current) == 0:
            break
        counts = law.sample(rng, len(current))
        born = int(counts.sum())
        if total + born > cap:
            truncated = True
            logger.debug(f"BRW run hit particle cap {cap} at generation {i}")
            break
        idx = np.repeat(np.arange(len(current)), counts)
        child = current[idx]
        if kernel is not None and born:
            child = child + kernel.sample_steps(rng, born)
        positions.append(child.astype(np.int64))
        parent_index.append(idx.astype(np.int64))
        total += born
    return BrwRealization(law, kernel, positions, parent_index, n_max, truncated=truncated, d=dim)


def simulate_gw(law: OffspringLaw, rng: np.random.Generator, n_max: int, cap: int = 1_000_000):
    """Spaceless BRW: a Galton-Watson family tree with every particle at the origin."""
    return simulate_brw(None, law, rng, n_max, cap, d=1)


def brw_ancestral(realization: BrwRealization) -> BrwRealization:
    """The ancestral system of a BRW (its site-level family tree)."""
    return realization


def gw_survival(law: OffspringLaw, n: int) -> np.ndarray:
    """Exact survival probabilities theta(0..n) from the pgf recursion.

    theta(k+1) = 1 - f(1 - theta(k)); for geometric(1/2) offspring this is
    1/(k+1).
    """
    theta = np.empty(n + 1)
    theta[0] = 1.0
    for k in range(n):
        theta[k + 1] = 1.0 - law.pgf(1.0 - theta[k])
    return theta
