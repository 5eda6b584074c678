"""Lattice geometry, step kernels, scaling functions and the Hausdorff metric."""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree, distance_matrix

from rangelab.exceptions import ConfigurationError
from rangelab.logging import get_logger

logger = get_logger(__name__)

Site = Tuple[int, ...]

NEAREST_NEIGHBOR = "nearest-neighbor"
SPREAD_OUT = "spread-out-uniform"

# Total point count above which point-to-set distances use a k-d tree
SPATIAL_INDEX_THRESHOLD = 10_000
_CHUNK_ROWS = 1024


def origin(d: int) -> Site:
    """Return the origin of Z^d."""
    return (0,) * d


def add(x: Site, y: Site) -> Site:
    """Site addition."""
    return tuple(a + b for a, b in zip(x, y))


def sub(x: Site, y: Site) -> Site:
    """Site difference x - y."""
    return tuple(a - b for a, b in zip(x, y))


def neg(x: Site) -> Site:
    """Site negation."""
    return tuple(-a for a in x)


def sup_norm(x: Site) -> int:
    """The l-infinity norm."""
    return max((abs(a) for a in x), default=0)


def norm_sq(x: Sequence[float]) -> float:
    """Squared Euclidean norm."""
    return float(sum(a * a for a in x))


@dataclass(frozen=True)
class Kernel:
    """Finite-range symmetric step distribution on Z^d.

    Weights are exact rationals; floating-point probabilities are derived
    only for sampling.
    """

    variant: str
    d: int
    L: int
    weights: Dict[Site, Fraction] = field(compare=False, hash=False, repr=False)
    sigma2: Fraction = Fraction(0)

    @property
    def support(self) -> List[Site]:
        """Support sites in canonical (sorted) order."""
        return sorted(self.weights)

    @property
    def origin(self) -> Site:
        return origin(self.d)

    def weight(self, x: Site) -> Fraction:
        """D(x) as an exact rational."""
        return self.weights.get(tuple(x), Fraction(0))

    def max_weight(self) -> Fraction:
        """max_x D(x)."""
        return max(self.weights.values())

    def support_array(self) -> np.ndarray:
        """Support as an integer array of shape (|support|, d)."""
        return np.array(self.support, dtype=np.int64).reshape(-1, self.d)

    def probabilities(self) -> np.ndarray:
        """Support probabilities aligned with support_array()."""
        return np.array([float(self.weights[x]) for x in self.support])

    def sample_steps(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw i.i.d. steps.

        Args:
            rng: Random generator
            size: Number of steps

        Returns:
            Integer array of shape (size, d)
        """
        steps = self.support_array()
        idx = rng.choice(len(steps), size=size, p=self.probabilities())
        return steps[idx]

    def covariance(self) -> List[List[Fraction]]:
        """Exact covariance matrix by direct summation."""
        cov = [[Fraction(0)] * self.d for _ in range(self.d)]
        for x, w in self.weights.items():
            for i in range(self.d):
                for j in range(self.d):
                    cov[i][j] += x[i] * x[j] * w
        return cov

    def is_nearest_neighbor(self) -> bool:
        return self.variant == NEAREST_NEIGHBOR

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation (parameters only)
        """
        return {
            "variant": self.variant,
            "d": self.d,
            "L": self.L,
            "sigma2": f"{self.sigma2.numerator}/{self.sigma2.denominator}",
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Kernel":
        """Rebuild a kernel from its parameter record."""
        return kernel_make(data["variant"], int(data["d"]), int(data["L"]))


def kernel_make(variant: str, d: int, L: int) -> Kernel:
    """Construct a step kernel.

    Args:
        variant: "nearest-neighbor" or "spread-out-uniform"
        d: Dimension
        L: Range

    Returns:
        Kernel with exact weights and sigma^2

    Raises:
        ConfigurationError: If the dimension, range or variant is invalid
    """
    if d < 1:
        raise ConfigurationError(f"Dimension must be >= 1, got {d}")
    if L < 1:
        raise ConfigurationError(f"Range must be >= 1, got {L}")

    weights: Dict[Site, Fraction] = {}
    if variant == NEAREST_NEIGHBOR:
        if L != 1:
            raise ConfigurationError(f"Nearest-neighbor kernel requires L = 1, got {L}")
        w = Fraction(1, 2 * d)
        for i in range(d):
            for sign in (1, -1):
                x = [0] * d
                x[i] = sign
                weights[tuple(x)] = w
    elif variant == SPREAD_OUT:
        box = [x for x in itertools.product(range(-L, L + 1), repeat=d) if any(x)]
        w = Fraction(1, len(box))
        for x in box:
            weights[x] = w
    else:
        raise ConfigurationError(f"Unknown kernel variant: {variant}")

    sigma2 = sum((x[0] * x[0] * w for x, w in weights.items()), Fraction(0))
    logger.debug(f"Kernel built: {variant} d={d} L={L} sigma2={sigma2}")
    return Kernel(variant=variant, d=d, L=L, weights=weights, sigma2=sigma2)


# Scaling functions

VOTER_D2 = "voter-d2"
VOTER_DGE3 = "voter-dge3"
LATTICE_TREE = "lattice-tree"
OP = "op"
BRANCHING = "branching"

SCALING_TAGS = (VOTER_D2, VOTER_DGE3, LATTICE_TREE, OP, BRANCHING)


@dataclass(frozen=True)
class ScalingFunction:
    """The normalization m(t) of a model family."""

    tag: str
    A: float = 1.0
    V: float = 1.0

    def __post_init__(self):
        if self.tag not in SCALING_TAGS:
            raise ConfigurationError(f"Unknown scaling tag: {self.tag}")

    def __call__(self, t: float) -> float:
        return scaling_m(self, t)

    @classmethod
    def for_voter(cls, d: int) -> "ScalingFunction":
        """Scaling function of the voter model in dimension d >= 2."""
        if d < 2:
            raise ConfigurationError(f"Voter scaling needs d >= 2, got {d}")
        return cls(VOTER_D2 if d == 2 else VOTER_DGE3)


def scaling_m(sf: ScalingFunction, t: float) -> float:
    """Evaluate m(t).

    Args:
        sf: Scaling function
        t: Time, t >= 0

    Returns:
        m(t)
    """
    if t < 0:
        raise ConfigurationError(f"Scaling function needs t >= 0, got {t}")
    if sf.tag == VOTER_D2:
        u = max(t, math.e)
        return u / math.log(u)
    if sf.tag in (VOTER_DGE3, BRANCHING):
        return max(t, 1.0)
    return sf.A * sf.A * sf.V * max(t, 1.0)


def mdef_constant(sf: ScalingFunction, grid: Iterable[float]) -> float:
    """Smallest c with m(s) <= c*s over the grid points s >= 1.

    Args:
        sf: Scaling function
        grid: Evaluation points

    Returns:
        sup of m(s)/s over grid points with s >= 1
    """
    ratios = [scaling_m(sf, s) / s for s in grid if s >= 1]
    return max(ratios) if ratios else 0.0


# Point sets and the Hausdorff metric


def as_point_array(points: Any, d: int = 0) -> np.ndarray:
    """Normalize a point collection to a duplicate-free float array.

    Args:
        points: Iterable of coordinate sequences or an array
        d: Dimension used for empty input

    Returns:
        Array of shape (k, d)
    """
    arr = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, max(d, arr.shape[-1] if arr.ndim == 2 else 0)))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return np.unique(arr, axis=0)


def _nearest_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point of a to the set b."""
    if len(a) + len(b) >= SPATIAL_INDEX_THRESHOLD:
        dist, _ = cKDTree(b).query(a)
        return np.asarray(dist)
    out = np.empty(len(a))
    for start in range(0, len(a), _CHUNK_ROWS):
        block = distance_matrix(a[start : start + _CHUNK_ROWS], b)
        out[start : start + _CHUNK_ROWS] = block.min(axis=1)
    return out


def one_sided_deficiency(K: Any, K2: Any) -> float:
    """Delta_1(K, K2) = sup over x in K of the distance from x to K2.

    Returns 0 for empty K and infinity for nonempty K with empty K2.
    """
    a, b = as_point_array(K), as_point_array(K2)
    if len(a) == 0:
        return 0.0
    if len(b) == 0:
        return math.inf
    return float(_nearest_distances(a, b).max())


def hausdorff_d1(K1: Any, K2: Any) -> float:
    """Symmetric sum of one-sided deficiencies."""
    return one_sided_deficiency(K1, K2) + one_sided_deficiency(K2, K1)


def hausdorff_d0(K1: Any, K2: Any) -> float:
    """Truncated Hausdorff-type metric d0 = d1 ∧ 1 on finite point sets.

    Args:
        K1: First point set
        K2: Second point set

    Returns:
        Distance in [0, 1]; 0 for two empty sets, 1 if exactly one is empty
    """
    a, b = as_point_array(K1), as_point_array(K2)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return 1.0
    return min(hausdorff_d1(a, b), 1.0)


def radius_r0(K: Any) -> float:
    """Largest Euclidean norm in K, with r0 of the empty set equal to 0."""
    a = as_point_array(K)
    if len(a) == 0:
        return 0.0
    return float(np.sqrt((a * a).sum(axis=1)).max())
