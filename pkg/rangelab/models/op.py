"""Oriented percolation on Z+ x Z^d with a spread-out bond kernel.

The bond ((i, y), (i+1, x)) is occupied with probability p·D(x - y),
independently of all other bonds. Simulation grows the cluster of the
origin generation by generation; exact enumeration covers micro instances.
"""

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, FrozenSet, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from rangelab.ancestry import GenerationalSystem, generational_from_records
from rangelab.exceptions import ConfigurationError, GuardRefusalError
from rangelab.lattice import Kernel, Site, add, origin, sub
from rangelab.logging import get_logger
from rangelab.metrics import record_guard_refusal

logger = get_logger(__name__)

# Bonds out of reachable sites allowed in exact enumeration
MAX_EXACT_BONDS = 24

Trajectory = Tuple[FrozenSet[Site], ...]


@dataclass(frozen=True)
class OpParams:
    """Kernel, bond parameter and generation horizon."""

    kernel: Kernel
    p: float
    n_max: int = 100

    def __post_init__(self):
        if self.p < 0 or self.p * float(self.kernel.max_weight()) > 1 + 1e-12:
            raise ConfigurationError(
                f"Bond parameter p={self.p} outside [0, {1 / float(self.kernel.max_weight())}]"
            )
        if self.n_max < 1:
            raise ConfigurationError(f"n_max must be >= 1, got {self.n_max}")

    def to_dict(self) -> Dict[str, Any]:
        return {"kernel": self.kernel.to_dict(), "p": self.p, "n_max": self.n_max}


class OpRealization(GenerationalSystem):
    """Occupied generations of the origin's cluster with their parent multimap."""

    model_tag = "op"

    def __init__(self, params: OpParams, generations, parents, truncated: bool = False):
        super().__init__(params.kernel.d, generations, parents, truncated)
        self.params = params

    def bond_counts(self) -> Tuple[Dict[Site, int], int]:
        """Occupied bonds per displacement, and the number of parent sites tried.

        Every occupied site below the last generation tries each kernel bond once.
        """
        counts: Dict[Site, int] = defaultdict(int)
        for (_, x), ps in self.parents.items():
            for y in ps:
                counts[sub(x, y)] += 1
        trials = sum(len(g) for g in self.generations[:-1])
        return dict(counts), trials

    def log_header(self) -> Dict[str, Any]:
        header = super().log_header()
        header.update(self.params.to_dict())
        return header

    @classmethod
    def from_event_log(
        cls, header: Dict[str, Any], records: List[Dict[str, Any]]
    ) -> "OpRealization":
        """Replay a persisted bond log."""
        base = generational_from_records(header, records)
        params = OpParams(Kernel.from_dict(header["kernel"]), header["p"], int(header["n_max"]))
        return cls(params, base.generations, base.parents, base.truncated)


def _children(
    kernel: Kernel, parents: Sequence[Site], q: float, rng: np.random.Generator
) -> Dict[Site, Set[Site]]:
    """Occupied bonds out of each parent: a binomial count placed without replacement."""
    support = kernel.support
    out: Dict[Site, Set[Site]] = defaultdict(set)
    counts = rng.binomial(len(support), q, size=len(parents))
    for y, count in zip(parents, counts.tolist()):
        if count == 0:
            continue
        for idx in rng.choice(len(support), size=count, replace=False).tolist():
            out[add(y, support[idx])].add(y)
    return out


def simulate_op(params: OpParams, rng: np.random.Generator) -> OpRealization:
    """Grow the cluster of (0, o) until extinction or n_max generations.

    Args:
        params: Model parameters
        rng: Generator for this replica

    Returns:
        OpRealization
    """
    kernel = params.kernel
    q = params.p * float(kernel.max_weight())
    o = origin(kernel.d)
    generations: List[FrozenSet[Site]] = [frozenset({o})]
    parent_map: Dict[Tuple[int, Site], FrozenSet[Site]] = {}
    for i in range(params.n_max):
        current = sorted(generations[-1])
        if not current:
            break
        children = _children(kernel, current, q, rng)
        for x, ps in children.items():
            parent_map[(i + 1, x)] = frozenset(ps)
        generations.append(frozenset(children))
    return OpRealization(params, generations, parent_map)


def op_ancestral(realization: OpRealization) -> OpRealization:
    """The ancestral system of an OP realization (reachability in the parent map)."""
    return realization


def simulate_op_mass(
    params: OpParams, rng: np.random.Generator, interactions: bool = True
) -> np.ndarray:
    """Per-generation mass |T_i| without storing parents.

    With ``interactions`` off, children are not merged by site, which gives
    the branching surrogate whose mean offspring is exactly p.
    """
    kernel = params.kernel
    q = params.p * float(kernel.max_weight())
    masses = np.zeros(params.n_max + 1)
    masses[0] = 1
    if not interactions:
        size = 1
        bonds = len(kernel.support)
        for i in range(1, params.n_max + 1):
            size = int(rng.binomial(size * bonds, q)) if size else 0
            masses[i] = size
        return masses
    current: List[Site] = [origin(kernel.d)]
    for i in range(1, params.n_max + 1):
        if not current:
            break
        current = sorted(_children(kernel, current, q, rng))
        masses[i] = len(current)
    return masses


@dataclass
class PcEstimate:
    """Bisection estimate of the critical bond parameter."""

    p_hat: float
    lo: float
    hi: float
    iterations: int
    converged: bool
    budget_exhausted: bool
    history: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p_hat": self.p_hat,
            "lo": self.lo,
            "hi": self.hi,
            "iterations": self.iterations,
            "converged": self.converged,
            "budget_exhausted": self.budget_exhausted,
            "history": self.history,
        }


def mass_slope(masses: np.ndarray, window: Tuple[int, int]) -> float:
    """Least-squares slope of log E|T_n| over the window."""
    n = np.arange(window[0], window[1] + 1)
    mean = masses[:, window[0] : window[1] + 1].mean(axis=0)
    if np.any(mean <= 0):
        return -math.inf
    return float(np.polyfit(n, np.log(mean), 1)[0])


def estimate_pc(
    kernel: Kernel,
    rng: np.random.Generator,
    budget: int = 12,
    replicas: int = 400,
    n_max: int = 40,
    bracket: Optional[Tuple[float, float]] = None,
    bootstrap: int = 200,
    interactions: bool = True,
    p_tol: float = 1e-3,
) -> PcEstimate:
    """Bisect on p until the mean mass is flat across generations [n_max/2, n_max].

    Each step fits the slope of log E|T_n| over the window with a replica
    bootstrap CI. A CI above zero means supercritical, below zero
    subcritical, and a CI covering zero stops the search.

    Args:
        kernel: Bond kernel
        rng: Generator
        budget: Maximum number of bisection steps
        replicas: Replicas per step
        n_max: Generation horizon
        bracket: Initial (lo, hi); defaults to (0.5, min(2, 1/max D))
        bootstrap: Bootstrap resamples for the slope CI
        interactions: False runs the branching surrogate
        p_tol: Stop when the bracket is narrower than this

    Returns:
        PcEstimate with the final bracket
    """
    p_max = 1.0 / float(kernel.max_weight())
    lo, hi = bracket if bracket is not None else (0.5, min(2.0, p_max))
    window = (n_max // 2, n_max)
    history: List[Dict[str, float]] = []
    converged = False
    iterations = 0
    while iterations < budget and hi - lo > p_tol:
        mid = 0.5 * (lo + hi)
        params = OpParams(kernel, mid, n_max)
        masses = np.stack(
            [simulate_op_mass(params, rng, interactions) for _ in range(replicas)]
        )
        slope = mass_slope(masses, window)
        resampled = [
            mass_slope(masses[rng.integers(0, replicas, size=replicas)], window)
            for _ in range(bootstrap)
        ]
        ci_lo, ci_hi = np.percentile(resampled, [2.5, 97.5])
        history.append({"p": mid, "slope": slope, "ci_lo": float(ci_lo), "ci_hi": float(ci_hi)})
        iterations += 1
        logger.debug(f"p={mid:.5f} slope={slope:.4g} CI=[{ci_lo:.4g}, {ci_hi:.4g}]")
        if ci_lo > 0:
            hi = mid
        elif ci_hi < 0:
            lo = mid
        else:
            converged = True
            break
    exhausted = not converged and hi - lo > p_tol
    if exhausted:
        logger.warning(f"p_c search budget exhausted; reporting bracket [{lo:.4f}, {hi:.4f}]")
    return PcEstimate(
        p_hat=0.5 * (lo + hi),
        lo=lo,
        hi=hi,
        iterations=iterations,
        converged=converged,
        budget_exhausted=exhausted,
        history=history,
    )


# Exact enumeration


def reachable_sites(kernel: Kernel, n: int) -> List[Set[Site]]:
    """Sites reachable from the origin in exactly i kernel steps, i = 0..n."""
    levels = [{origin(kernel.d)}]
    for _ in range(n):
        levels.append({add(y, e) for y in levels[-1] for e in kernel.support})
    return levels


def exact_guard(kernel: Kernel, n: int, operation: str = "op_exact_enumerate") -> int:
    """Bond count below generation n; refuse when above MAX_EXACT_BONDS.

    Raises:
        GuardRefusalError: If the instance is too large
    """
    levels = reachable_sites(kernel, n)
    bonds = sum(len(levels[i]) * len(kernel.support) for i in range(n))
    if bonds > MAX_EXACT_BONDS:
        record_guard_refusal(operation)
        raise GuardRefusalError(
            f"{operation}: {bonds} bonds exceed the bound {MAX_EXACT_BONDS}",
            bound=MAX_EXACT_BONDS,
            requested=bonds,
        )
    return bonds


def _child_law(
    kernel: Kernel, occupied: FrozenSet[Site], marked: FrozenSet[Site], q: Fraction
) -> Iterator[Tuple[FrozenSet[Site], FrozenSet[Site], Fraction]]:
    """Joint law of (T_next, D_next) given T and a marked subset D of T.

    A child is in D_next when a bond from D is occupied, and in T_next when
    any bond from T is; children are independent.
    """
    candidates: Dict[Site, List[int]] = defaultdict(lambda: [0, 0])
    for y in occupied:
        slot = 0 if y in marked else 1
        for e in kernel.support:
            candidates[add(y, e)][slot] += 1
    sites = sorted(candidates)
    outcomes = []
    for x in sites:
        k_marked, k_rest = candidates[x]
        miss_marked = (1 - q) ** k_marked
        miss_rest = (1 - q) ** k_rest
        options = [(False, False, miss_marked * miss_rest)]
        if k_marked:
            options.append((True, True, 1 - miss_marked))
        if k_rest:
            options.append((True, False, miss_marked * (1 - miss_rest)))
        outcomes.append(options)
    for choice in itertools.product(*outcomes):
        prob = Fraction(1)
        t_next, d_next = [], []
        for x, (in_t, in_d, w) in zip(sites, choice):
            prob *= w
            if in_t:
                t_next.append(x)
            if in_d:
                d_next.append(x)
        if prob:
            yield frozenset(t_next), frozenset(d_next), prob


class OpExactTable:
    """Exact law of trajectories (T_0, ..., T_n) of a micro OP instance."""

    def __init__(self, kernel: Kernel, n: int, p: Fraction, table: Dict[Trajectory, Fraction]):
        self.kernel = kernel
        self.n = n
        self.p = p
        self.table = table

    def total(self) -> Fraction:
        return sum(self.table.values(), Fraction(0))

    def probability(self, event: Callable[[Trajectory], bool]) -> Fraction:
        return sum((w for traj, w in self.table.items() if event(traj)), Fraction(0))

    def survival(self, k: int) -> Fraction:
        """theta(k) = P(T_k nonempty)."""
        return self.probability(lambda traj: bool(traj[k]))

    def occupation(self, k: int, x: Site) -> Fraction:
        return self.probability(lambda traj: tuple(x) in traj[k])

    def expected_mass(self, k: int) -> Fraction:
        return sum((w * len(traj[k]) for traj, w in self.table.items()), Fraction(0))

    def window_event(self, m: int, M: int, lo: int, hi: int) -> Fraction:
        """P(S > m and the mass summed over generations lo..hi is at most M)."""
        return self.probability(
            lambda traj: bool(traj[m]) and sum(len(traj[i]) for i in range(lo, hi + 1)) <= M
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "p": f"{self.p.numerator}/{self.p.denominator}",
            "trajectories": len(self.table),
            "survival": [str(self.survival(k)) for k in range(self.n + 1)],
            "expected_mass": [str(self.expected_mass(k)) for k in range(self.n + 1)],
        }


def _bond_probability(kernel: Kernel, p: Fraction) -> Fraction:
    q = Fraction(p) * kernel.max_weight()
    if q < 0 or q > 1:
        raise ConfigurationError(f"Bond probability {q} outside [0, 1]")
    return q


def op_exact_enumerate(kernel: Kernel, n: int, p: Fraction) -> OpExactTable:
    """Exact trajectory law up to generation n with rational arithmetic.

    Raises:
        GuardRefusalError: If the instance has more than MAX_EXACT_BONDS bonds
    """
    exact_guard(kernel, n)
    q = _bond_probability(kernel, p)
    o = origin(kernel.d)
    layer: Dict[Trajectory, Fraction] = {(frozenset({o}),): Fraction(1)}
    for _ in range(n):
        nxt: Dict[Trajectory, Fraction] = defaultdict(Fraction)
        for traj, w in layer.items():
            if not traj[-1]:
                nxt[traj + (frozenset(),)] += w
                continue
            for t_next, _, prob in _child_law(kernel, traj[-1], frozenset(), q):
                nxt[traj + (t_next,)] += w * prob
        layer = dict(nxt)
    logger.debug(f"Exact OP table: n={n}, p={p}, {len(layer)} trajectories")
    return OpExactTable(kernel, n, Fraction(p), layer)


def op_configurations(
    kernel: Kernel, n: int, p: Fraction
) -> Iterator[Tuple[OpRealization, Fraction]]:
    """Every bond configuration out of occupied sites, with its probability.

    Raises:
        GuardRefusalError: If the instance has more than MAX_EXACT_BONDS bonds
    """
    exact_guard(kernel, n, "op_configurations")
    q = _bond_probability(kernel, p)
    params = OpParams(kernel, float(p), n)
    o = origin(kernel.d)

    def grow(
        generations: List[FrozenSet[Site]],
        parents: Dict[Tuple[int, Site], FrozenSet[Site]],
        weight: Fraction,
    ) -> Iterator[Tuple[OpRealization, Fraction]]:
        i = len(generations) - 1
        if i == n or not generations[-1]:
            padded = generations + [frozenset()] * (n + 1 - len(generations))
            yield OpRealization(params, padded, parents), weight
            return
        bonds = [(y, add(y, e)) for y in sorted(generations[-1]) for e in kernel.support]
        for mask in itertools.product((False, True), repeat=len(bonds)):
            w = weight
            children: Dict[Site, Set[Site]] = defaultdict(set)
            for (y, x), on in zip(bonds, mask):
                w *= q if on else 1 - q
                if on:
                    children[x].add(y)
            if not w:
                continue
            new_parents = dict(parents)
            for x, ps in children.items():
                new_parents[(i + 1, x)] = frozenset(ps)
            yield from grow(generations + [frozenset(children)], new_parents, w)

    yield from grow([frozenset({o})], {}, Fraction(1))


@dataclass
class IdentityRow:
    """One term of an exact identity check."""

    label: str
    lhs: Fraction
    rhs: Fraction

    @property
    def holds(self) -> bool:
        return self.lhs == self.rhs

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "lhs": str(self.lhs),
            "rhs": str(self.rhs),
            "holds": self.holds,
        }


def condition7_window(m: int) -> Tuple[int, int]:
    """Mass window [m+2, 2m-1], or [m+1, m+1] when that is empty."""
    if m + 2 <= 2 * m - 1:
        return m + 2, 2 * m - 1
    return m + 1, m + 1


def _descendant_law(
    kernel: Kernel, q: Fraction, start: Dict[FrozenSet[Site], Fraction], x: Site, steps: int
) -> Dict[Tuple[FrozenSet[Site], Tuple[int, ...]], Fraction]:
    """Joint chain of (T, D) started from the law of T_ell with D = {x}.

    Returns the law of (D_steps, (|D_0|, ..., |D_steps|)) restricted to x in T_ell.
    """
    states: Dict[Tuple[FrozenSet[Site], FrozenSet[Site], Tuple[int, ...]], Fraction] = defaultdict(
        Fraction
    )
    for occ, w in start.items():
        if x in occ:
            states[(occ, frozenset({x}), (1,))] += w
    for _ in range(steps):
        nxt: Dict[Tuple[FrozenSet[Site], FrozenSet[Site], Tuple[int, ...]], Fraction] = defaultdict(
            Fraction
        )
        for (occ, marked, sizes), w in states.items():
            if not occ:
                nxt[(occ, marked, sizes + (0,))] += w
                continue
            for t_next, d_next, prob in _child_law(kernel, occ, marked, q):
                nxt[(t_next, d_next, sizes + (len(d_next),))] += w * prob
        states = nxt
    out: Dict[Tuple[FrozenSet[Site], Tuple[int, ...]], Fraction] = defaultdict(Fraction)
    for (_, marked, sizes), w in states.items():
        out[(marked, sizes)] += w
    return dict(out)


def _law_at(kernel: Kernel, q: Fraction, ell: int) -> Dict[FrozenSet[Site], Fraction]:
    law: Dict[FrozenSet[Site], Fraction] = {frozenset({origin(kernel.d)}): Fraction(1)}
    for _ in range(ell):
        nxt: Dict[FrozenSet[Site], Fraction] = defaultdict(Fraction)
        for occ, w in law.items():
            if not occ:
                nxt[occ] += w
                continue
            for t_next, _, prob in _child_law(kernel, occ, frozenset(), q):
                nxt[t_next] += w * prob
        law = dict(nxt)
    return law


def condition7_identity(
    kernel: Kernel,
    p: Fraction,
    ell: int,
    m: int,
    M: int,
    window: Optional[Tuple[int, int]] = None,
) -> List[IdentityRow]:
    """Factorization of the restart event at (ell, x), term by term in x.

    Left side: P(x in T_ell, the descendants of (ell, x) survive past m and
    their mass over the window is at most M), from a joint enumeration of
    the whole cluster and the descendants. Right side: P(x in T_ell) times
    the same event for a fresh cluster from the origin.

    Raises:
        GuardRefusalError: If the instance is too large
    """
    if m < 1:
        raise ConfigurationError(f"m must be >= 1, got {m}")
    lo, hi = window if window is not None else condition7_window(m)
    span = max(m, hi)
    exact_guard(kernel, ell + span, "condition7_identity")
    q = _bond_probability(kernel, p)

    law = _law_at(kernel, q, ell)
    fresh = op_exact_enumerate(kernel, span, p)
    factor = fresh.window_event(m, M, lo, hi)
    rows: List[IdentityRow] = []
    sites = sorted({x for occ in law for x in occ})
    for x in sites:
        joint = _descendant_law(kernel, q, law, x, span)
        lhs = sum(
            (
                w
                for (_, sizes), w in joint.items()
                if sizes[m] > 0 and sum(sizes[lo : hi + 1]) <= M
            ),
            Fraction(0),
        )
        occupied = sum((w for occ, w in law.items() if x in occ), Fraction(0))
        rows.append(IdentityRow(label=str(x), lhs=lhs, rhs=occupied * factor))
    return rows


def condition3_identity(kernel: Kernel, p: Fraction, s: int, t: int) -> List[IdentityRow]:
    """Restart survival from each (s, y) equals theta(t), exactly.

    Left side: P(some descendant of (s, y) at s + t | y in T_s) from the joint
    enumeration; right side: theta(t) of a fresh cluster.
    """
    exact_guard(kernel, s + t, "condition3_identity")
    q = _bond_probability(kernel, p)
    law = _law_at(kernel, q, s)
    theta = op_exact_enumerate(kernel, t, p).survival(t)
    rows = []
    for y in sorted({x for occ in law for x in occ}):
        occupied = sum((w for occ, w in law.items() if y in occ), Fraction(0))
        joint = _descendant_law(kernel, q, law, y, t)
        alive = sum((w for (_, sizes), w in joint.items() if sizes[t] > 0), Fraction(0))
        rows.append(IdentityRow(label=str(y), lhs=alive / occupied, rhs=theta))
    return rows
