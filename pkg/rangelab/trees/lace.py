"""Lace-expansion identity layer over exact rings.

A graph on [a, b] is a set of pairs (s, t), a <= s < t <= b. It is
connected when the intervals [s, t] cover [a, b]; the empty graph is
connected on [a, a]. With K = prod (1 + U_st) and J the sum over connected
graphs of prod U_st, K splits over compositions of [0, n] into blocks.
U entries may be Fractions or sympy expressions.
"""

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from rangelab.exceptions import GuardRefusalError
from rangelab.lattice import Kernel, Site, origin
from rangelab.logging import get_logger
from rangelab.metrics import record_guard_refusal
from rangelab.trees.enumeration import ensure_subcritical
from rangelab.trees.ribs import RibCatalog, rib_tuples, two_point_backbone, walk_weight, walks

logger = get_logger(__name__)

MAX_LACE_N = 6
# Brute-force graph enumeration is only used up to this interval length
MAX_ENUMERATED_N = 4

Pair = Tuple[int, int]
Assignment = Dict[Pair, Any]


def _guard(n: int, bound: int, operation: str) -> None:
    if n < 0 or n > bound:
        record_guard_refusal(operation)
        raise GuardRefusalError(
            f"{operation}: n={n} exceeds the bound {bound} (2^{n * (n + 1) // 2} graphs)",
            bound=bound,
            requested=n,
        )


def pairs(a: int, b: int) -> List[Pair]:
    return [(s, t) for s in range(a, b + 1) for t in range(s + 1, b + 1)]


def is_connected(graph: Sequence[Pair], a: int, b: int) -> bool:
    """Interval-covering connectivity on [a, b]."""
    if a == b:
        return not graph
    covered = [False] * (b - a)
    for s, t in graph:
        for k in range(s, t):
            covered[k - a] = True
    return all(covered)


def connected_graphs(a: int, b: int) -> Iterator[Tuple[Pair, ...]]:
    """Every connected graph on [a, b], by brute force over edge subsets."""
    candidates = pairs(a, b)
    for size in range(len(candidates) + 1):
        for graph in itertools.combinations(candidates, size):
            if is_connected(graph, a, b):
                yield graph


def _product(values: Sequence[Any]) -> Any:
    out: Any = 1
    for v in values:
        out = out * v
    return out


class LaceGraphTable:
    """Cached J over all subintervals of [0, n] for one U assignment."""

    def __init__(self, n: int, U: Assignment):
        self.n = n
        self.U = U
        self._J: Dict[Pair, Any] = {}
        self._J_enumerated: Dict[Pair, Any] = {}

    def J(self, a: int, b: int) -> Any:
        """J over [a, b] by a covering-mask dynamic program over edges."""
        key = (a, b)
        if key in self._J:
            return self._J[key]
        if a == b:
            value: Any = 1
        else:
            full = (1 << (b - a)) - 1
            states: Dict[int, Any] = {0: 1}
            for s, t in pairs(a, b):
                mask = ((1 << (t - s)) - 1) << (s - a)
                u = self.U[(s, t)]
                nxt: Dict[int, Any] = defaultdict(int)
                for covered, acc in states.items():
                    nxt[covered] = nxt[covered] + acc
                    nxt[covered | mask] = nxt[covered | mask] + acc * u
                states = dict(nxt)
            value = states.get(full, 0)
        self._J[key] = value
        return value

    def J_enumerated(self, a: int, b: int) -> Any:
        """J over [a, b] by listing connected graphs."""
        key = (a, b)
        if key in self._J_enumerated:
            return self._J_enumerated[key]
        total: Any = 0
        for graph in connected_graphs(a, b):
            total = total + _product([self.U[p] for p in graph])
        self._J_enumerated[key] = total
        return total

    def K(self, a: int = 0, b: Optional[int] = None) -> Any:
        """prod over a <= s < t <= b of (1 + U_st)."""
        b = self.n if b is None else b
        return _product([1 + self.U[p] for p in pairs(a, b)])

    def composition_sum(self, enumerate_graphs: bool = False, min_blocks: int = 1) -> Any:
        """Sum over compositions of [0, n] of the product of block J values."""
        J = self.J_enumerated if enumerate_graphs else self.J
        total: Any = 0
        for blocks in compositions(self.n):
            if len(blocks) < min_blocks:
                continue
            total = total + _product([J(a, b) for a, b in blocks])
        return total

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "J": {f"{a},{b}": str(v) for (a, b), v in sorted(self._J.items())},
        }


def compositions(n: int) -> Iterator[List[Pair]]:
    """Blocks [a_j, b_j] partitioning {0..n}, one per subset of the n unit gaps cut."""
    for cuts in itertools.product((False, True), repeat=n):
        blocks: List[Pair] = []
        start = 0
        for k, cut in enumerate(cuts):
            if cut:
                blocks.append((start, k))
                start = k + 1
        blocks.append((start, n))
        yield blocks


@dataclass
class LaceCheck:
    """Outcome of the K = sum-of-J-products identity for one assignment."""

    n: int
    lhs: Any
    rhs: Any
    holds: bool
    witness: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "lhs": str(self.lhs),
            "rhs": str(self.rhs),
            "holds": self.holds,
            "witness": self.witness,
        }


def _equal(a: Any, b: Any) -> bool:
    diff = a - b
    if hasattr(diff, "expand"):
        return diff.expand() == 0
    return diff == 0


def lace_identity_check(
    n: int, U: Assignment, enumerate_graphs: Optional[bool] = None
) -> LaceCheck:
    """Compare K over [0, n] with its expansion into connected-graph blocks.

    Args:
        n: Interval length
        U: Value for every pair (s, t), 0 <= s < t <= n
        enumerate_graphs: List connected graphs explicitly (default for n <= 4)
            instead of the covering-mask recursion

    Returns:
        LaceCheck; a failing check carries the assignment as witness

    Raises:
        GuardRefusalError: If n exceeds 6
    """
    _guard(n, MAX_LACE_N, "lace_identity_check")
    if enumerate_graphs is None:
        enumerate_graphs = n <= MAX_ENUMERATED_N
    table = LaceGraphTable(n, U)
    lhs = table.K()
    rhs = table.composition_sum(enumerate_graphs=enumerate_graphs)
    holds = _equal(lhs, rhs)
    witness = None
    if not holds:
        witness = {f"{s},{t}": str(v) for (s, t), v in sorted(U.items())}
        logger.error(f"Lace identity failed at n={n}")
    return LaceCheck(n=n, lhs=lhs, rhs=rhs, holds=holds, witness=witness)


def random_assignment(n: int, rng: np.random.Generator, denominator: int = 7) -> Assignment:
    """Random rational U values with numerators in [-denominator, denominator]."""
    return {
        p: Fraction(
            int(rng.integers(-denominator, denominator + 1)),
            int(rng.integers(1, denominator + 1)),
        )
        for p in pairs(0, n)
    }


def symbolic_assignment(n: int) -> Assignment:
    """Free sympy symbols U_s_t."""
    return {(s, t): sympy.Symbol(f"U_{s}_{t}") for s, t in pairs(0, n)}


def constant_assignment(n: int, value: Any) -> Assignment:
    return {p: value for p in pairs(0, n)}


def overlap_assignment(rib_sets: Sequence[FrozenSet[Site]]) -> Assignment:
    """U_st = -1 when ribs s and t intersect, else 0."""
    n = len(rib_sets) - 1
    return {(s, t): (-1 if rib_sets[s] & rib_sets[t] else 0) for s, t in pairs(0, n)}


@dataclass
class PiResult:
    """pi_n(x) and the block recomposition of rho_z t_n(x)."""

    n: int
    x: Site
    z: Fraction
    max_edges: int
    pi: Fraction
    remainder: Fraction
    two_point: Fraction
    configurations: int = 0
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def recomposes(self) -> bool:
        return self.pi + self.remainder == self.two_point

    def to_dict(self) -> Dict[str, Any]:
        def q(v: Fraction) -> str:
            return f"{v.numerator}/{v.denominator}"

        return {
            "n": self.n,
            "x": list(self.x),
            "z": q(self.z),
            "max_edges": self.max_edges,
            "pi": q(self.pi),
            "remainder": q(self.remainder),
            "two_point": q(self.two_point),
            "recomposes": self.recomposes,
            "configurations": self.configurations,
            "regime": "subcritical",
        }


MAX_PI_N = 4


def pi_n_exact(kernel: Kernel, z: Fraction, n: int, x: Site, max_edges: int) -> PiResult:
    """pi_n(x) summed over walks o -> x and all rib tuples, with J from rib overlaps.

    Every configuration also contributes its multi-block compositions to
    the remainder, so pi + remainder recomposes rho_z t_n(x); that total
    is compared against the avoiding-ribs sum.

    Raises:
        GuardRefusalError: Outside micro scale (n <= 4, d <= 2, L = 1) or at divergence
    """
    z = Fraction(z)
    if n > MAX_PI_N or kernel.d > 2 or kernel.L != 1:
        record_guard_refusal("pi_n_exact")
        raise GuardRefusalError(
            f"pi_n_exact: needs n <= {MAX_PI_N}, d <= 2, L = 1 "
            f"(got n={n}, d={kernel.d}, L={kernel.L})",
            bound=MAX_PI_N,
            requested=n,
        )
    ensure_subcritical(kernel, z, "pi_n_exact")
    pi = Fraction(0)
    remainder = Fraction(0)
    count = 0
    if n <= max_edges:
        catalog = RibCatalog(kernel, z, max_edges - n)
        for walk in walks(kernel, n, origin(kernel.d), x):
            w_walk = walk_weight(kernel, z, walk)
            for sets, _, w_ribs in rib_tuples(catalog, walk, max_edges - n, avoiding=False):
                count += 1
                table = LaceGraphTable(n, overlap_assignment(sets))
                weight = w_walk * w_ribs
                pi += weight * table.J(0, n)
                remainder += weight * table.composition_sum(min_blocks=2)
    direct = two_point_backbone(kernel, z, n, x, max_edges)
    result = PiResult(
        n=n,
        x=tuple(x),
        z=z,
        max_edges=max_edges,
        pi=pi,
        remainder=remainder,
        two_point=direct,
        configurations=count,
    )
    logger.debug(f"pi_{n}({tuple(x)}) over {count} configurations: {pi}")
    return result
