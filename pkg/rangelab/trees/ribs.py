"""Backbone and ribs of a lattice tree, and the two-point function.

A tree containing o with x at tree distance n splits uniquely into the
backbone (the tree path o -> x) and the ribs R_0..R_n, R_i being the
component of the i-th backbone vertex once backbone bonds are removed.
Conversely, a walk with mutually avoiding ribs glues back into a tree.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, FrozenSet, Iterator, List, Sequence, Tuple

from rangelab.exceptions import CompositionViolationError, PreconditionError
from rangelab.lattice import Kernel, Site, add, origin, sub
from rangelab.logging import get_logger
from rangelab.trees.enumeration import (
    LatticeTree,
    ensure_subcritical,
    make_edge,
    trees_by_edges,
    truncation_tail_bound,
)

logger = get_logger(__name__)

Walk = Tuple[Site, ...]


@dataclass(frozen=True)
class RibsDecomposition:
    """Backbone walk and one rib per backbone vertex."""

    walk: Walk
    ribs: Tuple[LatticeTree, ...]

    @property
    def n(self) -> int:
        return len(self.walk) - 1

    def to_dict(self) -> Dict[str, Any]:
        return {"walk": [list(x) for x in self.walk], "ribs": [r.to_dict() for r in self.ribs]}


def walk_weight(kernel: Kernel, z: Fraction, walk: Sequence[Site]) -> Fraction:
    """W(omega) = z^n times the product of D over steps."""
    w = Fraction(1)
    for a, b in zip(walk, walk[1:]):
        w *= z * kernel.weight(sub(b, a))
    return w


def ribs_decompose(tree: LatticeTree, n: int, x: Site) -> RibsDecomposition:
    """Split a tree at the generation-n vertex x.

    Raises:
        PreconditionError: If x is not at tree distance n from the origin
    """
    x = tuple(x)
    o = origin(len(x))
    if o not in tree.vertices or x not in tree.generation(n, o):
        raise PreconditionError(f"{x} is not in generation {n} of the tree")
    walk = tree.path(o, x)
    backbone = {make_edge(a, b) for a, b in zip(walk, walk[1:])}
    remainder = LatticeTree(tree.vertices, tree.edges - backbone)
    ribs = []
    for v in walk:
        component = set(remainder.distances(v))
        ribs.append(remainder.induced(component))
    return RibsDecomposition(walk=walk, ribs=tuple(ribs))


def ribs_compose(walk: Sequence[Site], ribs: Sequence[LatticeTree]) -> LatticeTree:
    """Glue a backbone walk and its ribs into one tree.

    Raises:
        CompositionViolationError: If a rib misses its backbone vertex or two ribs meet
    """
    walk = tuple(tuple(v) for v in walk)
    if len(walk) != len(ribs):
        raise CompositionViolationError(f"{len(walk)} backbone vertices but {len(ribs)} ribs")
    seen: Dict[Site, int] = {}
    for i, (v, rib) in enumerate(zip(walk, ribs)):
        if v not in rib.vertices:
            raise CompositionViolationError(f"Rib {i} does not contain backbone vertex {v}")
        for u in rib.vertices:
            if u in seen:
                raise CompositionViolationError(f"Ribs {seen[u]} and {i} share site {u}")
            seen[u] = i
    edges = {make_edge(a, b) for a, b in zip(walk, walk[1:])}
    for rib in ribs:
        edges |= rib.edges
    return LatticeTree(frozenset(seen), frozenset(edges))


def walks(kernel: Kernel, n: int, start: Site, end: Site) -> Iterator[Walk]:
    """Every n-step kernel walk from start to end, in lexicographic order."""
    start, end = tuple(start), tuple(end)
    radius = kernel.L

    def extend(path: List[Site]) -> Iterator[Walk]:
        remaining = n - (len(path) - 1)
        if remaining == 0:
            if path[-1] == end:
                yield tuple(path)
            return
        for e in kernel.support:
            nxt = add(path[-1], e)
            if max(abs(a - b) for a, b in zip(nxt, end)) <= radius * (remaining - 1):
                path.append(nxt)
                yield from extend(path)
                path.pop()

    yield from extend([start])


class RibCatalog:
    """Trees containing the origin with their weights, for placing ribs by translation."""

    def __init__(self, kernel: Kernel, z: Fraction, max_edges: int):
        self.kernel = kernel
        self.z = Fraction(z)
        self.max_edges = max_edges
        self.entries: List[Tuple[int, Tuple[Site, ...], Fraction, LatticeTree]] = [
            (t.n_edges, tuple(sorted(t.vertices)), t.weight(kernel, self.z), t)
            for level in trees_by_edges(kernel, max_edges)
            for t in level
        ]

    def placed(
        self, at: Site, budget: int
    ) -> Iterator[Tuple[int, FrozenSet[Site], Fraction, LatticeTree]]:
        """Trees containing ``at`` with at most ``budget`` bonds."""
        for n_edges, verts, weight, tree in self.entries:
            if n_edges > budget:
                break
            yield n_edges, frozenset(add(v, at) for v in verts), weight, tree


def rib_tuples(
    catalog: RibCatalog, walk: Walk, budget: int, avoiding: bool
) -> Iterator[Tuple[List[FrozenSet[Site]], List[LatticeTree], Fraction]]:
    """Rib tuples on a walk with at most ``budget`` rib bonds in total.

    With ``avoiding`` only mutually disjoint tuples are produced; each rib
    must then also miss every other backbone vertex.
    """
    walk = tuple(walk)
    if avoiding and len(set(walk)) != len(walk):
        return

    def place(i: int, left: int, used: FrozenSet[Site], sets, trees, weight) -> Iterator:
        if i == len(walk):
            yield list(sets), list(trees), weight
            return
        others = frozenset(walk[i + 1 :])
        for n_edges, verts, w, tree in catalog.placed(walk[i], left):
            if avoiding and (verts & used or verts & others):
                continue
            sets.append(verts)
            trees.append(tree)
            yield from place(i + 1, left - n_edges, used | verts, sets, trees, weight * w)
            sets.pop()
            trees.pop()

    yield from place(0, budget, frozenset(), [], [], Fraction(1))


@dataclass
class TwoPointResult:
    """rho_z t_n(x) at a truncation depth, computed two ways."""

    n: int
    x: Site
    z: Fraction
    max_edges: int
    direct: Fraction
    backbone: Fraction
    tail_bound: float

    @property
    def agree(self) -> bool:
        return self.direct == self.backbone

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "x": list(self.x),
            "z": f"{self.z.numerator}/{self.z.denominator}",
            "max_edges": self.max_edges,
            "direct": f"{self.direct.numerator}/{self.direct.denominator}",
            "backbone": f"{self.backbone.numerator}/{self.backbone.denominator}",
            "agree": self.agree,
            "tail_bound": self.tail_bound,
            "regime": "subcritical",
        }


def two_point_direct(kernel: Kernel, z: Fraction, n: int, x: Site, max_edges: int) -> Fraction:
    """Sum of W over trees containing o with x in generation n."""
    x = tuple(x)
    o = origin(kernel.d)
    total = Fraction(0)
    for level in trees_by_edges(kernel, max_edges):
        for tree in level:
            if x in tree.vertices and tree.distances(o).get(x) == n:
                total += tree.weight(kernel, Fraction(z))
    return total


def two_point_backbone(kernel: Kernel, z: Fraction, n: int, x: Site, max_edges: int) -> Fraction:
    """Sum over backbone walks o -> x of W(omega) times mutually avoiding rib weights."""
    z = Fraction(z)
    if n > max_edges:
        return Fraction(0)
    catalog = RibCatalog(kernel, z, max_edges - n)
    total = Fraction(0)
    for walk in walks(kernel, n, origin(kernel.d), x):
        w_walk = walk_weight(kernel, z, walk)
        for _, _, w_ribs in rib_tuples(catalog, walk, max_edges - n, avoiding=True):
            total += w_walk * w_ribs
    return total


def two_point(kernel: Kernel, z: Fraction, n: int, x: Site, max_edges: int) -> TwoPointResult:
    """rho_z t_n(x) truncated at max_edges bonds, by direct summation and by ribs.

    Raises:
        GuardRefusalError: If the enumeration is too large or z is at divergence
    """
    z = Fraction(z)
    ensure_subcritical(kernel, z)
    direct = two_point_direct(kernel, z, n, x, max_edges)
    backbone = two_point_backbone(kernel, z, n, x, max_edges)
    result = TwoPointResult(
        n=n,
        x=tuple(x),
        z=z,
        max_edges=max_edges,
        direct=direct,
        backbone=backbone,
        tail_bound=truncation_tail_bound(kernel, z, max_edges),
    )
    if not result.agree:
        logger.error(f"Two-point mismatch at n={n}, x={tuple(x)}: {direct} != {backbone}")
    return result
