"""Exact enumeration of lattice trees and their weights.

Trees are grown one bond at a time from the base site; every tree with
k + 1 bonds arises by attaching a leaf to a tree with k bonds, so the
levels are exhaustive once duplicates are dropped. All weights are exact
rationals.
"""

import itertools
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Sequence, Set, Tuple

from rangelab.exceptions import GuardRefusalError
from rangelab.lattice import Kernel, Site, add, origin, sub, sup_norm
from rangelab.logging import get_logger
from rangelab.metrics import record_guard_refusal

logger = get_logger(__name__)

Edge = Tuple[Site, Site]

# Refuse enumerations whose projected tree count reaches this
MAX_PROJECTED_TREES = 10**8


def make_edge(a: Site, b: Site) -> Edge:
    """Unordered bond in canonical (sorted) form."""
    a, b = tuple(a), tuple(b)
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class LatticeTree:
    """Finite connected acyclic lattice graph."""

    vertices: FrozenSet[Site]
    edges: FrozenSet[Edge]

    @classmethod
    def single(cls, x: Site) -> "LatticeTree":
        return cls(frozenset({tuple(x)}), frozenset())

    @classmethod
    def from_edges(cls, edges: Sequence[Edge], base: Optional[Site] = None) -> "LatticeTree":
        """Build a tree from bonds; a bond-free tree needs its base site."""
        edges = frozenset(make_edge(a, b) for a, b in edges)
        vertices = {v for e in edges for v in e}
        if base is not None:
            vertices.add(tuple(base))
        return cls(frozenset(vertices), edges)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def key(self) -> Tuple[Any, ...]:
        """Canonical sort key: bond count, then sorted bonds, then vertices."""
        return (len(self.edges), tuple(sorted(self.edges)), tuple(sorted(self.vertices)))

    @cached_property
    def adjacency(self) -> Dict[Site, List[Site]]:
        adj: Dict[Site, List[Site]] = {v: [] for v in self.vertices}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for v in adj:
            adj[v].sort()
        return adj

    def is_tree(self) -> bool:
        """Acyclicity and connectivity audit."""
        if len(self.edges) != len(self.vertices) - 1:
            return False
        start = min(self.vertices)
        return len(self.distances(start)) == len(self.vertices)

    def distances(self, root: Site) -> Dict[Site, int]:
        """Tree distance from root to every vertex (BFS)."""
        root = tuple(root)
        dist = {root: 0}
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for w in self.adjacency.get(v, ()):
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    def generation(self, n: int, root: Optional[Site] = None) -> FrozenSet[Site]:
        """T_n: vertices at tree distance n from the root (origin by default)."""
        root = root if root is not None else origin(len(next(iter(self.vertices))))
        return frozenset(v for v, k in self.distances(root).items() if k == n)

    def path(self, a: Site, b: Site) -> Tuple[Site, ...]:
        """The unique tree path from a to b."""
        a, b = tuple(a), tuple(b)
        parent: Dict[Site, Optional[Site]] = {a: None}
        queue = deque([a])
        while queue:
            v = queue.popleft()
            if v == b:
                break
            for w in self.adjacency[v]:
                if w not in parent:
                    parent[w] = v
                    queue.append(w)
        out = [b]
        while parent[out[-1]] is not None:
            out.append(parent[out[-1]])  # type: ignore[arg-type]
        return tuple(reversed(out))

    def descendants(self, x: Site, root: Optional[Site] = None) -> "LatticeTree":
        """R_x(T): x with every vertex whose path from the root passes through x."""
        x = tuple(x)
        root = tuple(root) if root is not None else origin(len(x))
        if x == root:
            return self
        toward_root = self.path(x, root)[1]
        keep = {x}
        stack = [w for w in self.adjacency[x] if w != toward_root]
        keep.update(stack)
        while stack:
            v = stack.pop()
            for w in self.adjacency[v]:
                if w not in keep:
                    keep.add(w)
                    stack.append(w)
        return self.induced(keep)

    def without_descendants(self, x: Site, root: Optional[Site] = None) -> "LatticeTree":
        """T with the descendants of x removed (x itself kept)."""
        below = self.descendants(x, root)
        keep = (self.vertices - below.vertices) | {tuple(x)}
        return self.induced(keep)

    def induced(self, keep: Set[Site]) -> "LatticeTree":
        edges = frozenset(e for e in self.edges if e[0] in keep and e[1] in keep)
        return LatticeTree(frozenset(keep), edges)

    def translate(self, v: Site) -> "LatticeTree":
        return LatticeTree(
            frozenset(add(x, v) for x in self.vertices),
            frozenset(make_edge(add(a, v), add(b, v)) for a, b in self.edges),
        )

    def weight(self, kernel: Kernel, z: Fraction) -> Fraction:
        """W_{z,D}(T) = z^{|E|} times the product of D over bonds."""
        w = Fraction(1)
        for a, b in self.edges:
            w *= z * kernel.weight(sub(b, a))
        return w

    def to_dict(self) -> Dict[str, Any]:
        return {
            "vertices": [list(v) for v in sorted(self.vertices)],
            "edges": [[list(a), list(b)] for a, b in sorted(self.edges)],
        }


def projected_count(kernel: Kernel, max_edges: int) -> int:
    """Crude projection of the number of trees with at most max_edges bonds."""
    branching = 2 * len(kernel.support)
    return sum((k + 1) * branching**k for k in range(max_edges + 1))


def enumeration_guard(kernel: Kernel, max_edges: int, operation: str = "enumerate_trees") -> None:
    """Refuse enumerations projected to exceed MAX_PROJECTED_TREES.

    Raises:
        GuardRefusalError: If the projection is too large
    """
    projected = projected_count(kernel, max_edges)
    if max_edges < 0 or projected >= MAX_PROJECTED_TREES:
        record_guard_refusal(operation)
        raise GuardRefusalError(
            f"{operation}: projected {projected} trees (d={kernel.d}, L={kernel.L}, "
            f"depth={max_edges}) reaches the bound {MAX_PROJECTED_TREES}",
            bound=MAX_PROJECTED_TREES,
            requested=projected,
        )


def ensure_subcritical(kernel: Kernel, z: Fraction, operation: str = "two_point") -> None:
    """Refuse activities where the tree generating function certainly diverges.

    Straight-line trees alone contribute (z max D)^k for every k.

    Raises:
        GuardRefusalError: If z * max D >= 1
    """
    ratio = Fraction(z) * kernel.max_weight()
    if z <= 0 or ratio >= 1:
        record_guard_refusal(operation)
        raise GuardRefusalError(
            f"{operation}: activity z={z} is at or above divergence (z * max D = {ratio})",
            bound=float(1 / kernel.max_weight()),
            requested=float(z),
        )


def truncation_tail_bound(kernel: Kernel, z: Fraction, max_edges: int) -> float:
    """Upper bound on the weight of trees containing a site with more than max_edges bonds.

    Trees with k bonds containing o inject into rooted subtrees of the
    |supp D|-ary tree, of which there are at most (e |supp D|)^k.
    """
    r = math.e * len(kernel.support) * float(Fraction(z) * kernel.max_weight())
    if r >= 1:
        return math.inf
    return r ** (max_edges + 1) / (1 - r)


@lru_cache(maxsize=16)
def _levels(kernel: Kernel, max_edges: int) -> Tuple[Tuple[LatticeTree, ...], ...]:
    o = origin(kernel.d)
    levels: List[Tuple[LatticeTree, ...]] = [(LatticeTree.single(o),)]
    for k in range(1, max_edges + 1):
        seen: Set[FrozenSet[Edge]] = set()
        grown: List[LatticeTree] = []
        for tree in levels[-1]:
            for v in sorted(tree.vertices):
                for e in kernel.support:
                    w = add(v, e)
                    if w in tree.vertices:
                        continue
                    edges = tree.edges | {make_edge(v, w)}
                    if edges in seen:
                        continue
                    seen.add(edges)
                    grown.append(LatticeTree(tree.vertices | {w}, edges))
        grown.sort(key=LatticeTree.key)
        levels.append(tuple(grown))
        logger.debug(f"Enumerated {len(grown)} trees with {k} bonds")
    return tuple(levels)


def trees_by_edges(kernel: Kernel, max_edges: int) -> Tuple[Tuple[LatticeTree, ...], ...]:
    """Trees containing the origin, grouped by bond count 0..max_edges.

    Raises:
        GuardRefusalError: If the enumeration is too large
    """
    enumeration_guard(kernel, max_edges)
    return _levels(kernel, max_edges)


def enumerate_trees(
    kernel: Kernel, max_edges: int, base: Optional[Site] = None
) -> Iterator[LatticeTree]:
    """Stream every tree containing base with at most max_edges bonds, in canonical order.

    Args:
        kernel: Bond kernel (bonds join sites at kernel displacements)
        max_edges: Largest bond count
        base: Site every tree contains; the origin by default

    Yields:
        LatticeTree

    Raises:
        GuardRefusalError: If the enumeration is too large
    """
    levels = trees_by_edges(kernel, max_edges)
    shift = tuple(base) if base is not None else None
    for level in levels:
        if shift is None or not any(shift):
            yield from level
        else:
            yield from sorted((t.translate(shift) for t in level), key=LatticeTree.key)


def count_trees_by_subsets(kernel: Kernel, n_edges: int, base: Optional[Site] = None) -> int:
    """Count trees with exactly n_edges bonds containing base by testing bond subsets.

    Independent of the growth enumerator; only practical for a few bonds.
    """
    base = tuple(base) if base is not None else origin(kernel.d)
    if n_edges == 0:
        return 1
    sites = {base}
    for _ in range(n_edges):
        sites |= {add(v, e) for v in sites for e in kernel.support}
    bonds = sorted(
        {make_edge(v, add(v, e)) for v in sites for e in kernel.support if add(v, e) in sites}
    )
    count = 0
    for subset in itertools.combinations(bonds, n_edges):
        tree = LatticeTree.from_edges(subset)
        if base in tree.vertices and tree.is_tree():
            count += 1
    return count


def partition_function(kernel: Kernel, z: Fraction, max_edges: int) -> Fraction:
    """rho_z truncated at max_edges bonds: the total weight of trees containing o."""
    ensure_subcritical(kernel, z, "partition_function")
    return sum(
        (t.weight(kernel, z) for level in trees_by_edges(kernel, max_edges) for t in level),
        Fraction(0),
    )


def interval_partition_function(z: Fraction) -> Fraction:
    """Closed form of rho_z on Z with nearest-neighbor bonds: 1 / (1 - z/2)^2."""
    return 1 / (1 - Fraction(z) / 2) ** 2


def max_extent(tree: LatticeTree, root: Site) -> int:
    """Largest sup-norm distance of a vertex from root."""
    return max(sup_norm(sub(v, tuple(root))) for v in tree.vertices)
