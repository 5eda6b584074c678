"""Ancestral-relation contract, path extraction, rescaling and the modulus statistic.

An ancestral system answers three kinds of queries about one finished
realization: which sites are occupied at a time, whether one space-time
point is an ancestor of another, and which ancestral path leads to an
occupied point. Simulators build a system once; everything downstream
(axiom checks, rescaling, modulus, range statistics) only queries it.
"""

import bisect
import itertools
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from rangelab.exceptions import ConfigurationError, PreconditionError
from rangelab.lattice import Site, origin
from rangelab.logging import get_logger

logger = get_logger(__name__)

DISCRETE = "discrete"
CONTINUOUS = "continuous"

Point = Tuple[float, Site]

# Tolerance for recognizing rescaled coordinates as lattice points
_LATTICE_TOL = 1e-9


@dataclass
class AncestralPath:
    """Right-continuous step function s -> w_s ending at (t, x).

    ``breakpoints`` holds (time, site) pairs in increasing time order; the
    first breakpoint is at time 0.
    """

    breakpoints: List[Tuple[float, Site]]
    terminal: Point

    def at(self, s: float) -> Site:
        """Evaluate w_s."""
        t, x = self.terminal
        if s >= t:
            return x
        times = [b[0] for b in self.breakpoints]
        i = bisect.bisect_right(times, s) - 1
        return self.breakpoints[max(i, 0)][1]

    def jump_times(self) -> List[float]:
        return [b[0] for b in self.breakpoints[1:]]

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation
        """
        return {
            "breakpoints": [[s, list(y)] for s, y in self.breakpoints],
            "terminal": [self.terminal[0], list(self.terminal[1])],
        }


class AncestralSystem(ABC):
    """A finished realization answering occupancy and ancestry queries."""

    #: "discrete" or "continuous"
    time_kind: str = DISCRETE
    #: whether every occupied point has exactly one ancestral path
    unique_ancestral_paths: bool = True
    #: model tag written to event logs
    model_tag: str = "generic"

    def __init__(self, d: int, truncated: bool = False):
        self.d = d
        self.truncated = truncated

    @property
    def root(self) -> Site:
        return origin(self.d)

    @abstractmethod
    def occupied(self, t: float) -> FrozenSet[Site]:
        """T_t."""

    @abstractmethod
    def ancestor(self, s: float, y: Site, t: float, x: Site) -> bool:
        """(s, y) -> (t, x) for s <= t."""

    @abstractmethod
    def survival_time(self) -> float:
        """S = inf{t : T_t is empty}; infinity when not extinct within the horizon."""

    @abstractmethod
    def event_times(self) -> List[float]:
        """Times (including 0) at which occupancy or ancestry can change."""

    @abstractmethod
    def ancestral_path(self, t: float, x: Site) -> AncestralPath:
        """An ancestral path to (t, x); x must lie in T_t."""

    @property
    @abstractmethod
    def horizon(self) -> float:
        """Largest time the realization determines."""

    def is_occupied(self, t: float, x: Site) -> bool:
        return tuple(x) in self.occupied(t)

    def e(self, s: float, t: float, y: Site, x: Site) -> bool:
        """Ancestry indicator e_{s,t}(y, x), equal to [x = y in T_t] when s >= t."""
        if s >= t:
            return tuple(x) == tuple(y) and self.is_occupied(t, x)
        return self.ancestor(s, y, t, x)

    def extinct(self) -> bool:
        return math.isfinite(self.survival_time())

    def mass(self, t: float) -> float:
        """Total mass at time t in model units (site count by default)."""
        return float(len(self.occupied(t)))

    def representative_times(self) -> List[float]:
        """Times at which checking occupancy and ancestry is exhaustive."""
        if self.time_kind == DISCRETE:
            last = int(min(self.horizon, self.survival_time()))
            return [float(i) for i in range(last + 1)]
        return self.event_times()

    def occupied_points(self) -> Iterator[Point]:
        for t in self.representative_times():
            for x in sorted(self.occupied(t)):
                yield t, x

    def terminal_points(self) -> List[Point]:
        """Points whose ancestral paths cover every related pair."""
        return list(self.occupied_points())

    def ancestors(self, s: float, t: float, x: Site) -> FrozenSet[Site]:
        """Sites y with (s, y) -> (t, x)."""
        return frozenset(y for y in self.occupied(s) if self.ancestor(s, y, t, x))

    def occupancy_gaps(self) -> List[Point]:
        """Points (s, y) related to an occupied point while y is not in T_s."""
        times = self.representative_times()
        gaps: List[Point] = []
        for t, x in self.occupied_points():
            for s in times:
                if s > t:
                    break
                related = sorted(self.ancestors(s, t, x))
                gaps.extend((s, y) for y in related if not self.is_occupied(s, y))
        return gaps

    def range_sites(self) -> Set[Site]:
        """All sites ever occupied."""
        sites: Set[Site] = set()
        for t in self.representative_times():
            sites.update(self.occupied(t))
        return sites

    def mass_profile(self) -> Tuple[np.ndarray, np.ndarray]:
        """Mass as a right-continuous step function.

        Returns:
            (times, masses): mass equals masses[i] on [times[i], times[i+1])
        """
        times = self.representative_times()
        masses = [self.mass(t) for t in times]
        S = self.survival_time()
        if math.isfinite(S) and (not times or times[-1] < S):
            times.append(S)
            masses.append(0.0)
        return np.asarray(times, dtype=float), np.asarray(masses, dtype=float)

    def log_header(self) -> Dict[str, Any]:
        """Model-specific event-log header fields."""
        return {"horizon": self.horizon}

    def event_records(self) -> List[Dict[str, Any]]:
        """Event-log records for persistence."""
        return [
            {"time": t, "kind": "occupied", "sites": [list(x) for x in sorted(self.occupied(t))]}
            for t in self.representative_times()
        ]


class GenerationalSystem(AncestralSystem):
    """Discrete-time system stored as generations plus a site-level parent map.

    Ancestry is reachability: (i, y) -> (j, x) iff a chain of parent links
    joins them.
    """

    time_kind = DISCRETE
    unique_ancestral_paths = False
    model_tag = "generational"

    def __init__(
        self,
        d: int,
        generations: Sequence[FrozenSet[Site]],
        parents: Optional[Dict[Tuple[int, Site], FrozenSet[Site]]] = None,
        truncated: bool = False,
    ):
        super().__init__(d, truncated)
        self.generations: List[FrozenSet[Site]] = [frozenset(g) for g in generations]
        if not self.generations or self.generations[0] != frozenset({self.root}):
            raise PreconditionError("Generation 0 must be the origin alone")
        self.parents: Dict[Tuple[int, Site], FrozenSet[Site]] = dict(parents or {})
        self._ancestor_cache: Dict[Tuple[int, Site], List[FrozenSet[Site]]] = {}
        self._extinction = next(
            (i for i, g in enumerate(self.generations) if not g), math.inf
        )

    @property
    def horizon(self) -> float:
        return float(len(self.generations) - 1)

    def occupied(self, t: float) -> FrozenSet[Site]:
        i = int(math.floor(t))
        if i < 0:
            return frozenset()
        if i < len(self.generations):
            return self.generations[i]
        if math.isfinite(self._extinction):
            return frozenset()
        raise PreconditionError(f"Time {t} beyond horizon {self.horizon} of a truncated run")

    def survival_time(self) -> float:
        return float(self._extinction)

    def event_times(self) -> List[float]:
        return self.representative_times()

    def parents_of(self, i: int, x: Site) -> FrozenSet[Site]:
        return self.parents.get((i, tuple(x)), frozenset())

    def ancestor_sets(self, t: int, x: Site) -> List[FrozenSet[Site]]:
        """Sets A_k of sites at generation k related to (t, x), for k = 0..t."""
        key = (t, tuple(x))
        cached = self._ancestor_cache.get(key)
        if cached is not None:
            return cached
        levels: List[FrozenSet[Site]] = [frozenset()] * (t + 1)
        current = frozenset({tuple(x)})
        levels[t] = current
        for k in range(t, 0, -1):
            nxt: Set[Site] = set()
            for z in current:
                nxt.update(self.parents_of(k, z))
            current = frozenset(nxt)
            levels[k - 1] = current
        self._ancestor_cache[key] = levels
        return levels

    def ancestor(self, s: float, y: Site, t: float, x: Site) -> bool:
        i, j = int(math.floor(s)), int(math.floor(t))
        y, x = tuple(y), tuple(x)
        if i > j or i < 0:
            return False
        if x not in self.occupied(j) or y not in self.occupied(i):
            return False
        if i == j:
            return x == y
        return y in self.ancestor_sets(j, x)[i]

    def ancestors(self, s: float, t: float, x: Site) -> FrozenSet[Site]:
        i, j = int(math.floor(s)), int(math.floor(t))
        if i < 0 or i > j or tuple(x) not in self.occupied(j):
            return frozenset()
        return self.ancestor_sets(j, x)[i]

    def occupancy_gaps(self) -> List[Point]:
        """Parents of occupied sites that are not occupied one generation earlier."""
        gaps: List[Point] = []
        for (i, x), ps in sorted(self.parents.items()):
            if 0 < i < len(self.generations) and x in self.generations[i]:
                earlier = self.generations[i - 1]
                gaps.extend((float(i - 1), p) for p in sorted(ps) if p not in earlier)
        return gaps

    def ancestral_path(self, t: float, x: Site) -> AncestralPath:
        """Lexicographically least occupied path, chosen earliest generation first."""
        j = int(math.floor(t))
        x = tuple(x)
        if x not in self.occupied(j):
            raise PreconditionError(f"Site {x} not occupied at time {t}")
        levels = self.ancestor_sets(j, x)
        sites = [self.root]
        for k in range(1, j + 1):
            prev = sites[-1]
            options = [z for z in levels[k] if prev in self.parents_of(k, z)]
            sites.append(min(options))
        breakpoints: List[Tuple[float, Site]] = [(0.0, sites[0])]
        for k in range(1, j + 1):
            if sites[k] != sites[k - 1]:
                breakpoints.append((float(k), sites[k]))
        return AncestralPath(breakpoints=breakpoints, terminal=(float(t), x))

    def event_records(self) -> List[Dict[str, Any]]:
        records = []
        for (i, x), ps in sorted(self.parents.items()):
            sources = [list(p) for p in sorted(ps)]
            records.append({"time": i, "kind": "bond", "target": list(x), "sources": sources})
        return records


class RescaledSystem(AncestralSystem):
    """View of a system with time divided by n and space by sqrt(n)."""

    def __init__(self, base: AncestralSystem, n: float):
        if isinstance(base, RescaledSystem):
            raise ConfigurationError("Rescaled views are formed from the unscaled system only")
        if n < 1:
            raise ConfigurationError(f"Scale n must be >= 1, got {n}")
        super().__init__(base.d, base.truncated)
        self.base = base
        self.n = float(n)
        self.root_n = math.sqrt(self.n)
        self.time_kind = base.time_kind
        self.unique_ancestral_paths = base.unique_ancestral_paths
        self.model_tag = base.model_tag

    @property
    def root(self) -> Tuple[float, ...]:  # type: ignore[override]
        return (0.0,) * self.d

    def _time(self, t: float) -> float:
        u = t * self.n
        return float(math.floor(u + 1e-12)) if self.time_kind == DISCRETE else u

    def _site(self, x: Sequence[float]) -> Optional[Site]:
        scaled = [v * self.root_n for v in x]
        rounded = tuple(int(round(v)) for v in scaled)
        if any(abs(v - r) > _LATTICE_TOL * max(1.0, abs(v)) for v, r in zip(scaled, rounded)):
            return None
        return rounded

    def scale_site(self, x: Site) -> Tuple[float, ...]:
        return tuple(v / self.root_n for v in x)

    @property
    def horizon(self) -> float:
        return self.base.horizon / self.n

    def occupied(self, t: float) -> FrozenSet[Site]:  # type: ignore[override]
        return frozenset(self.scale_site(x) for x in self.base.occupied(self._time(t)))

    def is_occupied(self, t: float, x: Sequence[float]) -> bool:  # type: ignore[override]
        site = self._site(x)
        return site is not None and self.base.is_occupied(self._time(t), site)

    def ancestor(  # type: ignore[override]
        self, s: float, y: Sequence[float], t: float, x: Sequence[float]
    ) -> bool:
        ys, xs = self._site(y), self._site(x)
        if ys is None or xs is None or s > t:
            return False
        return self.base.e(self._time(s), self._time(t), ys, xs)

    def survival_time(self) -> float:
        return self.base.survival_time() / self.n

    def event_times(self) -> List[float]:
        return [t / self.n for t in self.base.event_times()]

    def representative_times(self) -> List[float]:
        return [t / self.n for t in self.base.representative_times()]

    def mass(self, t: float) -> float:
        return self.base.mass(self._time(t))

    def ancestral_path(  # type: ignore[override]
        self, t: float, x: Sequence[float]
    ) -> AncestralPath:
        site = self._site(x)
        if site is None:
            raise PreconditionError(f"{x} is not a rescaled lattice point")
        path = self.base.ancestral_path(self._time(t), site)
        return AncestralPath(
            breakpoints=[(s / self.n, self.scale_site(y)) for s, y in path.breakpoints],
            terminal=(t, self.scale_site(site)),
        )

    def occupancy_gaps(self) -> List[Point]:  # type: ignore[override]
        return [(s / self.n, self.scale_site(y)) for s, y in self.base.occupancy_gaps()]

    def range_points(self) -> np.ndarray:
        """The rescaled range as an array of shape (k, d)."""
        sites = sorted(self.base.range_sites())
        if not sites:
            return np.zeros((0, self.d))
        return np.asarray(sites, dtype=float) / self.root_n


def rescale(system: AncestralSystem, n: float) -> RescaledSystem:
    """Rescaled view T^(n)_t = T_{nt} / sqrt(n).

    Args:
        system: Unscaled ancestral system
        n: Scale, n >= 1

    Returns:
        Rescaled view

    Raises:
        ConfigurationError: If n < 1 or system is already rescaled
    """
    return RescaledSystem(system, n)


def extract_path(system: AncestralSystem, t: float, x: Site) -> AncestralPath:
    """Return an ancestral path to (t, x).

    Raises:
        PreconditionError: If x is not occupied at time t
    """
    if not system.is_occupied(t, x):
        raise PreconditionError(f"Site {tuple(x)} not occupied at time {t}")
    return system.ancestral_path(t, x)


# Axiom checking


@dataclass
class AxiomViolation:
    """One failed ancestral-relation axiom."""

    kind: str
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "detail": self.detail}


def _triple_count(sizes: List[int]) -> int:
    """Number of (s1 < s2 < s3, y1, y2, y3) candidates."""
    prefix = [0]
    for size in sizes:
        prefix.append(prefix[-1] + size)
    total = run_s = run_sp = 0
    for c in range(2, len(sizes)):
        a = c - 2
        run_s += sizes[a]
        run_sp += sizes[a] * prefix[a + 1]
        total += sizes[c] * (prefix[c] * run_s - run_sp)
    return total


def check_ar_axioms(
    system: AncestralSystem,
    sample_budget: int = 10_000,
    rng: Optional[np.random.Generator] = None,
) -> List[AxiomViolation]:
    """Check the ancestral-relation axioms on a finished realization.

    Root, reflexivity, occupancy and absorption checks run over every
    occupied space-time point. Transitivity and interpolation run over all
    time triples when their count fits in ``sample_budget`` and over
    ``sample_budget`` random triples otherwise.

    Args:
        system: Realized ancestral system
        sample_budget: Maximum number of triples examined
        rng: Generator used for sampling triples

    Returns:
        List of violations, empty when every check passes
    """
    violations: List[AxiomViolation] = []
    o = system.root
    if system.occupied(0) != frozenset({o}):
        violations.append(AxiomViolation("initial", {"T0": sorted(system.occupied(0))}))

    times = system.representative_times()
    if system.truncated:
        times = [t for t in times if t < system.horizon]
    occ = {t: sorted(system.occupied(t)) for t in times}

    dead_since: Optional[float] = None
    for t in times:
        sites = occ[t]
        if not sites:
            dead_since = t if dead_since is None else dead_since
            continue
        if dead_since is not None:
            violations.append(AxiomViolation("death", {"empty_at": dead_since, "occupied_at": t}))
        for x in sites:
            if not system.ancestor(t, x, t, x):
                violations.append(AxiomViolation("reflexive", {"t": t, "x": x}))
            if not system.ancestor(0.0, o, t, x):
                violations.append(AxiomViolation("root", {"t": t, "x": x}))
            # distinct sites at equal times are unrelated
            for y in sorted(system.ancestors(t, t, x) - {x}):
                violations.append(AxiomViolation("reflexive", {"t": t, "y": y, "x": x}))

    for s, y in system.occupancy_gaps():
        violations.append(AxiomViolation("occupancy", {"s": s, "y": y}))

    live = [t for t in times if occ[t]]
    sizes = [len(occ[t]) for t in live]
    exhaustive = _triple_count(sizes) <= sample_budget

    def examine(a: int, b: int, c: int, y1: Site, y3: Site, middles: Sequence[Site]) -> None:
        s1, s2, s3 = live[a], live[b], live[c]
        related13 = system.ancestor(s1, y1, s3, y3)
        witness = False
        for y2 in middles:
            r12 = system.ancestor(s1, y1, s2, y2)
            r23 = system.ancestor(s2, y2, s3, y3)
            if r12 and r23:
                witness = True
                if not related13:
                    violations.append(
                        AxiomViolation(
                            "transitivity", {"s": [s1, s2, s3], "y": [y1, y2, y3]}
                        )
                    )
        if related13 and not witness and len(middles) == len(occ[s2]):
            violations.append(
                AxiomViolation("interpolation", {"s": [s1, s2, s3], "y1": y1, "y3": y3})
            )

    if exhaustive:
        for a in range(len(live)):
            for c in range(a + 2, len(live)):
                for b in range(a + 1, c):
                    for y1 in occ[live[a]]:
                        for y3 in occ[live[c]]:
                            examine(a, b, c, y1, y3, occ[live[b]])
    elif len(live) >= 3:
        rng = rng if rng is not None else np.random.default_rng(0)
        for _ in range(sample_budget):
            a, b, c = sorted(rng.choice(len(live), size=3, replace=False).tolist())
            y3 = occ[live[c]][int(rng.integers(len(occ[live[c]])))]
            if rng.random() < 0.5:
                y1 = system.ancestral_path(live[c], y3).at(live[a])
            else:
                y1 = occ[live[a]][int(rng.integers(len(occ[live[a]])))]
            examine(a, b, c, y1, y3, occ[live[b]])

    logger.debug(
        f"Axiom check: {len(violations)} violations over {len(live)} live times "
        f"(exhaustive={exhaustive})"
    )
    return violations


def check_paths(
    system: AncestralSystem, points: Optional[Sequence[Point]] = None, pairs_per_path: int = 8
) -> List[AxiomViolation]:
    """Audit ancestral paths: endpoints, occupancy along the path and relatedness.

    Args:
        system: Realized ancestral system
        points: Terminal points to audit (all terminal points by default)
        pairs_per_path: Breakpoint pairs spot-checked per path

    Returns:
        List of violations
    """
    violations: List[AxiomViolation] = []
    for t, x in points if points is not None else system.terminal_points():
        path = system.ancestral_path(t, x)
        if path.at(t) != tuple(x) or path.at(0.0) != system.root:
            violations.append(AxiomViolation("path-endpoint", {"t": t, "x": x}))
        if system.time_kind == DISCRETE and any(s != int(s) for s in path.jump_times()):
            violations.append(AxiomViolation("path-integer", {"t": t, "x": x}))
        marks = [s for s, _ in path.breakpoints] + [t]
        for s in marks:
            if s <= t and not system.is_occupied(s, path.at(s)):
                violations.append(AxiomViolation("path-occupancy", {"t": t, "x": x, "s": s}))
        for s1, s2 in itertools.islice(itertools.combinations(marks, 2), pairs_per_path):
            if s1 <= s2 <= t and not system.e(s1, s2, path.at(s1), path.at(s2)):
                violations.append(AxiomViolation("path-relation", {"t": t, "x": x, "s": [s1, s2]}))
    return violations


# Modulus of continuity


@dataclass
class ModulusReport:
    """Delta^(n)(rho) on one realization."""

    n: float
    rho_grid: List[float]
    delta: List[float]
    lower_bound: bool = False
    terminal_points: int = 0

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation
        """
        return {
            "n": self.n,
            "rho_grid": self.rho_grid,
            "delta": self.delta,
            "lower_bound": self.lower_bound,
            "terminal_points": self.terminal_points,
        }


def _path_pairs(path: AncestralPath, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Minimal time gaps and displacements between pieces of one path."""
    times = np.array([b[0] for b in path.breakpoints], dtype=float)
    sites = np.array([b[1] for b in path.breakpoints], dtype=float).reshape(-1, d)
    k = len(times)
    if k < 2:
        return np.zeros(0), np.zeros(0)
    i, j = np.triu_indices(k, k=1)
    gaps = times[j] - times[i + 1]
    disp = np.sqrt(((sites[j] - sites[i]) ** 2).sum(axis=1))
    return gaps, disp


def modulus_stat(view: RescaledSystem, rho_grid: Sequence[float]) -> ModulusReport:
    """Largest rescaled displacement over related pairs within rescaled time rho.

    Pieces i < j of an ancestral path can be joined within time rho when
    the start of piece j is less than rho after the end of piece i, so
    Delta(0) = 0.

    Args:
        view: Rescaled system
        rho_grid: Increasing rho values

    Returns:
        ModulusReport; flagged as a lower bound when paths are not unique
    """
    base, n = view.base, view.n
    all_gaps: List[np.ndarray] = []
    all_disp: List[np.ndarray] = []
    points = base.terminal_points()
    for t, x in points:
        gaps, disp = _path_pairs(base.ancestral_path(t, x), base.d)
        all_gaps.append(gaps)
        all_disp.append(disp)
    gaps = np.concatenate(all_gaps) / n if all_gaps else np.zeros(0)
    disp = np.concatenate(all_disp) / math.sqrt(n) if all_disp else np.zeros(0)

    order = np.argsort(gaps, kind="stable")
    gaps, disp = gaps[order], np.maximum.accumulate(disp[order]) if len(disp) else disp
    delta = []
    for rho in rho_grid:
        k = int(np.searchsorted(gaps, rho, side="left"))
        delta.append(float(disp[k - 1]) if k > 0 else 0.0)
    return ModulusReport(
        n=n,
        rho_grid=[float(r) for r in rho_grid],
        delta=delta,
        lower_bound=not base.unique_ancestral_paths,
        terminal_points=len(points),
    )


# Event logs


def write_event_log(path: Path, system: AncestralSystem, seed: Optional[int] = None) -> Path:
    """Persist a realization as JSON lines: one header then one record per event.

    Args:
        path: Output file
        system: Realized system
        seed: Seed recorded in the header

    Returns:
        The written path
    """
    header = {"model": system.model_tag, "d": system.d, "seed": seed, "truncated": system.truncated}
    header.update(system.log_header())
    path = Path(path)
    with open(path, "w") as f:
        f.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for record in system.event_records():
            f.write(json.dumps(record, sort_keys=True) + "\n")
    logger.debug(f"Event log written: {path}")
    return path


def read_event_log(path: Path) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    """Read a JSON-lines event log.

    Returns:
        Tuple of (header, records)
    """
    with open(path) as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or "header" not in lines[0]:
        raise PreconditionError(f"Event log {path} has no header")
    return lines[0]["header"], lines[1:]


def generational_from_records(
    header: Dict[str, Any], records: List[Dict[str, Any]]
) -> GenerationalSystem:
    """Rebuild a generational system from bond records."""
    d = int(header["d"])
    parents: Dict[Tuple[int, Site], FrozenSet[Site]] = {}
    last = 0
    for r in records:
        i = int(r["time"])
        parents[(i, tuple(r["target"]))] = frozenset(tuple(p) for p in r["sources"])
        last = max(last, i)
    generations: List[Set[Site]] = [set() for _ in range(last + 1)]
    generations[0].add(origin(d))
    for i, x in parents:
        generations[i].add(x)
    horizon = int(header.get("horizon", last))
    while len(generations) <= horizon:
        generations.append(set())
    return GenerationalSystem(
        d,
        [frozenset(g) for g in generations],
        parents,
        truncated=bool(header.get("truncated", False)),
    )
