"""Voter model from a single 1 at the origin.

The cluster of 1s is simulated forward from the flip rates. Every flip is
an arrow of the graphical construction; arrows between two occupied sites
cause no flip but are sampled as well, because dual walks traverse them.
Arrows between two empty sites are drawn lazily, per site and unit time
block, from a rate-1 Poisson stream thinned to empty sources. Together
they answer every ancestry query about occupied points and membership
queries for sites next to the range.
"""

import bisect
import math
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Set, Tuple

import numpy as np

from rangelab.ancestry import CONTINUOUS, AncestralPath, AncestralSystem, Point
from rangelab.exceptions import PreconditionError
from rangelab.lattice import Kernel, Site, add, origin, sup_norm, sub
from rangelab.logging import get_logger

logger = get_logger(__name__)

BIRTH = "birth"
DEATH = "death"
SILENT = "silent"

_BLOCK = 1024


def _zigzag(c: int) -> int:
    return 2 * c if c >= 0 else -2 * c - 1


@dataclass(frozen=True)
class ArrowEvent:
    """Arrow at ``time`` from ``source`` to ``target``: the target adopts the source's opinion."""

    time: float
    source: Site
    target: Site
    kind: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "time": self.time,
            "kind": self.kind,
            "source": list(self.source),
            "target": list(self.target),
        }


@dataclass
class DualWalk:
    """Backward trace s -> W^{t,x}_s, a left-continuous step function of backward time."""

    terminal: Point
    jumps: List[Tuple[float, Site]] = field(default_factory=list)

    def at(self, u: float) -> Site:
        """Evaluate W at backward time u."""
        site = self.terminal[1]
        for ju, y in self.jumps:
            if ju < u:
                site = y
            else:
                break
        return site

    @property
    def end(self) -> Site:
        """W^{t,x}_t."""
        return self.jumps[-1][1] if self.jumps else self.terminal[1]

    def forward_path(self) -> AncestralPath:
        """The ancestral path w_s = W_{(t-s)+}."""
        t, x = self.terminal
        sites = [x] + [y for _, y in self.jumps]
        times = [t - u for u, _ in self.jumps]
        breakpoints: List[Tuple[float, Site]] = [(0.0, sites[-1])]
        for i in range(len(times) - 1, -1, -1):
            breakpoints.append((times[i], sites[i]))
        return AncestralPath(breakpoints=breakpoints, terminal=(t, x))


class VoterRealization(AncestralSystem):
    """Arrow log of one voter cluster and the ancestral system it induces."""

    time_kind = CONTINUOUS
    unique_ancestral_paths = True
    model_tag = "voter"

    def __init__(
        self,
        kernel: Kernel,
        arrows: List[ArrowEvent],
        t_max: float,
        truncated: bool = False,
        dual_seed: int = 0,
    ):
        super().__init__(kernel.d, truncated)
        self.kernel = kernel
        self.arrows = arrows
        self.t_max = float(t_max)
        self.dual_seed = int(dual_seed)
        self._silent: Dict[Tuple[Site, int], List[Tuple[float, Site]]] = {}
        self._into: Dict[Site, Tuple[List[float], List[Site]]] = {}
        self._intervals: Dict[Site, List[List[float]]] = {origin(self.d): [[0.0, math.inf]]}
        self._dual_cache: Dict[Point, DualWalk] = {}
        population = 1
        self._extinction = math.inf
        for arrow in arrows:
            times, sources = self._into.setdefault(arrow.target, ([], []))
            times.append(arrow.time)
            sources.append(arrow.source)
            if arrow.kind == BIRTH:
                self._intervals.setdefault(arrow.target, []).append([arrow.time, math.inf])
                population += 1
            elif arrow.kind == DEATH:
                self._intervals[arrow.target][-1][1] = arrow.time
                population -= 1
                if population == 0:
                    self._extinction = arrow.time
        self._event_times = [0.0] + [a.time for a in arrows]

    @property
    def horizon(self) -> float:
        return min(self.t_max, self._extinction)

    def survival_time(self) -> float:
        return self._extinction

    def event_times(self) -> List[float]:
        return list(self._event_times)

    def occupied(self, t: float) -> FrozenSet[Site]:
        if t > self.t_max and not self.extinct():
            raise PreconditionError(f"Time {t} beyond horizon {self.t_max}")
        return frozenset(
            x
            for x, intervals in self._intervals.items()
            if any(a <= t < b for a, b in intervals)
        )

    def is_occupied(self, t: float, x: Site) -> bool:
        return any(a <= t < b for a, b in self._intervals.get(tuple(x), ()))

    def range_sites(self) -> Set[Site]:
        return set(self._intervals)

    def mass_profile(self) -> Tuple[np.ndarray, np.ndarray]:
        """|T_t| as a step function, read from births and deaths in the arrow log."""
        times, masses = [0.0], [1.0]
        for arrow in self.arrows:
            if arrow.kind == BIRTH:
                times.append(arrow.time)
                masses.append(masses[-1] + 1)
            elif arrow.kind == DEATH:
                times.append(arrow.time)
                masses.append(masses[-1] - 1)
        return np.asarray(times), np.asarray(masses)

    def sites_by(self, t: float) -> int:
        """Number of distinct sites occupied at some time <= t."""
        return sum(1 for intervals in self._intervals.values() if intervals[0][0] <= t)

    def _check_query(self, x: Site) -> None:
        if x in self._intervals or x in self._into:
            return
        L = self.kernel.L
        if not any(sup_norm(sub(x, y)) <= L for y in self._intervals):
            raise PreconditionError(f"Site {x} lies outside the logged neighborhood")

    def _block_arrows(self, y: Site, block: int) -> List[Tuple[float, Site]]:
        """Candidate arrows into y during [block, block + 1), latest first."""
        key = (y, block)
        cached = self._silent.get(key)
        if cached is None:
            seq = np.random.SeedSequence([self.dual_seed, block, *(_zigzag(c) for c in y)])
            rng = np.random.Generator(np.random.Philox(seq))
            count = int(rng.poisson(1.0))
            cached = []
            if count:
                times = np.sort(block + rng.random(count))[::-1]
                steps = self.kernel.sample_steps(rng, count)
                cached = [
                    (tau, add(y, tuple(step))) for tau, step in zip(times.tolist(), steps.tolist())
                ]
            self._silent[key] = cached
        return cached

    def _empty_arrow(self, y: Site, lower: float, upper: float) -> Optional[Tuple[float, Site]]:
        """Latest arrow into y in (lower, upper) from a source that holds 0.

        y must hold 0 throughout (lower, upper); arrows from occupied sources
        there would be births, which are logged.
        """
        for block in range(int(math.floor(upper)), int(math.floor(lower)) - 1, -1):
            for tau, z in self._block_arrows(y, block):
                if lower < tau < upper and not self.is_occupied(tau, z):
                    return tau, z
        return None

    def dual_walk(self, t: float, x: Site) -> DualWalk:
        """Trace the opinion at (t, x) back through the arrows into each site.

        The first step uses the latest arrow into x at a time <= t; later
        steps use arrows strictly before the current backward time. While
        the current site holds 0 between two logged arrows, the unlogged
        arrows from empty sources are drawn from its silent stream.

        Raises:
            PreconditionError: If t exceeds the horizon or x is far from the range
        """
        x = tuple(x)
        if t > self.t_max and not self.extinct():
            raise PreconditionError(f"Time {t} beyond horizon {self.t_max}")
        self._check_query(x)
        key = (float(t), x)
        cached = self._dual_cache.get(key)
        if cached is not None:
            return cached
        walk = DualWalk(terminal=key)
        current, bound, inclusive = x, float(t), True
        while True:
            times, sources = self._into.get(current, ((), ()))
            search = bisect.bisect_right if inclusive else bisect.bisect_left
            idx = search(times, bound)
            tau, source = (times[idx - 1], sources[idx - 1]) if idx else (0.0, None)
            if tau < bound and not self.is_occupied(0.5 * (tau + bound), current):
                silent = self._empty_arrow(current, tau, bound)
                if silent is not None:
                    tau, source = silent
            if source is None:
                break
            current = source
            walk.jumps.append((t - tau, current))
            bound, inclusive = tau, False
        self._dual_cache[key] = walk
        return walk

    def ancestral_path(self, t: float, x: Site) -> AncestralPath:
        if not self.is_occupied(t, x):
            raise PreconditionError(f"Site {tuple(x)} not occupied at time {t}")
        return self.dual_walk(t, x).forward_path()

    def ancestor(self, s: float, y: Site, t: float, x: Site) -> bool:
        if s > t or s < 0 or not self.is_occupied(t, x):
            return False
        return self.dual_walk(t, x).at(t - s) == tuple(y)

    def ancestors(self, s: float, t: float, x: Site) -> FrozenSet[Site]:
        if s > t or s < 0 or not self.is_occupied(t, x):
            return frozenset()
        return frozenset({self.dual_walk(t, x).at(t - s)})

    def occupancy_gaps(self) -> List[Point]:
        """Sources that hold 0 on arrows a dual from an occupied point can cross.

        Those are the births and silent arrows; a death leaves its target empty.
        """
        return [
            (a.time, a.source)
            for a in self.arrows
            if a.kind != DEATH and not self.is_occupied(a.time, a.source)
        ]

    def terminal_points(self) -> List[Point]:
        points: List[Point] = [(0.0, self.root)]
        points.extend((a.time, a.target) for a in self.arrows if a.kind != DEATH)
        return points

    def descendants(self, s: float, y: Site, t: float) -> Set[Site]:
        """Sites z in T_t with (s, y) -> (t, z)."""
        return {z for z in self.occupied(t) if self.ancestor(s, y, t, z)}

    def displacement_moment(self, s: float, t: float, p: int) -> float:
        """Sum over x in T_t of |x - y|^p, y the ancestor of (t, x) at time t - s."""
        total = 0.0
        for x in self.occupied(t):
            y = self.dual_walk(t, x).at(s)
            total += math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y))) ** p
        return total

    def log_header(self) -> Dict[str, Any]:
        return {
            "kernel": self.kernel.to_dict(),
            "t_max": self.t_max,
            "horizon": self.horizon,
            "dual_seed": self.dual_seed,
        }

    def event_records(self) -> List[Dict[str, Any]]:
        return [a.to_dict() for a in self.arrows]

    @classmethod
    def from_event_log(
        cls, header: Dict[str, Any], records: List[Dict[str, Any]]
    ) -> "VoterRealization":
        """Replay a persisted arrow log."""
        kernel = Kernel.from_dict(header["kernel"])
        arrows = [
            ArrowEvent(r["time"], tuple(r["source"]), tuple(r["target"]), r["kind"])
            for r in records
        ]
        return cls(
            kernel,
            arrows,
            header["t_max"],
            truncated=bool(header.get("truncated")),
            dual_seed=int(header.get("dual_seed", 0)),
        )


class _Draws:
    """Block-buffered draws from one generator."""

    def __init__(self, rng: np.random.Generator, kernel: Kernel):
        self.rng = rng
        self.kernel = kernel
        self._u: List[float] = []
        self._steps: List[Site] = []

    def uniform(self) -> float:
        if not self._u:
            self._u = self.rng.random(_BLOCK).tolist()
        return self._u.pop()

    def step(self) -> Site:
        if not self._steps:
            self._steps = [tuple(s) for s in self.kernel.sample_steps(self.rng, _BLOCK).tolist()]
        return self._steps.pop()


def simulate_voter(
    kernel: Kernel,
    rng: np.random.Generator,
    t_max: float,
    site_cap: int = 1_000_000,
) -> VoterRealization:
    """Event-driven voter simulation from a single 1 at the origin.

    Candidate events arrive at rate 2|T|. Each picks a uniform occupied
    site u and a kernel step: with probability 1/2 an arrow into u from
    u + step (a death if the source holds 0, silent otherwise), with
    probability 1/2 an arrow out of u to u + step (a birth if the target
    holds 0, otherwise rejected since the into-branch covers it). The
    accepted events have exactly the voter flip rates.

    Args:
        kernel: Step kernel
        rng: Generator for this replica
        t_max: Time horizon
        site_cap: Maximum number of distinct occupied sites

    Returns:
        VoterRealization, flagged truncated when the site cap is hit
    """
    if t_max <= 0:
        raise PreconditionError(f"t_max must be positive, got {t_max}")
    draws = _Draws(rng, kernel)
    o = origin(kernel.d)
    members: List[Site] = [o]
    index: Dict[Site, int] = {o: 0}
    seen: Set[Site] = {o}
    arrows: List[ArrowEvent] = []
    truncated = False
    t = 0.0

    while members:
        k = len(members)
        t += -math.log1p(-draws.uniform()) / (2 * k)
        if t > t_max:
            break
        u = members[int(draws.uniform() * k) % k]
        step = draws.step()
        if draws.uniform() < 0.5:
            source = add(u, step)
            if source in index:
                arrows.append(ArrowEvent(t, source, u, SILENT))
                continue
            arrows.append(ArrowEvent(t, source, u, DEATH))
            last = members.pop()
            if last != u:
                members[index[u]] = last
                index[last] = index[u]
            del index[u]
        else:
            target = add(u, step)
            if target in index:
                continue
            arrows.append(ArrowEvent(t, u, target, BIRTH))
            index[target] = len(members)
            members.append(target)
            seen.add(target)
            if len(seen) > site_cap:
                truncated = True
                logger.debug(f"Voter run hit site cap {site_cap} at t={t:.3f}")
                break

    horizon = t if truncated else t_max
    dual_seed = int(rng.integers(0, 2**63 - 1))
    return VoterRealization(kernel, arrows, horizon, truncated=truncated, dual_seed=dual_seed)


def voter_ancestral(realization: VoterRealization) -> VoterRealization:
    """The ancestral system of a voter realization (the realization itself)."""
    if realization.truncated:
        logger.warning("Ancestral queries on a truncated voter run stop at the truncation time")
    return realization


def simulate_walk_moment(
    kernel: Kernel, s: float, p: int, rng: np.random.Generator, samples: int
) -> np.ndarray:
    """Samples of |W_s|^p for the rate-1 continuous-time kernel walk.

    Args:
        kernel: Step kernel
        s: Time
        p: Power
        rng: Generator
        samples: Number of samples

    Returns:
        Array of |W_s|^p values
    """
    jumps = rng.poisson(s, size=samples)
    total = int(jumps.sum())
    steps = kernel.sample_steps(rng, total).astype(float)
    owners = np.repeat(np.arange(samples), jumps)
    positions = np.zeros((samples, kernel.d))
    np.add.at(positions, owners, steps)
    return np.sqrt((positions**2).sum(axis=1)) ** p
