"""Model-agnostic Monte Carlo estimators over model suppliers.

Every estimator runs one replica set through the farm and evaluates all
grid points on the same replicas, so curves are exactly monotone where
the underlying events are nested. Conditioning on survival is done by
keeping the surviving replicas; survivor counts are reported.
"""

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from rangelab.ancestry import AncestralSystem, ModulusReport, modulus_stat, rescale
from rangelab.exceptions import PreconditionError
from rangelab.farm import ReplicaFarm
from rangelab.lattice import hausdorff_d0, radius_r0, scaling_m
from rangelab.loader import ModelSupplier
from rangelab.logging import get_logger
from rangelab.sbm import SbmParams, one_arm_limit, solve_vd
from rangelab.types import Curve, EstimatorReport, OneArmCurve, SurvivalCurve

logger = get_logger(__name__)

# Below this many conditioned replicas, range statistics are flagged
MIN_SURVIVORS = 100

# Runs alive at n*s are replayed up to this multiple of n*s
RANGE_EXTENSION = 100.0

# One-arm runs reach time ONE_ARM_HORIZON * r_max^2
ONE_ARM_HORIZON = 4.0


def wilson_interval(
    successes: np.ndarray, trials: int, confidence: float = 0.95
) -> Tuple[np.ndarray, np.ndarray]:
    """Wilson score interval for binomial proportions.

    Args:
        successes: Success counts
        trials: Number of trials
        confidence: Two-sided confidence level

    Returns:
        (lower, upper) arrays
    """
    k = np.asarray(successes, dtype=float)
    if trials == 0:
        return np.zeros_like(k), np.ones_like(k)
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    p = k / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z / denom * np.sqrt(p * (1 - p) / trials + z * z / (4.0 * trials * trials))
    return np.clip(center - half, 0.0, 1.0), np.clip(center + half, 0.0, 1.0)


def _check_grid(grid: Sequence[float], name: str) -> np.ndarray:
    values = np.asarray(grid, dtype=float)
    if values.size == 0 or np.any(np.diff(values) <= 0):
        raise PreconditionError(f"{name} grid must be non-empty and increasing, got {list(grid)}")
    return values


def event_count(system: AncestralSystem) -> int:
    arrows = getattr(system, "arrows", None)
    if arrows is not None:
        return len(arrows)
    return int(sum(len(g) for g in getattr(system, "generations", ())))


def _farm(supplier: ModelSupplier, seed: int, experiment_id: str, workers: int) -> ReplicaFarm:
    return ReplicaFarm(supplier.name, workers=workers, experiment_id=experiment_id, seed=seed)


def _proportion_curve(
    cls: type,
    grid_name: str,
    grid: np.ndarray,
    hits: np.ndarray,
    trials: int,
    normalizer: np.ndarray,
    descriptions: Dict[str, str],
) -> Curve:
    estimate = hits / trials if trials else np.zeros_like(grid)
    stderr = np.sqrt(estimate * (1 - estimate) / trials) if trials else np.zeros_like(grid)
    ci_lo, ci_hi = wilson_interval(hits, trials)
    return cls(
        grid_name=grid_name,
        grid=grid,
        estimate=estimate,
        stderr=stderr,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        normalized=normalizer * estimate,
        replicas=trials,
        descriptions=descriptions,
    )


# Survival


def _survival_task(
    supplier: ModelSupplier, replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    return {
        "S": system.survival_time(),
        "truncated": system.truncated,
        "events": event_count(system),
    }


def estimate_survival(
    supplier: ModelSupplier,
    t_grid: Sequence[float],
    replicas: int,
    seed: int,
    workers: int = 1,
    experiment_id: str = "survival",
) -> SurvivalCurve:
    """theta(t) = P(S > t) on a grid, from one shared replica set.

    Runs that are not extinct by the horizon (including truncated runs)
    count as surviving at every grid point.

    Args:
        supplier: Model supplier
        t_grid: Increasing times
        replicas: Number of replicas
        seed: Master seed
        workers: Parallel workers
        experiment_id: Random-stream key

    Returns:
        SurvivalCurve with the normalized column m(t)·theta(t)
    """
    grid = _check_grid(t_grid, "t")
    supplier = supplier.with_horizon(float(grid[-1]))
    records = _farm(supplier, seed, experiment_id, workers).map(
        partial(_survival_task, supplier), replicas, desc="Survival"
    )
    S = np.array([r.payload["S"] for r in records])
    hits = (S[None, :] > grid[:, None]).sum(axis=1)
    sf = supplier.scaling()
    m = np.array([scaling_m(sf, t) for t in grid])
    curve = _proportion_curve(
        SurvivalCurve,
        "t",
        grid,
        hits,
        len(records),
        m,
        {
            "t": "time [model units: generations or continuous time]",
            "estimate": "theta(t) = P(S > t)",
            "stderr": "binomial standard error of theta(t)",
            "ci_lo": "Wilson 95% lower bound",
            "ci_hi": "Wilson 95% upper bound",
            "normalized": f"m(t) * theta(t), m = {sf.tag}",
            "replicas": "replicas in the shared set",
        },
    )
    curve.extras = {
        "model": supplier.describe(),
        "truncated": sum(r.status == "truncated" for r in records),
        "seed": seed,
    }
    logger.info(f"Survival curve for {supplier.name}: envelope {curve.envelope}")
    return curve


# One-arm probability


def _one_arm_task(
    supplier: ModelSupplier, r_max: float, replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    r0 = radius_r0(list(system.range_sites()))
    return {
        "r0": r0,
        "extinct": system.extinct(),
        "decided": system.extinct() or r0 > r_max,
        "truncated": system.truncated,
        "events": event_count(system),
    }


def one_arm_prediction(
    supplier: ModelSupplier, params: Optional[SbmParams] = None, tol: float = 1e-6
) -> Optional[float]:
    """Predicted limit of m(r²)·eta_r: σ0²·s_D·v_d(0)/2."""
    if supplier.spaceless or supplier.kernel is None:
        return None
    params = params or supplier.sbm_params()
    vd0 = solve_vd(supplier.kernel.d, tol=tol).v0
    return one_arm_limit(params, vd0, params.s_D)


def estimate_one_arm(
    supplier: ModelSupplier,
    r_grid: Sequence[float],
    replicas: int,
    seed: int,
    params: Optional[SbmParams] = None,
    workers: int = 1,
    experiment_id: str = "one-arm",
    horizon_factor: float = ONE_ARM_HORIZON,
) -> OneArmCurve:
    """eta_r = P(r0(R) > r) on a grid, with the predicted limit of m(r²)·eta_r.

    The horizon is raised to horizon_factor * max(r)². A run is decided
    once it is extinct or its range has left the largest ball; undecided
    runs contribute the range reached so far and are counted as
    unfinished.

    Args:
        supplier: Model supplier
        r_grid: Increasing radii (lattice units)
        replicas: Number of replicas
        seed: Master seed
        params: SBM parameters; defaults to the supplier's pairing
        workers: Parallel workers
        experiment_id: Random-stream key
        horizon_factor: Horizon in units of max(r)²

    Returns:
        OneArmCurve

    Raises:
        PreconditionError: If the grid is empty or not increasing
    """
    grid = _check_grid(r_grid, "r")
    r_max = float(grid[-1])
    supplier = supplier.with_horizon(horizon_factor * r_max * r_max)
    records = _farm(supplier, seed, experiment_id, workers).map(
        partial(_one_arm_task, supplier, r_max), replicas, desc="One-arm"
    )
    r0 = np.array([r.payload["r0"] for r in records])
    hits = (r0[None, :] > grid[:, None]).sum(axis=1)
    sf = supplier.scaling()
    m = np.array([scaling_m(sf, r * r) for r in grid])
    curve = _proportion_curve(
        OneArmCurve,
        "r",
        grid,
        hits,
        len(records),
        m,
        {
            "r": "radius [lattice units]",
            "estimate": "eta_r = P(r0(R) > r)",
            "stderr": "binomial standard error of eta_r",
            "ci_lo": "Wilson 95% lower bound",
            "ci_hi": "Wilson 95% upper bound",
            "normalized": f"m(r^2) * eta_r, m = {sf.tag}",
            "replicas": "replicas in the shared set",
        },
    )
    curve.prediction = one_arm_prediction(supplier, params)
    curve.extras = {
        "model": supplier.describe(),
        "prediction": curve.prediction,
        "unfinished": int(sum(not r.payload["decided"] for r in records)),
        "horizon": supplier.horizon,
        "seed": seed,
    }
    logger.info(f"One-arm curve for {supplier.name}: prediction {curve.prediction}")
    return curve


# Integrated mass


def integrate_step(times: np.ndarray, values: np.ndarray, a: float, b: float) -> float:
    """Integral over [a, b] of the step function equal to values[i] on [times[i], times[i+1])."""
    if b <= a or len(times) == 0:
        return 0.0
    ends = np.append(times[1:], math.inf)
    overlap = np.clip(np.minimum(ends, b) - np.maximum(times, a), 0.0, None)
    return float((values * overlap).sum())


def _mass_task(
    supplier: ModelSupplier,
    n: float,
    t0: float,
    t1: float,
    m_n: float,
    replica: int,
    rng: np.random.Generator,
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    times, masses = system.mass_profile()
    value = integrate_step(times, masses, n * t0, n * t1) / (n * m_n)
    return {
        "value": value,
        "S": system.survival_time() / n,
        "truncated": system.truncated,
        "events": event_count(system),
    }


@dataclass
class IntegratedMass:
    """Per-replica values of the integral of X^(n)_t(1) over [t0, t1]."""

    n: float
    t0: float
    t1: float
    m_n: float
    values: np.ndarray
    survival: np.ndarray
    seed: Optional[int] = None

    def conditioned(self, s: Optional[float] = None) -> np.ndarray:
        """Values on replicas with rescaled survival time beyond s (default t0)."""
        s = self.t0 if s is None else s
        return self.values[self.survival > s]

    def moments(self, p_max: int = 3, conditioned: bool = False) -> Dict[int, float]:
        sample = self.conditioned() if conditioned else self.values
        if sample.size == 0:
            return {p: float("nan") for p in range(1, p_max + 1)}
        return {p: float(np.mean(sample**p)) for p in range(1, p_max + 1)}

    def small_mass_curve(self, a_grid: Sequence[float]) -> Curve:
        """P(value <= a | S > t0) and its ratio to sqrt(a)."""
        grid = _check_grid(a_grid, "a")
        sample = self.conditioned()
        hits = (sample[None, :] <= grid[:, None]).sum(axis=1)
        curve = _proportion_curve(
            Curve,
            "a",
            grid,
            hits,
            int(sample.size),
            1.0 / np.sqrt(grid),
            {
                "a": "mass level [rescaled mass units]",
                "estimate": f"P(int_{self.t0:g}^{self.t1:g} X_s(1) ds <= a | S > {self.t0:g})",
                "stderr": "binomial standard error",
                "ci_lo": "Wilson 95% lower bound",
                "ci_hi": "Wilson 95% upper bound",
                "normalized": "estimate / sqrt(a)",
                "replicas": "surviving replicas",
            },
        )
        curve.extras = {"n": self.n, "t0": self.t0, "t1": self.t1}
        return curve

    def to_report(self) -> EstimatorReport:
        report = EstimatorReport.from_samples(
            "integrated_mass",
            self.values,
            parameters={"n": self.n, "t0": self.t0, "t1": self.t1, "m_n": self.m_n},
            seed=self.seed,
        )
        report.extras = {
            "moments": self.moments(),
            "conditioned_moments": self.moments(conditioned=True),
            "survivors": int(self.conditioned().size),
            "zero_fraction": float(np.mean(self.values == 0)),
        }
        return report


def integrated_mass(
    supplier: ModelSupplier,
    n: float,
    t0: float,
    t1: float,
    replicas: int,
    seed: int,
    workers: int = 1,
    experiment_id: str = "integrated-mass",
) -> IntegratedMass:
    """Integral of the rescaled total mass |T_{ns}|/m(n) over s in [t0, t1], per replica.

    Discrete-time models give the exact Riemann sum over generations / n.

    Raises:
        PreconditionError: If t0 >= t1 or n < 1
    """
    if not t0 < t1:
        raise PreconditionError(f"Need t0 < t1, got t0={t0}, t1={t1}")
    if n < 1:
        raise PreconditionError(f"Scale n must be >= 1, got {n}")
    supplier = supplier.with_horizon(n * t1)
    m_n = scaling_m(supplier.scaling(), n)
    records = _farm(supplier, seed, experiment_id, workers).map(
        partial(_mass_task, supplier, n, t0, t1, m_n), replicas, desc="Integrated mass"
    )
    return IntegratedMass(
        n=n,
        t0=t0,
        t1=t1,
        m_n=m_n,
        values=np.array([r.payload["value"] for r in records]),
        survival=np.array([r.payload["S"] for r in records]),
        seed=seed,
    )


# Range statistics


def _range_task(
    supplier: ModelSupplier,
    n: float,
    s: float,
    extension: float,
    keep_range: bool,
    replica: int,
    rng: np.random.Generator,
) -> Dict[str, Any]:
    state = rng.bit_generator.state
    system = supplier.with_horizon(n * s).simulate(replica, rng)
    if system.survival_time() / n > s and not system.extinct() and not system.truncated:
        # Same stream, longer horizon: the replayed run agrees up to n*s
        rng.bit_generator.state = state
        system = supplier.with_horizon(n * s * extension).simulate(replica, rng)
    sites = np.asarray(sorted(system.range_sites()), dtype=float) / math.sqrt(n)
    payload: Dict[str, Any] = {
        "S": system.survival_time() / n,
        "r0": radius_r0(sites),
        "extinct": system.extinct(),
        "truncated": system.truncated,
        "events": event_count(system),
    }
    if keep_range:
        payload["range"] = sites
    return payload


@dataclass
class RangeStatistics:
    """Conditional law of the rescaled range given S^(n) > s."""

    model: str
    n: float
    s: float
    replicas: int
    r0: np.ndarray
    d0: np.ndarray
    widened_ci: bool
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def survivors(self) -> int:
        return int(self.r0.size)

    def ks_against(self, other: "RangeStatistics") -> Dict[str, float]:
        """Two-sample Kolmogorov-Smirnov distance between conditional r0 laws."""
        result = stats.ks_2samp(self.r0, other.r0)
        return {"ks": float(result.statistic), "pvalue": float(result.pvalue)}

    def summary(self) -> Dict[str, Any]:
        quantiles = (
            np.quantile(self.r0, [0.1, 0.5, 0.9]).tolist() if self.r0.size else [float("nan")] * 3
        )
        return {
            "model": self.model,
            "n": self.n,
            "s": self.s,
            "replicas": self.replicas,
            "survivors": self.survivors,
            "widened_ci": self.widened_ci,
            "r0_mean": float(self.r0.mean()) if self.r0.size else float("nan"),
            "r0_q10": quantiles[0],
            "r0_median": quantiles[1],
            "r0_q90": quantiles[2],
            "d0_mean": float(self.d0.mean()) if self.d0.size else float("nan"),
            "d0_pairs": int(self.d0.size),
        }

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation
        """
        out = self.summary()
        out["extras"] = self.extras
        return out


def range_statistics(
    supplier: ModelSupplier,
    n: float,
    s: float,
    replicas: int,
    seed: int,
    workers: int = 1,
    keep_ranges: bool = True,
    experiment_id: str = "range",
    extension: float = RANGE_EXTENSION,
) -> RangeStatistics:
    """r0 of the full rescaled range and d0 between independent ranges, given S^(n) > s.

    Every replica first runs to time n*s. Runs still alive there are
    replayed on the same stream up to extension * n*s so that the range
    is taken over the whole lifetime. Kept runs that are still alive at
    the extended horizon, or that hit a cap, are counted in the extras.
    d0 is evaluated on consecutive pairs of surviving replicas.

    Raises:
        PreconditionError: If s <= 0 or extension < 1
    """
    if s <= 0:
        raise PreconditionError(f"Survival threshold must be positive, got {s}")
    if extension < 1:
        raise PreconditionError(f"Horizon extension must be >= 1, got {extension}")
    records = _farm(supplier, seed, experiment_id, workers).map(
        partial(_range_task, supplier, n, s, extension, keep_ranges), replicas, desc="Range"
    )
    kept = [r for r in records if r.payload["S"] > s]
    unfinished = sum(not r.payload["extinct"] for r in kept)
    capped = sum(r.status == "truncated" for r in kept)
    if unfinished:
        logger.warning(
            f"{unfinished} of {len(kept)} surviving replicas at n={n}, s={s} are still alive "
            f"at the extended horizon ({capped} hit a cap); their ranges are partial"
        )
    r0 = np.array([r.payload["r0"] for r in kept])
    d0 = np.zeros(0)
    if keep_ranges:
        d0 = np.array(
            [
                hausdorff_d0(kept[i].payload["range"], kept[i + 1].payload["range"])
                for i in range(0, len(kept) - 1, 2)
            ]
        )
    widened = len(kept) < MIN_SURVIVORS
    if widened:
        logger.warning(f"Only {len(kept)} surviving replicas at n={n}, s={s}; CIs are widened")
    return RangeStatistics(
        model=supplier.name,
        n=n,
        s=s,
        replicas=len(records),
        r0=r0,
        d0=d0,
        widened_ci=widened,
        extras={
            "model": supplier.describe(),
            "seed": seed,
            "horizon": max(supplier.horizon, n * s * extension),
            "unfinished": unfinished,
            "capped": capped,
        },
    )


def resampled_ks_quantile(
    sample: np.ndarray, q: float, draws: int, rng: np.random.Generator
) -> float:
    """Quantile of the KS distance between random halves of one sample.

    Calibrates what KS distance two samples of half this size from the
    same law typically show.
    """
    values = np.asarray(sample, dtype=float)
    if values.size < 4:
        raise PreconditionError(f"Need at least 4 values to split, got {values.size}")
    half = values.size // 2
    distances = []
    for _ in range(draws):
        perm = rng.permutation(values)
        distances.append(stats.ks_2samp(perm[:half], perm[half : 2 * half]).statistic)
    return float(np.quantile(distances, q))


# Modulus of continuity


def _modulus_task(
    supplier: ModelSupplier,
    n: float,
    rho_grid: Tuple[float, ...],
    replica: int,
    rng: np.random.Generator,
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    report = modulus_stat(rescale(system, n), rho_grid)
    return {"report": report, "truncated": system.truncated, "events": event_count(system)}


def estimate_modulus(
    supplier: ModelSupplier,
    n: float,
    rho_grid: Sequence[float],
    replicas: int,
    seed: int,
    workers: int = 1,
    experiment_id: str = "modulus",
) -> List[ModulusReport]:
    """Delta^(n)(rho) on every replica."""
    grid = tuple(float(r) for r in _check_grid(rho_grid, "rho"))
    records = _farm(supplier, seed, experiment_id, workers).map(
        partial(_modulus_task, supplier, n, grid), replicas, desc="Modulus"
    )
    return [r.payload["report"] for r in records]


def modulus_tail_frequency(
    reports: Sequence[ModulusReport], rho: float, C: float, alpha: float, n: float, m_n: float
) -> float:
    """m(n) times the fraction of replicas with Delta^(n)(rho) > C (rho^alpha + n^-alpha).

    Args:
        reports: Modulus reports, each with ``rho`` on its grid
        rho: Time lag
        C: Constant
        alpha: Exponent
        n: Scale
        m_n: m(n)

    Returns:
        Scaled exceedance frequency
    """
    if not reports:
        return 0.0
    threshold = C * (rho**alpha + n ** (-alpha))
    exceed = 0
    for report in reports:
        idx = report.rho_grid.index(float(rho))
        exceed += report.delta[idx] > threshold
    return m_n * exceed / len(reports)


# Pure-birth domination


@dataclass
class PureBirthFit:
    """Least-squares fit of log P(count >= N) = log C - lambda N."""

    lam: float
    C: float
    grid: List[float]
    tail: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {"lambda": self.lam, "C": self.C, "grid": self.grid, "tail": self.tail}


def pure_birth_tail(counts: Sequence[int], grid: Sequence[float]) -> PureBirthFit:
    """Fit the exponential tail of distinct-site counts.

    Grid points with an empty empirical tail are left out of the fit.

    Raises:
        PreconditionError: If fewer than two grid points have a positive tail
    """
    values = np.asarray(counts, dtype=float)
    points = _check_grid(grid, "N")
    tail = np.array([np.mean(values >= N) for N in points])
    mask = tail > 0
    if mask.sum() < 2:
        raise PreconditionError("Need at least two grid points with a positive tail to fit")
    slope, intercept = np.polyfit(points[mask], np.log(tail[mask]), 1)
    return PureBirthFit(
        lam=float(-slope),
        C=float(math.exp(intercept)),
        grid=points.tolist(),
        tail=tail.tolist(),
    )


def _sites_by(system: AncestralSystem, t: float) -> int:
    counter = getattr(system, "sites_by", None)
    if counter is not None:
        return int(counter(t))
    sites = set()
    for i in range(int(math.floor(min(t, system.horizon))) + 1):
        sites.update(system.occupied(i))
    return len(sites)


def _sites_task(
    supplier: ModelSupplier, t: float, replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    return {
        "sites": _sites_by(system, t),
        "truncated": system.truncated,
        "events": event_count(system),
    }


def distinct_sites(
    supplier: ModelSupplier,
    t: float,
    replicas: int,
    seed: int,
    workers: int = 1,
    experiment_id: str = "pure-birth",
) -> np.ndarray:
    """Number of distinct sites occupied by time t, per replica."""
    supplier = supplier.with_horizon(t)
    records = _farm(supplier, seed, experiment_id, workers).map(
        partial(_sites_task, supplier, t), replicas, desc="Distinct sites"
    )
    return np.array([r.payload["sites"] for r in records])