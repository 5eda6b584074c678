"""Checks of the convergence conditions on concrete models.

Simulated models get Monte Carlo estimates of each condition's left side
together with the bounding shape; oriented percolation on micro instances
gets exact identities from enumeration. Unsupported (condition, model)
pairs are refused with the list of supported pairs.
"""

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import partial
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from rangelab.ancestry import AncestralSystem, GenerationalSystem, check_ar_axioms, check_paths
from rangelab.estimators import estimate_survival, event_count
from rangelab.exceptions import PreconditionError, UnsupportedConditionError
from rangelab.farm import ReplicaFarm
from rangelab.lattice import Kernel, scaling_m, sub, sup_norm
from rangelab.loader import ModelSupplier, OpSupplier, VoterSupplier
from rangelab.logging import get_logger
from rangelab.models.op import condition3_identity, condition7_identity
from rangelab.models.voter import simulate_walk_moment
from rangelab.rng import AUX_STREAM, replica_rng
from rangelab.sbm import walk_moment
from rangelab.types import EstimatorReport

logger = get_logger(__name__)

SUPPORTED_CONDITIONS: Tuple[Tuple[int, str], ...] = (
    (2, "voter"),
    (2, "op"),
    (2, "brw"),
    (2, "gw"),
    (3, "voter"),
    (3, "op"),
    (4, "voter"),
    (4, "op"),
    (4, "brw"),
    (5, "op"),
    (5, "brw"),
    (7, "op"),
)

PARTIAL = "partial"
CONJECTURE_CHECK = "CONJECTURE-CHECK"


@dataclass
class ConditionReport:
    """Outcome of one condition check."""

    condition: int
    model: str
    verdict: str
    label: str
    rows: List[Dict[str, Any]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation
        """
        return {
            "condition": self.condition,
            "model": self.model,
            "verdict": self.verdict,
            "label": self.label,
            "rows": self.rows,
            "notes": self.notes,
            "extras": self.extras,
        }


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else float("nan")
    return float(values.mean()), se


def _farm(supplier: ModelSupplier, params: Dict[str, Any], experiment_id: str) -> ReplicaFarm:
    return ReplicaFarm(
        supplier.name,
        workers=int(params.get("workers", 1)),
        experiment_id=params.get("experiment_id", experiment_id),
        seed=int(params.get("seed", 0)),
    )


def _rational(value: Any) -> Fraction:
    return Fraction(value).limit_denominator(10**6) if isinstance(value, float) else Fraction(value)


# Condition 2: sup_t E|T_t|


def _mass_at(system: AncestralSystem, grid: Sequence[float]) -> List[float]:
    times, masses = system.mass_profile()
    idx = np.searchsorted(times, np.asarray(grid, dtype=float), side="right") - 1
    return [float(masses[i]) if i >= 0 else 0.0 for i in idx]


def _mass_task(
    supplier: ModelSupplier, grid: Tuple[float, ...], replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    return {
        "mass": _mass_at(system, grid),
        "truncated": system.truncated,
        "events": event_count(system),
    }


def _expected_mass(
    supplier: ModelSupplier, grid: Tuple[float, ...], params: Dict[str, Any]
) -> Tuple[np.ndarray, np.ndarray, int]:
    supplier = supplier.with_horizon(max(grid))
    records = _farm(supplier, params, "condition-2").map(
        partial(_mass_task, supplier, grid), int(params.get("replicas", 1000)), desc="Mass"
    )
    masses = np.array([r.payload["mass"] for r in records])
    se = masses.std(axis=0, ddof=1) / math.sqrt(len(records))
    return masses.mean(axis=0), se, len(records)


def condition2_check(supplier: ModelSupplier, params: Dict[str, Any]) -> ConditionReport:
    """sup over t of E|T_t|, with the martingale z-score |mean - 1|/SE per t.

    For OP, ``p_interval=(lo, hi)`` reruns the estimate at both ends of a
    p_c bracket and reports the band.
    """
    grid = tuple(float(t) for t in params.get("t_grid", (0, 1, 2, 5, 10, 20)))
    mean, se, replicas = _expected_mass(supplier, grid, params)
    rows = [
        {
            "t": t,
            "estimate": float(m),
            "stderr": float(s),
            "z_vs_one": float(abs(m - 1) / s) if s > 0 else 0.0,
            "replicas": replicas,
        }
        for t, m, s in zip(grid, mean, se)
    ]
    band = params.get("p_interval")
    if band is not None and isinstance(supplier, OpSupplier):
        for tag, p in zip(("p_lo", "p_hi"), band):
            shifted = OpSupplier(replace(supplier.params, p=float(p)), supplier.A, supplier.V)
            other, _, _ = _expected_mass(shifted, grid, params)
            for row, value in zip(rows, other):
                row[f"estimate_at_{tag}"] = float(value)
    sup = float(np.max(mean + 3 * se))
    bound = float(params.get("bound", 10.0))
    return ConditionReport(
        condition=2,
        model=supplier.name,
        verdict="bounded" if sup <= bound else "unbounded",
        label="empirical",
        rows=rows,
        notes=[f"sup_t (E|T_t| + 3 SE) = {sup:.4g} against bound {bound:g}"],
        extras={"martingale_consistent": all(r["z_vs_one"] < 4 for r in rows)},
    )


# Condition 3: restart survival


def _restart_task(
    supplier: ModelSupplier, s: float, t: float, replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    alive = sorted(system.occupied(s))
    payload: Dict[str, Any] = {
        "alive": bool(alive),
        "truncated": system.truncated,
        "events": event_count(system),
    }
    if alive:
        y = alive[int(rng.integers(len(alive)))]
        payload["restart"] = bool(system.descendants(s, y, s + t))
    return payload


def voter_restart_check(supplier: ModelSupplier, params: Dict[str, Any]) -> ConditionReport:
    """P(some descendant of (s, y) at s + t | y in T_s) against theta(t).

    y is uniform on T_s; the descendants of (s, y) are read from the same
    arrow log after time s. theta(t) comes from an independent replica set.
    """
    s, t = float(params.get("s", 5.0)), float(params.get("t", 10.0))
    if s <= 0 or t <= 0:
        raise PreconditionError(f"Need s, t > 0, got s={s}, t={t}")
    replicas = int(params.get("replicas", 1000))
    sup = supplier.with_horizon(s + t)
    records = _farm(sup, params, "condition-3").map(
        partial(_restart_task, sup, s, t), replicas, desc="Restart"
    )
    restarts = np.array([r.payload["restart"] for r in records if r.payload["alive"]], dtype=float)
    restart, restart_se = _mean_se(restarts)
    theta = estimate_survival(
        supplier,
        [t],
        replicas,
        int(params.get("seed", 0)) + 1,
        workers=int(params.get("workers", 1)),
        experiment_id="condition-3-theta",
    )
    theta_est, theta_se = float(theta.estimate[0]), float(theta.stderr[0])
    combined = math.hypot(restart_se, theta_se)
    m_t = scaling_m(supplier.scaling(), t)
    rows = [
        {
            "estimator": "restart",
            "estimate": restart,
            "stderr": restart_se,
            "replicas": int(restarts.size),
            "normalized": m_t * restart,
        },
        {
            "estimator": "theta",
            "estimate": theta_est,
            "stderr": theta_se,
            "replicas": theta.replicas,
            "normalized": m_t * theta_est,
        },
    ]
    agree = bool(abs(restart - theta_est) <= 3 * combined)
    return ConditionReport(
        condition=3,
        model=supplier.name,
        verdict="pass" if agree else "fail",
        label="empirical",
        rows=rows,
        notes=[
            f"|restart - theta| = {abs(restart - theta_est):.4g}, "
            f"3 combined SE = {3 * combined:.4g}"
        ],
        extras={"s": s, "t": t},
    )


def op_restart_check(supplier: OpSupplier, params: Dict[str, Any]) -> ConditionReport:
    """Exact restart identity for a micro OP instance."""
    p = _rational(params.get("p", supplier.params.p))
    rows = condition3_identity(supplier.kernel, p, int(params.get("s", 1)), int(params.get("t", 1)))
    return ConditionReport(
        condition=3,
        model=supplier.name,
        verdict="pass" if all(r.holds for r in rows) else "fail",
        label="exact",
        rows=[r.to_dict() for r in rows],
    )


# Condition 4: displacement moments


def _voter_displacement_task(
    supplier: ModelSupplier, s: float, t: float, p: int, replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    return {
        "moment": system.displacement_moment(s, t, p),
        "truncated": system.truncated,
        "events": event_count(system),
    }


def condition4_voter_check(
    kernel: Kernel,
    p: int,
    s: float,
    t: float,
    replicas: int,
    seed: int = 0,
    workers: int = 1,
    supplier: Optional[ModelSupplier] = None,
) -> Tuple[EstimatorReport, EstimatorReport]:
    """Two estimates of E sum_x sum_y 1((t-s, y) -> (t, x)) |x - y|^p.

    (a) sums over voter realizations directly; (b) samples |W_s|^p for
    the rate-1 kernel walk. Both carry the ratio to (s v 1)^{p/2}; the
    exact walk moment is attached to (b).

    Raises:
        PreconditionError: Unless 0 < s <= t and p is 6 or 8
    """
    if not 0 < s <= t:
        raise PreconditionError(f"Need 0 < s <= t, got s={s}, t={t}")
    if p not in (6, 8):
        raise PreconditionError(f"Power must be 6 or 8, got {p}")
    supplier = (supplier or VoterSupplier(kernel, t_max=t)).with_horizon(t)
    scale = max(s, 1.0) ** (p / 2)
    farm = ReplicaFarm(supplier.name, workers=workers, experiment_id="condition-4", seed=seed)
    task = partial(_voter_displacement_task, supplier, s, t, p)
    records = farm.map(task, replicas, desc="Condition 4")
    parameters = {"p": p, "s": s, "t": t, "kernel": kernel.to_dict()}

    direct = EstimatorReport.from_samples(
        "condition4_direct",
        [r.payload["moment"] for r in records],
        parameters=parameters,
        seed=seed,
    )
    direct.extras["ratio"] = direct.estimate / scale

    rng = replica_rng(seed, "condition-4-walk", 0, AUX_STREAM)
    reduction = EstimatorReport.from_samples(
        "condition4_walk",
        simulate_walk_moment(kernel, s, p, rng, replicas),
        parameters=parameters,
        seed=seed,
    )
    exact = walk_moment(kernel, _rational(s), p)
    reduction.extras.update(
        {"ratio": reduction.estimate / scale, "exact": str(exact), "exact_float": float(exact)}
    )
    logger.info(
        f"Condition 4 voter p={p} s={s} t={t}: direct {direct.estimate:.4g}, "
        f"walk {reduction.estimate:.4g}, exact {float(exact):.4g}"
    )
    return direct, reduction


def _generational_displacement_task(
    supplier: ModelSupplier,
    pairs: Tuple[Tuple[int, int], ...],
    p: int,
    replica: int,
    rng: np.random.Generator,
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    assert isinstance(system, GenerationalSystem)
    moments = []
    for s, t in pairs:
        total = 0.0
        if t <= system.horizon:
            for x in system.occupied(t):
                for y in system.ancestor_sets(t, x)[t - s]:
                    total += math.sqrt(sum(c * c for c in sub(x, y))) ** p
        moments.append(total)
    return {"moments": moments, "truncated": system.truncated, "events": event_count(system)}


def condition4_check(supplier: ModelSupplier, params: Dict[str, Any]) -> ConditionReport:
    """Condition 4 moments over (s, t) pairs, with the ratio to (s v 1)^{p/2}.

    The ratio column should stay flat; the verdict compares its spread
    against ``flat_factor``.
    """
    p = int(params.get("p", 6))
    pairs = tuple((int(s), int(t)) for s, t in params.get("pairs", ((4, 8), (16, 32))))
    rows: List[Dict[str, Any]] = []
    notes: List[str] = []
    if supplier.name == "voter":
        verdict_ok = True
        for s, t in pairs:
            direct, walk = condition4_voter_check(
                supplier.kernel,
                p,
                s,
                t,
                int(params.get("replicas", 1000)),
                int(params.get("seed", 0)),
                int(params.get("workers", 1)),
                supplier=supplier,
            )
            combined = math.hypot(direct.stderr, walk.stderr)
            agree = abs(direct.estimate - walk.estimate) <= 3 * combined
            verdict_ok = verdict_ok and agree
            rows.append(
                {
                    "s": s,
                    "t": t,
                    "direct": direct.estimate,
                    "direct_stderr": direct.stderr,
                    "walk": walk.estimate,
                    "walk_stderr": walk.stderr,
                    "exact": walk.extras["exact_float"],
                    "ratio": direct.extras["ratio"],
                    "agree": agree,
                }
            )
        verdict = "consistent" if verdict_ok else "inconsistent"
    else:
        if p % 2:
            raise PreconditionError(f"Power must be even, got {p}")
        sup = supplier.with_horizon(max(t for _, t in pairs))
        records = _farm(sup, params, "condition-4").map(
            partial(_generational_displacement_task, sup, pairs, p),
            int(params.get("replicas", 1000)),
            desc="Condition 4",
        )
        values = np.array([r.payload["moments"] for r in records])
        for k, (s, t) in enumerate(pairs):
            est, se = _mean_se(values[:, k])
            rows.append(
                {"s": s, "t": t, "estimate": est, "stderr": se, "ratio": est / max(s, 1) ** (p / 2)}
            )
        verdict = "reported"
    ratios = [r["ratio"] for r in rows if r["ratio"] > 0]
    spread = max(ratios) / min(ratios) if ratios else float("nan")
    flat_factor = float(params.get("flat_factor", 4.0))
    notes.append(
        f"ratio spread max/min = {spread:.4g} "
        f"(flat within factor {flat_factor:g}: {spread <= flat_factor})"
    )
    return ConditionReport(
        condition=4,
        model=supplier.name,
        verdict=verdict,
        label="empirical",
        rows=rows,
        notes=notes,
        extras={"p": p, "ratio_spread": spread, "flat": bool(spread <= flat_factor)},
    )


# Condition 5: small increments


def _step_audit_task(
    supplier: ModelSupplier, replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    assert isinstance(system, GenerationalSystem)
    longest = 0
    for (_, x), parents in system.parents.items():
        for y in parents:
            longest = max(longest, sup_norm(sub(x, y)))
    return {"max_step": longest, "truncated": system.truncated, "events": event_count(system)}


def condition5_check(supplier: ModelSupplier, params: Dict[str, Any]) -> ConditionReport:
    """Bounded-step models satisfy the small-increment condition structurally.

    The conditional probability on its left side is zero once every step
    is at most L; the audit confirms the step bound on every replica.
    """
    records = _farm(supplier, params, "condition-5").map(
        partial(_step_audit_task, supplier), int(params.get("replicas", 200)), desc="Step audit"
    )
    longest = max(r.payload["max_step"] for r in records)
    L = supplier.kernel.L
    return ConditionReport(
        condition=5,
        model=supplier.name,
        verdict="holds structurally" if longest <= L else "fail",
        label="structural",
        rows=[{"replicas": len(records), "max_step": longest, "L": L}],
        notes=["every parent link has sup-norm displacement at most L"] if longest <= L else [],
    )


# Condition 7


def condition7_check(supplier: OpSupplier, params: Dict[str, Any]) -> ConditionReport:
    """Exact factorization identity for a micro OP instance, term by term."""
    p = _rational(params.get("p", supplier.params.p))
    window = params.get("window")
    rows = condition7_identity(
        supplier.kernel,
        p,
        int(params.get("ell", 1)),
        int(params.get("m", 1)),
        int(params.get("M", 2)),
        tuple(window) if window is not None else None,
    )
    return ConditionReport(
        condition=7,
        model=supplier.name,
        verdict="pass" if all(r.holds for r in rows) else "fail",
        label="exact",
        rows=[r.to_dict() for r in rows],
    )


_CHECKS = {
    (2, "voter"): condition2_check,
    (2, "op"): condition2_check,
    (2, "brw"): condition2_check,
    (2, "gw"): condition2_check,
    (3, "voter"): voter_restart_check,
    (3, "op"): op_restart_check,
    (4, "voter"): condition4_check,
    (4, "op"): condition4_check,
    (4, "brw"): condition4_check,
    (5, "op"): condition5_check,
    (5, "brw"): condition5_check,
    (7, "op"): condition7_check,
}


def condition_check(
    which: int, supplier: ModelSupplier, params: Optional[Dict[str, Any]] = None
) -> ConditionReport:
    """Run one condition check on a model supplier.

    Args:
        which: Condition number (2, 3, 4, 5 or 7)
        supplier: Model supplier
        params: Check parameters (grids, replicas, seed, workers, exact-instance sizes)

    Returns:
        ConditionReport

    Raises:
        UnsupportedConditionError: If the pair is not supported
    """
    check = _CHECKS.get((which, supplier.name))
    if check is None:
        raise UnsupportedConditionError(
            f"Condition {which} is not supported for model {supplier.name}; "
            f"supported pairs: {list(SUPPORTED_CONDITIONS)}",
            supported=SUPPORTED_CONDITIONS,
        )
    logger.info(f"Checking condition {which} on {supplier.name}")
    report = check(supplier, dict(params or {}))
    logger.info(f"Condition {which} on {supplier.name}: {report.verdict}")
    return report


# Condition 6 moment surface and the OP moment conjecture


def _alive_mass_task(
    supplier: ModelSupplier, n: float, t: float, replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    return {
        "mass": _mass_at(system, (n * t,))[0],
        "S": system.survival_time() / n,
        "truncated": system.truncated,
        "events": event_count(system),
    }


def condition6_partial(supplier: ModelSupplier, params: Dict[str, Any]) -> ConditionReport:
    """Conditioned moments E[X^(n)_t(1)^k | S^(n) > s] across scales n.

    Only this moment-boundedness surface of the condition is checked;
    its weak-convergence content is not, so the report is labelled partial.
    """
    n_grid = [float(n) for n in params.get("n_grid", (50, 100, 200))]
    t = float(params.get("t", 1.0))
    s = float(params.get("s", t))
    k_max = int(params.get("p_max", 3))
    sf = supplier.scaling()
    rows = []
    for n in n_grid:
        sup = supplier.with_horizon(n * max(t, s))
        records = _farm(sup, params, f"condition-6-n{n:g}").map(
            partial(_alive_mass_task, sup, n, t), int(params.get("replicas", 1000)), desc=f"n={n:g}"
        )
        m_n = scaling_m(sf, n)
        kept = np.array([r.payload["mass"] / m_n for r in records if r.payload["S"] > s])
        for k in range(1, k_max + 1):
            est, se = _mean_se(kept**k)
            rows.append(
                {"n": n, "k": k, "estimate": est, "stderr": se, "survivors": int(kept.size)}
            )
    spread = {}
    for k in range(1, k_max + 1):
        values = [r["estimate"] for r in rows if r["k"] == k and r["estimate"] > 0]
        spread[k] = max(values) / min(values) if values else float("nan")
    return ConditionReport(
        condition=6,
        model=supplier.name,
        verdict=PARTIAL,
        label=PARTIAL,
        rows=rows,
        notes=["moment-boundedness surface only; weak convergence is not checked"],
        extras={"spread": spread, "t": t, "s": s},
    )


def _sixth_moment_task(
    supplier: ModelSupplier, n_grid: Tuple[int, ...], replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    values = []
    for n in n_grid:
        total = 0.0
        if n <= system.horizon:
            for x in system.occupied(n):
                total += sum(c * c for c in x) ** 3
        values.append(total)
    return {"values": values, "truncated": system.truncated, "events": event_count(system)}


def op_moment_surface(supplier: ModelSupplier, params: Dict[str, Any]) -> ConditionReport:
    """sum_x |x|^6 P(x in T_n) / n^3 across n.

    Gathered as evidence only and labelled CONJECTURE-CHECK; there is no
    pass or fail verdict.
    """
    n_grid = tuple(int(n) for n in params.get("n_grid", (5, 10, 20, 40)))
    sup = supplier.with_horizon(max(n_grid))
    records = _farm(sup, params, "op-moment").map(
        partial(_sixth_moment_task, sup, n_grid),
        int(params.get("replicas", 1000)),
        desc="Sixth moment",
    )
    values = np.array([r.payload["values"] for r in records])
    rows = []
    for k, n in enumerate(n_grid):
        est, se = _mean_se(values[:, k] / float(n) ** 3)
        rows.append({"n": n, "estimate": est, "stderr": se, "replicas": len(records)})
    return ConditionReport(
        condition=6,
        model=supplier.name,
        verdict="reported",
        label=CONJECTURE_CHECK,
        rows=rows,
        notes=["evidence for the moment hypothesis; not a pass/fail test"],
        extras=supplier.describe(),
    )


# Ancestral-relation axioms


@dataclass
class AxiomAudit:
    """Axiom violations found over a replica set."""

    model: str
    replicas: int
    violations: Dict[str, int] = field(default_factory=dict)
    examples: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.violations.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "replicas": self.replicas,
            "total": self.total,
            "violations": self.violations,
            "examples": self.examples,
        }


def _axiom_task(
    supplier: ModelSupplier, sample_budget: int, replica: int, rng: np.random.Generator
) -> Dict[str, Any]:
    system = supplier.simulate(replica, rng)
    found = check_ar_axioms(system, sample_budget, rng) + check_paths(system)
    return {
        "violations": [v.to_dict() for v in found],
        "truncated": system.truncated,
        "events": event_count(system),
    }


def axiom_audit(
    supplier: ModelSupplier,
    replicas: int,
    seed: int,
    workers: int = 1,
    sample_budget: int = 10_000,
    experiment_id: str = "axioms",
) -> AxiomAudit:
    """Run the ancestral-relation axiom and path checks on every replica."""
    farm = ReplicaFarm(supplier.name, workers=workers, experiment_id=experiment_id, seed=seed)
    records = farm.map(partial(_axiom_task, supplier, sample_budget), replicas, desc="Axioms")
    audit = AxiomAudit(model=supplier.name, replicas=len(records))
    for record in records:
        for violation in record.payload["violations"]:
            audit.violations[violation["kind"]] = audit.violations.get(violation["kind"], 0) + 1
            if len(audit.examples) < 10:
                audit.examples.append({"replica": record.replica, **violation})
    if audit.total:
        logger.warning(
            f"{audit.total} axiom violations over {audit.replicas} {supplier.name} replicas"
        )
    else:
        logger.info(f"No axiom violations over {audit.replicas} {supplier.name} replicas")
    return audit
