"""Command-line runner: voter | op | brw | sbm | tree | estimate | plotdata.

Every run writes its artifacts, a manifest and (optionally) a metrics
snapshot into ``<output root>/<group>-<action>/``. Exit codes: 0 success,
1 internal error or missing artifact, 2 guard refusal, 64 usage error.
"""

import argparse
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import ray

from rangelab import __version__
from rangelab.artifacts import ArtifactWriter, emit_plotdata
from rangelab.conditions import (
    axiom_audit,
    condition4_voter_check,
    condition6_partial,
    condition_check,
    op_moment_surface,
)
from rangelab.config import KERNEL_VARIANTS, OFFSPRING_LAWS, Config, load_config, set_config
from rangelab.estimators import (
    distinct_sites,
    estimate_modulus,
    estimate_one_arm,
    estimate_survival,
    integrated_mass,
    modulus_tail_frequency,
    pure_birth_tail,
    range_statistics,
    resampled_ks_quantile,
)
from rangelab.exceptions import (
    ArtifactNotFoundError,
    ConfigurationError,
    GuardRefusalError,
    ModelNotFoundError,
    UnsupportedConditionError,
)
from rangelab.lattice import scaling_m
from rangelab.loader import MODEL_REGISTRY, BrwSupplier, ModelSpec, ModelSupplier, load_model
from rangelab.logging import get_logger, setup_logging
from rangelab.metrics import write_metrics
from rangelab.models.brw import gw_survival
from rangelab.models.op import estimate_pc, op_exact_enumerate
from rangelab.rng import replica_rng
from rangelab.sbm import (
    SbmParams,
    canonical_tail,
    feller_laplace,
    feller_residual,
    radius_tail,
    small_mass_tail,
    solve_vd,
    vd_beta_closed_form,
    vd_quadrature_oracle,
)
from rangelab.trees.enumeration import count_trees_by_subsets, partition_function, trees_by_edges
from rangelab.trees.lace import (
    MAX_ENUMERATED_N,
    lace_identity_check,
    pi_n_exact,
    random_assignment,
    symbolic_assignment,
)
from rangelab.trees.lemmas import lemma_checks
from rangelab.trees.ribs import two_point
from rangelab.types import Curve, ExperimentManifest

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_GUARD = 2
EXIT_USAGE = 64

# Flag dest -> dotted config key. Flags left unset keep the file value.
_OVERRIDES = {
    "seed": "experiment.seed",
    "replicas": "experiment.replicas",
    "workers": "experiment.workers",
    "experiment_id": "experiment.experiment_id",
    "output": "output.dir",
    "log_level": "logging.level",
    "d": "lattice.d",
    "L": "lattice.L",
    "kernel": "lattice.variant",
    "t_max": "voter.t_max",
    "site_cap": "voter.site_cap",
    "p": "op.p",
    "op_n_max": "op.n_max",
    "offspring": "brw.offspring",
    "brw_n_max": "brw.n_max",
    "cap": "brw.cap",
    "z": "tree.z",
    "depth": "tree.depth",
    "gamma": "sbm.gamma",
    "sigma0_sq": "sbm.sigma0_sq",
    "tol": "sbm.tol",
    "A": "scaling.A",
    "V": "scaling.V",
}

# Optional condition parameters forwarded from flags.
_CONDITION_KEYS = (
    "t_grid",
    "n_grid",
    "s",
    "t",
    "power",
    "pairs",
    "ell",
    "m",
    "M",
    "window",
    "p_interval",
)

Handler = Callable[[argparse.Namespace, Config, ArtifactWriter], int]


class RangeLabArgumentParser(argparse.ArgumentParser):
    """Parser whose usage errors exit with code 64."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# Flag value parsers


def number(text: str) -> float:
    return float(Fraction(text.strip()))


def numbers(text: str) -> List[float]:
    return [number(v) for v in text.split(",") if v.strip()]


def integers(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def site(text: str) -> Tuple[int, ...]:
    return tuple(integers(text))


def lag_pairs(text: str) -> List[Tuple[float, float]]:
    out = []
    for item in text.split(","):
        s, _, t = item.partition(":")
        out.append((number(s), number(t)))
    return out


# Shared helpers


def _supplier(model: str, config: Config) -> ModelSupplier:
    return load_model(ModelSpec.from_config(model, config))


def _exact_p(config: Config) -> Fraction:
    return Fraction(config.op.p).limit_denominator(10**6)


def _run_args(config: Config) -> Dict[str, Any]:
    exp = config.experiment
    return {"replicas": exp.replicas, "seed": exp.seed, "workers": exp.workers}


def _survival(args: argparse.Namespace, config: Config, writer: ArtifactWriter, model: str) -> int:
    supplier = _supplier(model, config)
    curve = estimate_survival(
        supplier, args.t_grid, experiment_id=config.experiment.experiment_id, **_run_args(config)
    )
    s_D = supplier.sbm_params().s_D
    sf = supplier.scaling()
    prediction = [s_D / scaling_m(sf, t) if t > 0 else math.nan for t in curve.grid]
    extra: Dict[str, Any] = {
        "prediction": (prediction, f"s_D / m(t) with s_D = {s_D:.6g}"),
    }
    if isinstance(supplier, BrwSupplier):
        exact = gw_survival(supplier.law, int(max(curve.grid)))
        extra["oracle"] = ([exact[int(t)] for t in curve.grid], "exact Galton-Watson survival")
    writer.write_curve(curve, f"{model}_survive.csv", extra)
    writer.write_json(
        {
            "curve": curve.to_dict(),
            "envelope": curve.envelope,
            "monotone": curve.is_monotone(),
            "s_D": s_D,
            "normalized_over_s_D": (curve.normalized / s_D).tolist(),
        },
        f"{model}_survive.json",
    )
    return EXIT_OK


def _one_arm(args: argparse.Namespace, config: Config, writer: ArtifactWriter, model: str) -> int:
    supplier = _supplier(model, config)
    curve = estimate_one_arm(
        supplier, args.r_grid, experiment_id=config.experiment.experiment_id, **_run_args(config)
    )
    sf = supplier.scaling()
    if curve.prediction is not None:
        prediction = [curve.prediction / scaling_m(sf, r * r) for r in curve.grid]
    else:
        prediction = [math.nan] * len(curve.grid)
    writer.write_curve(
        curve, f"{model}_one_arm.csv", {"prediction": (prediction, "predicted limit / m(r^2)")}
    )
    writer.write_json(
        {"curve": curve.to_dict(), "monotone": curve.is_monotone(), "prediction": curve.prediction},
        f"{model}_one_arm.json",
    )
    return EXIT_OK


def _axioms(args: argparse.Namespace, config: Config, writer: ArtifactWriter, model: str) -> int:
    audit = axiom_audit(
        _supplier(model, config),
        sample_budget=args.sample_budget,
        experiment_id=config.experiment.experiment_id,
        **_run_args(config),
    )
    writer.write_json(audit, f"{model}_axioms.json")
    return EXIT_OK


def _report_exit(report: Any) -> int:
    """Exact and structural checks that fail are internal errors."""
    if report.label in ("exact", "structural") and report.verdict == "fail":
        logger.error(f"Condition {report.condition} failed on {report.model}")
        return EXIT_INTERNAL
    return EXIT_OK


def _write_report(writer: ArtifactWriter, report: Any, stem: str) -> int:
    writer.write_json(report, f"{stem}.json")
    frame = report.to_frame()
    if not frame.empty:
        writer.write_csv(frame, f"{stem}.csv", {c: c for c in frame.columns})
    return _report_exit(report)


# voter


def voter_survive(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    return _survival(args, config, writer, "voter")


def voter_one_arm(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    return _one_arm(args, config, writer, "voter")


def voter_cond4(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    supplier = _supplier("voter", config)
    run = _run_args(config)
    direct, walk = condition4_voter_check(
        supplier.kernel,
        args.power,
        args.s,
        args.t,
        run["replicas"],
        run["seed"],
        run["workers"],
        supplier=supplier,
    )
    combined = math.hypot(direct.stderr, walk.stderr)
    writer.write_json(
        {
            "direct": direct,
            "walk": walk,
            "difference": direct.estimate - walk.estimate,
            "combined_stderr": combined,
            "agree": abs(direct.estimate - walk.estimate) <= 3 * combined,
        },
        "voter_cond4.json",
    )
    return EXIT_OK


def voter_axioms(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    return _axioms(args, config, writer, "voter")


# op


def op_pc_estimate(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    supplier = _supplier("op", config)
    rng = replica_rng(config.experiment.seed, config.experiment.experiment_id, 0)
    estimate = estimate_pc(
        supplier.kernel,
        rng,
        budget=args.budget,
        replicas=config.experiment.replicas,
        n_max=config.op.n_max,
        bracket=tuple(args.bracket) if args.bracket else None,
        bootstrap=args.bootstrap,
        interactions=not args.surrogate,
    )
    writer.write_json(estimate, "op_pc_estimate.json")
    return EXIT_OK


def op_survive(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    return _survival(args, config, writer, "op")


def op_one_arm(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    return _one_arm(args, config, writer, "op")


def op_exact(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    kernel = ModelSpec.from_config("op", config).kernel()
    table = op_exact_enumerate(kernel, args.n, _exact_p(config))
    writer.write_json({"kernel": kernel.to_dict(), "table": table}, "op_exact.json")
    return EXIT_OK


def op_cond7(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    params = {
        "p": _exact_p(config),
        "ell": args.ell,
        "m": args.m,
        "M": args.M,
        "window": args.window,
    }
    return _write_report(writer, condition_check(7, _supplier("op", config), params), "op_cond7")


def op_cond3(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    params = {"p": _exact_p(config), "s": int(args.s), "t": int(args.t)}
    return _write_report(writer, condition_check(3, _supplier("op", config), params), "op_cond3")


def op_axioms(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    return _axioms(args, config, writer, "op")


def op_moments(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    params = {"n_grid": args.n_grid, **_run_args(config)}
    return _write_report(writer, op_moment_surface(_supplier("op", config), params), "op_moments")


# brw


def _brw_model(args: argparse.Namespace) -> str:
    return "gw" if getattr(args, "spaceless", False) else "brw"


def brw_survive(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    return _survival(args, config, writer, _brw_model(args))


def brw_one_arm(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    return _one_arm(args, config, writer, "brw")


def brw_mass_tail(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    supplier = _supplier(_brw_model(args), config)
    mass = integrated_mass(
        supplier,
        args.n,
        args.t0,
        args.t1,
        experiment_id=config.experiment.experiment_id,
        **_run_args(config),
    )
    curve = mass.small_mass_curve(args.a_grid)
    params = supplier.sbm_params()
    tails = [small_mass_tail(params, a) for a in curve.grid]
    writer.write_curve(
        curve,
        "brw_mass_tail.csv",
        {
            "prediction": ([t.asymptotic for t in tails], "leading small-a asymptotic"),
            "bound": ([t.bound for t in tails], "upper bound on the limit law"),
        },
    )
    normalized = curve.normalized[np.isfinite(curve.normalized)]
    flatness = None
    if normalized.size and normalized.min() > 0:
        flatness = float(normalized.max() / normalized.min())
    writer.write_json(
        {
            "report": mass.to_report(),
            "curve": curve.to_dict(),
            "flatness": flatness,
            "sbm": params,
        },
        "brw_mass_tail.json",
    )
    return EXIT_OK


def brw_axioms(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    return _axioms(args, config, writer, _brw_model(args))


# sbm


def sbm_vd(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    result = solve_vd(config.lattice.d, tol=config.sbm.tol, radius=args.radius)
    data: Dict[str, Any] = {"result": result, "unit_ball_equivalent": result.v0 * args.radius**2}
    if config.lattice.d == 1:
        oracle = vd_quadrature_oracle(args.radius)
        data.update(
            {
                "quadrature_oracle": oracle,
                "beta_closed_form": vd_beta_closed_form(args.radius),
                "relative_error": abs(result.v0 - oracle) / oracle,
            }
        )
    writer.write_json(data, "sbm_vd.json")
    return EXIT_OK


def sbm_feller(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    params = SbmParams(config.sbm.gamma, config.sbm.sigma0_sq)
    rows = []
    for t in args.t_grid:
        for lam in args.lambda_grid:
            value = feller_laplace(params, t, lam)
            rows.append(
                {
                    "t": t,
                    "lambda": lam,
                    "v": value.v,
                    "functional": value.functional,
                    "residual": feller_residual(params.gamma, t, lam),
                }
            )
    frame = pd.DataFrame(rows)
    writer.write_csv(
        frame,
        "sbm_feller.csv",
        {
            "t": "time",
            "lambda": "Laplace variable",
            "v": "closed-form Riccati solution v_t",
            "functional": "conditioned Laplace functional 2/(2 + gamma v_1), the same at every t",
            "residual": "|dv/dt + gamma v^2/2 - lambda|",
        },
    )
    max_residual = float(frame["residual"].max())
    writer.write_json({"sbm": params, "max_residual": max_residual}, "sbm_feller.json")
    return EXIT_OK


def sbm_tail(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    params = SbmParams(config.sbm.gamma, config.sbm.sigma0_sq)
    vd0 = solve_vd(config.lattice.d, tol=config.sbm.tol).v0
    writer.write_json(
        {
            "sbm": params,
            "d": config.lattice.d,
            "vd0": vd0,
            "survival": {f"{s:g}": canonical_tail(params, s) for s in args.s_grid},
            "small_mass": {f"{a:g}": small_mass_tail(params, a) for a in args.a_grid},
            "radius": {f"{r:g}": radius_tail(params, vd0, r) for r in args.r_grid},
        },
        "sbm_tail.json",
    )
    return EXIT_OK


# tree


def _tree_kernel(config: Config):
    return ModelSpec.from_config("tree", config).kernel()


def tree_enumerate(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    kernel = _tree_kernel(config)
    depth = config.tree.depth
    counts = [len(level) for level in trees_by_edges(kernel, depth)]
    writer.write_csv(
        pd.DataFrame({"edges": range(depth + 1), "count": counts}),
        "tree_enumerate.csv",
        {"edges": "number of bonds", "count": "lattice trees containing the origin"},
    )
    data: Dict[str, Any] = {
        "kernel": kernel.to_dict(),
        "counts": counts,
        "subset_counts": [
            count_trees_by_subsets(kernel, k) for k in range(min(depth, args.check_upto) + 1)
        ],
    }
    if args.z is not None:
        z = config.tree.activity()
        data["partition_function"] = partition_function(kernel, z, depth)
    writer.write_json(data, "tree_enumerate.json")
    return EXIT_OK


def tree_two_point(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    result = two_point(
        _tree_kernel(config), config.tree.activity(), args.n, args.x, config.tree.depth
    )
    writer.write_json(result, "tree_two_point.json")
    return EXIT_OK if result.agree else EXIT_INTERNAL


def tree_lace_check(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    rng = replica_rng(config.experiment.seed, config.experiment.experiment_id, 0)
    checks = []
    enumerated = 0
    for k in range(args.assignments):
        # The first assignment always lists connected graphs explicitly
        explicit = args.enumerate_graphs or k == 0 or args.n <= MAX_ENUMERATED_N
        enumerated += int(explicit)
        U = random_assignment(args.n, rng)
        checks.append(lace_identity_check(args.n, U, enumerate_graphs=explicit))
    if args.n <= 4:
        checks.append(lace_identity_check(args.n, symbolic_assignment(args.n)))
    failures = [c for c in checks if not c.holds]
    writer.write_json(
        {
            "n": args.n,
            "assignments": len(checks),
            "enumerated": enumerated,
            "violations": len(failures),
            "verdict": "pass" if not failures else "fail",
            "witness": failures[0].witness if failures else None,
        },
        "tree_lace_check.json",
    )
    return EXIT_OK if not failures else EXIT_INTERNAL


def tree_pi_n(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    result = pi_n_exact(
        _tree_kernel(config), config.tree.activity(), args.n, args.x, config.tree.depth
    )
    writer.write_json(result, "tree_pi_n.json")
    return EXIT_OK if result.recomposes else EXIT_INTERNAL


def tree_lemma_check(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    report = lemma_checks(_tree_kernel(config), config.tree.activity(), config.tree.depth)
    writer.write_json(report, "tree_lemma_check.json")
    return EXIT_OK if report.all_nonnegative else EXIT_INTERNAL


# estimate


def estimate_condition(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    supplier = _supplier(args.model, config)
    params: Dict[str, Any] = {**_run_args(config), "experiment_id": config.experiment.experiment_id}
    for key in _CONDITION_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            params["p" if key == "power" else key] = value
    if args.which in (3, 7) and args.model == "op":
        params["p"] = _exact_p(config)
    if args.which == 6:
        report = condition6_partial(supplier, params)
    else:
        report = condition_check(args.which, supplier, params)
    return _write_report(writer, report, f"condition{args.which}_{args.model}")


def _ecdf_frame(n: float, r0: np.ndarray) -> pd.DataFrame:
    values = np.sort(r0)
    size = values.size
    cdf = np.arange(1, size + 1) / size if size else np.zeros(0)
    band = math.sqrt(math.log(2 / 0.05) / (2 * size)) if size else math.nan
    return pd.DataFrame(
        {
            "n": n,
            "r0": values,
            "estimate": cdf,
            "stderr": np.sqrt(cdf * (1 - cdf) / size) if size else cdf,
            "ci_lo": np.clip(cdf - band, 0, 1),
            "ci_hi": np.clip(cdf + band, 0, 1),
            "normalized": cdf,
            "replicas": size,
        }
    )


def estimate_range(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    supplier = _supplier(args.model, config)
    run = _run_args(config)
    exp = config.experiment.experiment_id
    results = [
        range_statistics(supplier, n, args.s, experiment_id=f"{exp}-n{n:g}", **run)
        for n in args.n_grid
    ]
    data: Dict[str, Any] = {"scales": [r.to_dict() for r in results]}
    data["ks_consecutive"] = [
        {"n": a.n, "n_next": b.n, **a.ks_against(b)}
        for a, b in zip(results, results[1:])
        if a.survivors and b.survivors
    ]
    if args.against:
        largest = results[-1]
        other = range_statistics(
            _supplier(args.against, config),
            largest.n,
            args.s,
            experiment_id=f"{exp}-{args.against}",
            **run,
        )
        rng = replica_rng(run["seed"], exp, 0, stream=2)
        data["against"] = {
            "model": args.against,
            "scale": other.to_dict(),
            **largest.ks_against(other),
            "same_model_q95": resampled_ks_quantile(largest.r0, 0.95, args.draws, rng),
        }
    frame = pd.concat([_ecdf_frame(r.n, r.r0) for r in results], ignore_index=True)
    writer.write_csv(
        frame,
        f"range_{args.model}.csv",
        {
            "n": "scale",
            "r0": "radius of the rescaled range [lattice units / sqrt(n)]",
            "estimate": "empirical CDF of r0 given S^(n) > s",
            "stderr": "binomial standard error",
            "ci_lo": "DKW 95% lower band",
            "ci_hi": "DKW 95% upper band",
            "normalized": "same as estimate",
            "replicas": "surviving replicas at this scale",
        },
    )
    writer.write_json(data, f"range_{args.model}.json")
    return EXIT_OK


def estimate_mass(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    supplier = _supplier(args.model, config)
    mass = integrated_mass(
        supplier,
        args.n,
        args.t0,
        args.t1,
        experiment_id=config.experiment.experiment_id,
        **_run_args(config),
    )
    writer.write_json(mass.to_report(), f"mass_{args.model}.json")
    if args.a_grid:
        writer.write_curve(mass.small_mass_curve(args.a_grid), f"mass_{args.model}.csv")
    return EXIT_OK


def estimate_modulus_cmd(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    supplier = _supplier(args.model, config)
    reports = estimate_modulus(
        supplier,
        args.n,
        args.rho_grid,
        experiment_id=config.experiment.experiment_id,
        **_run_args(config),
    )
    m_n = scaling_m(supplier.scaling(), args.n)
    deltas = np.array([r.delta for r in reports])
    mean = deltas.mean(axis=0)
    if len(reports) > 1:
        se = deltas.std(axis=0, ddof=1) / math.sqrt(len(reports))
    else:
        se = np.zeros_like(mean)
    tail = [
        modulus_tail_frequency(reports, rho, args.C, args.alpha, args.n, m_n)
        for rho in args.rho_grid
    ]
    curve = Curve(
        grid_name="rho",
        grid=np.asarray(args.rho_grid, dtype=float),
        estimate=mean,
        stderr=se,
        ci_lo=mean - 1.96 * se,
        ci_hi=mean + 1.96 * se,
        normalized=np.asarray(tail),
        replicas=len(reports),
        descriptions={
            "rho": "rescaled time lag",
            "estimate": "mean Delta^(n)(rho) [rescaled space units]",
            "stderr": "standard error",
            "ci_lo": "normal 95% lower bound",
            "ci_hi": "normal 95% upper bound",
            "normalized": f"m(n) * P(Delta > C(rho^a + n^-a)), C={args.C:g}, a={args.alpha:g}",
            "replicas": "replicas",
        },
    )
    writer.write_curve(curve, f"modulus_{args.model}.csv")
    writer.write_json(
        {"curve": curve.to_dict(), "lower_bound_replicas": sum(r.lower_bound for r in reports)},
        f"modulus_{args.model}.json",
    )
    return EXIT_OK


def estimate_pure_birth(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    supplier = _supplier(args.model, config)
    counts = distinct_sites(
        supplier, args.t, experiment_id=config.experiment.experiment_id, **_run_args(config)
    )
    fit = pure_birth_tail(counts, args.n_grid)
    writer.write_json(
        {"t": args.t, "fit": fit, "mean_sites": float(counts.mean())},
        f"pure_birth_{args.model}.json",
    )
    return EXIT_OK


def plotdata(args: argparse.Namespace, config: Config, writer: ArtifactWriter) -> int:
    emit_plotdata([Path(p) for p in args.inputs], writer, args.filename)
    return EXIT_OK


COMMANDS: Dict[Tuple[str, Optional[str]], Handler] = {
    ("voter", "survive"): voter_survive,
    ("voter", "one-arm"): voter_one_arm,
    ("voter", "cond4"): voter_cond4,
    ("voter", "axioms"): voter_axioms,
    ("op", "pc-estimate"): op_pc_estimate,
    ("op", "survive"): op_survive,
    ("op", "one-arm"): op_one_arm,
    ("op", "exact"): op_exact,
    ("op", "cond7"): op_cond7,
    ("op", "cond3"): op_cond3,
    ("op", "axioms"): op_axioms,
    ("op", "moments"): op_moments,
    ("brw", "survive"): brw_survive,
    ("brw", "one-arm"): brw_one_arm,
    ("brw", "mass-tail"): brw_mass_tail,
    ("brw", "axioms"): brw_axioms,
    ("sbm", "vd"): sbm_vd,
    ("sbm", "feller"): sbm_feller,
    ("sbm", "tail"): sbm_tail,
    ("tree", "enumerate"): tree_enumerate,
    ("tree", "two-point"): tree_two_point,
    ("tree", "lace-check"): tree_lace_check,
    ("tree", "pi-n"): tree_pi_n,
    ("tree", "lemma-check"): tree_lemma_check,
    ("estimate", "condition"): estimate_condition,
    ("estimate", "range"): estimate_range,
    ("estimate", "mass"): estimate_mass,
    ("estimate", "modulus"): estimate_modulus_cmd,
    ("estimate", "pure-birth"): estimate_pure_birth,
    ("plotdata", None): plotdata,
}


def _common_parser() -> argparse.ArgumentParser:
    common = RangeLabArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Path to configuration file")
    common.add_argument("--env", default=None, choices=["dev", "prod"], help="Environment config")
    common.add_argument("--seed", type=int, default=None, help="Master seed")
    common.add_argument("--replicas", type=int, default=None, help="Number of replicas")
    common.add_argument(
        "--workers", type=int, default=None, help="Parallel workers (1 = in-process)"
    )
    common.add_argument(
        "--experiment-id", dest="experiment_id", default=None, help="Random-stream key"
    )
    common.add_argument("--output", default=None, help="Output root directory")
    common.add_argument("--log-level", dest="log_level", default=None, help="Logging level")
    common.add_argument("--d", type=int, default=None, help="Lattice dimension")
    common.add_argument("--L", type=int, default=None, help="Kernel range")
    common.add_argument("--kernel", default=None, choices=KERNEL_VARIANTS, help="Kernel variant")
    return common


def build_parser() -> argparse.ArgumentParser:
    """Build the full command-line parser."""
    common = _common_parser()
    parser = RangeLabArgumentParser(
        prog="rangelab", description="Range of critical lattice models and super-Brownian motion"
    )
    parser.add_argument("--version", action="version", version=f"rangelab {__version__}")
    groups = parser.add_subparsers(dest="group", required=True)

    def action(sub: Any, name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text)

    # voter
    voter = groups.add_parser("voter", help="Voter model")
    voter = voter.add_subparsers(dest="action", required=True)
    p = action(voter, "survive", "Survival curve theta(t)")
    p.add_argument("--t-grid", dest="t_grid", type=numbers, default=[25.0, 50.0, 100.0])
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p = action(voter, "one-arm", "One-arm curve eta_r")
    p.add_argument("--r-grid", dest="r_grid", type=numbers, default=[10.0, 15.0, 25.0])
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p = action(voter, "cond4", "Displacement-moment condition, two estimators")
    p.add_argument("--p", dest="power", type=int, default=6)
    p.add_argument("--s", type=number, default=4.0)
    p.add_argument("--t", type=number, default=8.0)
    p = action(voter, "axioms", "Ancestral-relation axiom audit")
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.add_argument("--sample-budget", dest="sample_budget", type=int, default=10_000)

    # op
    op = groups.add_parser("op", help="Oriented percolation")
    op = op.add_subparsers(dest="action", required=True)
    for name, help_text in (
        ("pc-estimate", "Bisection estimate of p_c"),
        ("survive", "Survival curve"),
        ("one-arm", "One-arm curve"),
        ("exact", "Exact trajectory law of a micro instance"),
        ("cond7", "Exact factorization identity"),
        ("cond3", "Exact restart identity"),
        ("axioms", "Ancestral-relation axiom audit"),
        ("moments", "Sixth-moment surface (CONJECTURE-CHECK)"),
    ):
        p = action(op, name, help_text)
        p.add_argument(
            "--p", type=number, default=None, help="Bond parameter (rationals like 3/4 allowed)"
        )
        p.add_argument("--n-max", dest="op_n_max", type=int, default=None)
        p.add_argument("--A", type=float, default=None)
        p.add_argument("--V", type=float, default=None)
        if name == "pc-estimate":
            p.add_argument("--budget", type=int, default=12)
            p.add_argument("--bracket", type=numbers, default=None)
            p.add_argument("--bootstrap", type=int, default=200)
            p.add_argument(
                "--surrogate", action="store_true", help="Branching surrogate without interactions"
            )
        elif name == "survive":
            p.add_argument("--t-grid", dest="t_grid", type=numbers, default=[5.0, 10.0, 20.0, 40.0])
        elif name == "one-arm":
            p.add_argument("--r-grid", dest="r_grid", type=numbers, default=[2.0, 4.0, 8.0])
        elif name == "exact":
            p.add_argument("--n", type=int, default=1)
        elif name == "cond7":
            p.add_argument("--ell", type=int, default=1)
            p.add_argument("--m", type=int, default=1)
            p.add_argument("--M", type=int, default=2)
            p.add_argument("--window", type=integers, default=None)
        elif name == "cond3":
            p.add_argument("--s", type=int, default=1)
            p.add_argument("--t", type=int, default=1)
        elif name == "axioms":
            p.add_argument("--sample-budget", dest="sample_budget", type=int, default=10_000)
        elif name == "moments":
            p.add_argument("--n-grid", dest="n_grid", type=integers, default=[5, 10, 20, 40])

    # brw
    brw = groups.add_parser("brw", help="Critical branching random walk").add_subparsers(
        dest="action", required=True
    )
    for name, help_text in (
        ("survive", "Survival curve"),
        ("one-arm", "One-arm curve"),
        ("mass-tail", "Small-mass tail of the integrated mass"),
        ("axioms", "Ancestral-relation axiom audit"),
    ):
        p = action(brw, name, help_text)
        p.add_argument("--offspring", default=None, choices=OFFSPRING_LAWS)
        p.add_argument("--n-max", dest="brw_n_max", type=int, default=None)
        p.add_argument("--cap", type=int, default=None)
        if name != "one-arm":
            p.add_argument("--spaceless", action="store_true", help="Galton-Watson tree, no space")
        if name == "survive":
            p.add_argument(
                "--t-grid", dest="t_grid", type=numbers, default=[1.0, 2.0, 5.0, 10.0, 20.0, 50.0]
            )
        elif name == "one-arm":
            p.add_argument("--r-grid", dest="r_grid", type=numbers, default=[2.0, 4.0, 8.0])
        elif name == "mass-tail":
            p.add_argument("--n", type=number, default=100.0)
            p.add_argument("--t0", type=number, default=1.0)
            p.add_argument("--t1", type=number, default=2.0)
            p.add_argument("--a-grid", dest="a_grid", type=numbers, default=[0.01, 0.02, 0.04])
        elif name == "axioms":
            p.add_argument("--sample-budget", dest="sample_budget", type=int, default=10_000)

    # sbm
    sbm = groups.add_parser("sbm", help="Super-Brownian reference values").add_subparsers(
        dest="action", required=True
    )
    for name, help_text in (
        ("vd", "Center value v_d(0) of the blow-up solution"),
        ("feller", "Feller diffusion Laplace functional"),
        ("tail", "Canonical-measure tails"),
    ):
        p = action(sbm, name, help_text)
        p.add_argument("--gamma", type=number, default=None)
        p.add_argument("--sigma0-sq", dest="sigma0_sq", type=number, default=None)
        p.add_argument("--tol", type=float, default=None)
        if name == "vd":
            p.add_argument("--radius", type=number, default=1.0)
        elif name == "feller":
            p.add_argument("--t", dest="t_grid", type=numbers, default=[0.5, 1.0, 2.0])
            p.add_argument("--lambda", dest="lambda_grid", type=numbers, default=[0.1, 1.0, 10.0])
        else:
            p.add_argument("--s-grid", dest="s_grid", type=numbers, default=[1.0, 2.0, 4.0])
            p.add_argument("--a-grid", dest="a_grid", type=numbers, default=[0.01, 0.02, 0.04])
            p.add_argument("--r-grid", dest="r_grid", type=numbers, default=[1.0, 2.0, 4.0])

    # tree
    tree = groups.add_parser("tree", help="Exact lattice-tree laboratory").add_subparsers(
        dest="action", required=True
    )
    for name, help_text in (
        ("enumerate", "Tree counts by bond number"),
        ("two-point", "Two-point function, direct and by ribs"),
        ("lace-check", "Lace identity over random rational assignments"),
        ("pi-n", "Exact lace-expansion coefficient"),
        ("lemma-check", "Rib inequality margins"),
    ):
        p = action(tree, name, help_text)
        p.add_argument("--z", default=None, help="Activity, e.g. 1/16")
        p.add_argument("--depth", type=int, default=None, help="Truncation depth in bonds")
        if name == "enumerate":
            p.add_argument("--check-upto", dest="check_upto", type=int, default=3)
        elif name in ("two-point", "pi-n"):
            p.add_argument("--n", type=int, default=1)
            p.add_argument("--x", type=site, required=True, help="Target site, e.g. 1,0")
        elif name == "lace-check":
            p.add_argument("--n", type=int, default=1)
            p.add_argument("--assignments", type=int, default=100)
            p.add_argument(
                "--enumerate-graphs",
                dest="enumerate_graphs",
                action="store_true",
                help="List connected graphs for every assignment",
            )

    # estimate
    estimate = groups.add_parser("estimate", help="Model-agnostic estimators").add_subparsers(
        dest="action", required=True
    )
    for name, help_text in (
        ("condition", "Convergence-condition check"),
        ("range", "Conditional range statistics across scales"),
        ("mass", "Integrated rescaled mass"),
        ("modulus", "Modulus-of-continuity statistic"),
        ("pure-birth", "Distinct-site tail fit"),
    ):
        p = action(estimate, name, help_text)
        p.add_argument("--model", required=True, choices=sorted(MODEL_REGISTRY))
        p.add_argument("--t-max", dest="t_max", type=float, default=None)
        p.add_argument("--p", type=number, default=None)
        p.add_argument("--offspring", default=None, choices=OFFSPRING_LAWS)
        if name == "condition":
            p.add_argument("--which", type=int, required=True, choices=[2, 3, 4, 5, 6, 7])
            p.add_argument("--t-grid", dest="t_grid", type=numbers, default=None)
            p.add_argument("--n-grid", dest="n_grid", type=numbers, default=None)
            p.add_argument("--s", type=number, default=None)
            p.add_argument("--t", type=number, default=None)
            p.add_argument("--power", type=int, default=None)
            p.add_argument(
                "--pairs", type=lag_pairs, default=None, help="s:t pairs, e.g. 4:8,16:32"
            )
            p.add_argument("--ell", type=int, default=None)
            p.add_argument("--m", type=int, default=None)
            p.add_argument("--M", type=int, default=None)
            p.add_argument("--window", type=integers, default=None)
            p.add_argument("--p-interval", dest="p_interval", type=numbers, default=None)
        elif name == "range":
            p.add_argument("--n-grid", dest="n_grid", type=numbers, default=[50.0, 100.0, 200.0])
            p.add_argument("--s", type=number, default=1.0)
            p.add_argument("--against", default=None, choices=sorted(MODEL_REGISTRY))
            p.add_argument("--draws", type=int, default=200)
        elif name == "mass":
            p.add_argument("--n", type=number, default=100.0)
            p.add_argument("--t0", type=number, default=1.0)
            p.add_argument("--t1", type=number, default=2.0)
            p.add_argument("--a-grid", dest="a_grid", type=numbers, default=None)
        elif name == "modulus":
            p.add_argument("--n", type=number, default=100.0)
            p.add_argument("--rho-grid", dest="rho_grid", type=numbers, default=[0.05, 0.1, 0.2])
            p.add_argument("--C", type=float, default=1.0)
            p.add_argument("--alpha", type=float, default=0.25)
        elif name == "pure-birth":
            p.add_argument("--t", type=number, default=2.0)
            p.add_argument("--n-grid", dest="n_grid", type=numbers, default=[2.0, 4.0, 8.0, 16.0])

    p = groups.add_parser("plotdata", parents=[common], help="Merge curve CSVs into long format")
    p.add_argument("inputs", nargs="+", help="Curve CSV files")
    p.add_argument("--filename", default="plotdata.csv")
    return parser


def resolve_config(args: argparse.Namespace) -> Config:
    """File (or env config) first, then flags on top.

    Raises:
        ConfigurationError: If a value is invalid
        FileNotFoundError: If --config names a missing file
    """
    config = load_config(config_path=args.config, env=args.env)
    overrides = {
        key: getattr(args, dest) for dest, key in _OVERRIDES.items() if hasattr(args, dest)
    }
    return config.with_overrides(overrides)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, run one command and write its manifest.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        Exit code
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    try:
        config = resolve_config(args)
    except (ConfigurationError, FileNotFoundError) as e:
        print(f"rangelab: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    command = (args.group, getattr(args, "action", None))
    command_line = " ".join(part for part in command if part)
    setup_logging(
        config.logging,
        context={
            "experiment_id": config.experiment.experiment_id,
            "seed": config.experiment.seed,
            "config_hash": config.config_hash()[:12],
            "command": command_line,
        },
    )
    set_config(config)
    run_dir = Path(config.output.dir) / "-".join(part for part in command if part)
    writer = ArtifactWriter(str(run_dir))
    manifest = ExperimentManifest(
        command=argv,
        config=config.model_dump(),
        config_hash=config.config_hash(),
        seed=config.experiment.seed,
        experiment_id=config.experiment.experiment_id,
        version=__version__,
    )
    logger.info(f"Running {command_line} (config {manifest.config_hash[:12]})")

    exit_code = EXIT_INTERNAL
    try:
        exit_code = COMMANDS[command](args, config, writer)
    except GuardRefusalError as e:
        logger.error(f"Guard refused: {e} (bound {e.bound}, requested {e.requested})")
        exit_code = EXIT_GUARD
    except (ConfigurationError, ModelNotFoundError, UnsupportedConditionError) as e:
        logger.error(f"Invalid request: {e}")
        exit_code = EXIT_USAGE
    except ArtifactNotFoundError as e:
        logger.error(str(e))
        exit_code = EXIT_INTERNAL
    except Exception as e:
        logger.error(f"Command failed: {e}", exc_info=True)
        exit_code = EXIT_INTERNAL
    finally:
        manifest.finish(exit_code)
        writer.write_manifest(manifest)
        if config.metrics.enabled:
            write_metrics(run_dir)
        if ray.is_initialized():
            ray.shutdown()
            logger.info("Ray shutdown complete")

    logger.info(
        f"Finished with exit code {exit_code} in {manifest.wall_time_s:.2f}s",
        extra={"exit_code": exit_code, "operation": command_line},
    )
    return exit_code


def main() -> None:
    """Console entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
