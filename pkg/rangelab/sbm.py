"""Super-Brownian reference quantities.

Covers the boundary blow-up solution v_d of Δv = v² on a ball, closed
forms of the canonical measure, Feller-diffusion Laplace duality, and the
random-walk constants (escape probability, Poissonized moments) that fix
the voter model's limit parameters.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Tuple

import numpy as np
import sympy
from scipy import integrate, special

from rangelab.exceptions import ConfigurationError, PreconditionError, ShootingError
from rangelab.lattice import Kernel
from rangelab.logging import get_logger

logger = get_logger(__name__)

# Blow-up cutoff for the shooting integrator
V_STAR = 1e10
_MAX_EXPANSIONS = 40


@dataclass(frozen=True)
class SbmParams:
    """Branching rate gamma and diffusion parameter sigma0^2."""

    gamma: float
    sigma0_sq: float

    def __post_init__(self):
        if self.gamma <= 0 or self.sigma0_sq <= 0:
            raise ConfigurationError(
                f"SBM parameters must be positive, got gamma={self.gamma}, "
                f"sigma0_sq={self.sigma0_sq}"
            )

    @property
    def s_D(self) -> float:
        """Survival constant 2/gamma matching this branching rate."""
        return 2.0 / self.gamma

    def to_dict(self) -> Dict[str, Any]:
        return {"gamma": self.gamma, "sigma0_sq": self.sigma0_sq}


# Boundary blow-up ODE


@dataclass
class ShootingResult:
    """Center value of the radial blow-up solution and diagnostics."""

    d: int
    radius: float
    v0: float
    residual: float
    bracket: Tuple[float, float]
    iterations: int
    evaluations: int
    trace: List[Tuple[float, float]] = field(default_factory=list, repr=False)
    r: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    v: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation without the dense profile
        """
        return {
            "d": self.d,
            "radius": self.radius,
            "v0": self.v0,
            "residual": self.residual,
            "bracket": list(self.bracket),
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "mesh_points": int(len(self.r)),
        }


def _radial_rhs(d: int):
    def rhs(r: float, y: np.ndarray) -> List[float]:
        v, dv = y
        return [dv, v * v - (d - 1) / r * dv]

    return rhs


def blowup_radius(a: float, d: int, r_max: float, dense: bool = False):
    """Blow-up radius of the radial solution with v(0) = a.

    Integration starts from the series v = a + a²r²/(2d) near the center
    and stops when v reaches V_STAR; the remaining distance uses the exact
    one-dimensional local form v = 6/(r_b - r)².

    Args:
        a: Center value
        d: Dimension
        r_max: Integration limit
        dense: Also return the solution mesh

    Returns:
        r_b (infinity if no blow-up before r_max), plus (r, v) mesh if dense
    """
    r0 = 1e-6 * min(1.0, 1.0 / math.sqrt(a))
    y0 = [a + a * a * r0 * r0 / (2 * d), a * a * r0 / d]

    def hit(r: float, y: np.ndarray) -> float:
        return y[0] - V_STAR

    hit.terminal = True  # type: ignore[attr-defined]
    hit.direction = 1  # type: ignore[attr-defined]

    sol = integrate.solve_ivp(
        _radial_rhs(d), (r0, r_max), y0, method="DOP853", rtol=1e-12, atol=1e-12, events=hit
    )
    if sol.t_events[0].size:
        r_b = float(sol.t_events[0][0]) + math.sqrt(6.0 / V_STAR)
    else:
        r_b = math.inf
    if dense:
        return r_b, sol.t, sol.y[0]
    return r_b


def solve_vd(d: int, tol: float = 1e-8, radius: float = 1.0) -> ShootingResult:
    """Solve Δv = v² on the ball of given radius with boundary blow-up.

    Bisects on the center value a until the numerical blow-up radius
    matches ``radius``; the returned value is v_d(0) for that ball.

    Args:
        d: Dimension, d >= 1
        tol: Relative tolerance on the center value
        radius: Ball radius

    Returns:
        ShootingResult

    Raises:
        ShootingError: If no bracket is found after expansion
    """
    if d < 1:
        raise ConfigurationError(f"Dimension must be >= 1, got {d}")
    if tol <= 0:
        raise ConfigurationError(f"Tolerance must be positive, got {tol}")
    r_max = 4.0 * radius
    trace: List[Tuple[float, float]] = []

    def f(a: float) -> float:
        r_b = blowup_radius(a, d, r_max)
        trace.append((a, r_b))
        return r_b - radius

    lo, hi = 1.0 / radius**2, 100.0 / radius**2
    for _ in range(_MAX_EXPANSIONS):
        if f(lo) > 0:
            break
        lo /= 4.0
    else:
        raise ShootingError(f"Lower bracket not found for d={d}", trace)
    for _ in range(_MAX_EXPANSIONS):
        if f(hi) < 0:
            break
        hi *= 4.0
    else:
        raise ShootingError(f"Upper bracket not found for d={d}", trace)

    iterations = 0
    while hi - lo > tol * lo:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        iterations += 1

    a = 0.5 * (lo + hi)
    r_b, r, v = blowup_radius(a, d, r_max, dense=True)
    result = ShootingResult(
        d=d,
        radius=radius,
        v0=a,
        residual=abs(r_b - radius),
        bracket=(lo, hi),
        iterations=iterations,
        evaluations=len(trace) + 1,
        trace=trace,
        r=r,
        v=v,
    )
    logger.info(f"v_{d}(0) on radius {radius}: {a:.10g} (residual {result.residual:.2e})")
    return result


def vd_quadrature_oracle(radius: float = 1.0) -> float:
    """One-dimensional center value from the energy integral.

    From (v')² = (2/3)(v³ - a³) the blow-up radius is
    I / sqrt(2a/3) with I = ∫_1^∞ (u³ - 1)^(-1/2) du.
    """
    I, _ = integrate.quad(lambda u: 1.0 / math.sqrt(u**3 - 1.0), 1.0, 2.0, limit=200)
    tail, _ = integrate.quad(lambda u: 1.0 / math.sqrt(u**3 - 1.0), 2.0, math.inf, limit=200)
    I += tail
    return 1.5 * (I / radius) ** 2


def vd_beta_closed_form(radius: float = 1.0) -> float:
    """Same constant via I = B(1/6, 1/2)/3."""
    I = special.beta(1.0 / 6.0, 0.5) / 3.0
    return 1.5 * (I / radius) ** 2


# Canonical measure and Feller duality


def canonical_tail(params: SbmParams, s: float) -> float:
    """N_o(S > s) = 2/(gamma s)."""
    if s <= 0:
        raise PreconditionError(f"Survival threshold must be positive, got {s}")
    return 2.0 / (params.gamma * s)


@dataclass(frozen=True)
class FellerLaplace:
    """Solution v_t of dv/dt = -gamma v²/2 + lambda and the conditioned functional."""

    v: float
    functional: float


def feller_v(gamma: float, t: float, lam: float) -> float:
    """v_t = sqrt(2λ/γ)·tanh(t·sqrt(γλ/2))."""
    if lam == 0:
        return 0.0
    return math.sqrt(2.0 * lam / gamma) * math.tanh(t * math.sqrt(gamma * lam / 2.0))


def feller_laplace(params: SbmParams, t: float, lam: float) -> FellerLaplace:
    """Laplace duality for the total mass.

    ``v`` is v_t. ``functional`` is the Laplace transform of the mass
    integrated over a unit window after time 1 under the canonical measure
    conditioned to survive past 1, 2/(2 + γ v_1); it does not depend on t.

    Raises:
        PreconditionError: If t or lam is negative
    """
    if t < 0 or lam < 0:
        raise PreconditionError(f"Need t, lambda >= 0, got t={t}, lambda={lam}")
    v = feller_v(params.gamma, t, lam)
    v1 = feller_v(params.gamma, 1.0, lam)
    return FellerLaplace(v=v, functional=2.0 / (2.0 + params.gamma * v1))


def feller_residual(gamma: float, t: float, lam: float) -> float:
    """|dv/dt + γv²/2 - λ| for the closed-form v_t, with the derivative λ·sech²."""
    if lam == 0:
        return 0.0
    x = t * math.sqrt(gamma * lam / 2.0)
    dv = lam / math.cosh(x) ** 2
    v = feller_v(gamma, t, lam)
    return abs(dv + gamma * v * v / 2.0 - lam)


def canonical_mass_density(params: SbmParams, x: float) -> float:
    """Density of X_1(1) under the canonical measure conditioned on S > 1."""
    if x < 0:
        return 0.0
    rate = 2.0 / params.gamma
    return rate * math.exp(-rate * x)


@dataclass(frozen=True)
class SmallMassTail:
    """Small-a behaviour of the conditioned integrated mass law."""

    asymptotic: float
    bound: float

    def to_dict(self) -> Dict[str, float]:
        return {"asymptotic": self.asymptotic, "bound": self.bound}


def small_mass_tail(params: SbmParams, a: float) -> SmallMassTail:
    """Leading asymptotic 4√a/√(2πγ) and the bound 2√(2/γ)·e·√a.

    Raises:
        PreconditionError: If a <= 0
    """
    if a <= 0:
        raise PreconditionError(f"Mass level must be positive, got {a}")
    root_a = math.sqrt(a)
    return SmallMassTail(
        asymptotic=4.0 * root_a / math.sqrt(2.0 * math.pi * params.gamma),
        bound=2.0 * math.sqrt(2.0 / params.gamma) * math.e * root_a,
    )


def radius_tail(params: SbmParams, vd0: float, r: float) -> float:
    """Canonical-measure radius tail v_d(0)·σ0²/(γ r²)."""
    return vd0 * params.sigma0_sq / (params.gamma * r * r)


def one_arm_limit(params: SbmParams, vd0: float, s_D: float) -> float:
    """Limit of m(r²)·P(r0(R) > r): σ0²·s_D·v_d(0)/2."""
    return params.sigma0_sq * s_D * vd0 / 2.0


# Random-walk constants


def _bessel_green(d: int) -> float:
    """Green function at the origin of the nearest-neighbor walk, d >= 3.

    Integrates P(X_t = o) = ive(0, t/d)^d for the rate-1 walk up to T and
    closes with the two-term large-t expansion of the tail.
    """
    T = 1e4
    value, _ = integrate.quad(lambda t: special.ive(0, t / d) ** d, 0.0, T, limit=1000)
    c = (2.0 * math.pi / d) ** (-d / 2)
    tail = c * (T ** (1 - d / 2) / (d / 2 - 1) + (d * d / 8.0) * T ** (-d / 2) / (d / 2))
    return value + tail


def _box_green(kernel: Kernel, terms: int = 4000) -> float:
    """Green function of the uniform-box walk via the lazy box walk.

    The lazy walk steps uniformly on the full box, origin included, so its
    coordinates are independent. Removing its zero steps gives the box
    walk, which rescales the Green function by (B-1)/B.
    """
    L, d = kernel.L, kernel.d
    M = L * terms + 1
    k = 2.0 * math.pi * np.arange(M) / M
    phi = (1.0 + 2.0 * sum(np.cos(j * k) for j in range(1, L + 1))) / (2 * L + 1)
    power = np.ones(M)
    green_lazy = 0.0
    for _ in range(terms):
        green_lazy += power.mean() ** d
        power *= phi
    variance = L * (L + 1) / 3.0
    green_lazy += (2 * math.pi * variance) ** (-d / 2) * (terms - 0.5) ** (1 - d / 2) / (d / 2 - 1)
    box = (2 * L + 1) ** d
    return green_lazy * (box - 1) / box


def escape_probability(kernel: Kernel) -> float:
    """Probability that the kernel walk never returns to the origin.

    Zero in d <= 2. Nearest-neighbor kernels use the Bessel-integral Green
    function; uniform boxes use the lazy-walk return series.
    """
    if kernel.d <= 2:
        return 0.0
    green = _bessel_green(kernel.d) if kernel.is_nearest_neighbor() else _box_green(kernel)
    return 1.0 / green


def beta_d(kernel: Kernel) -> float:
    """Voter constant: escape probability for d >= 3, 2πσ² for d = 2."""
    if kernel.d == 2:
        return 2.0 * math.pi * float(kernel.sigma2)
    if kernel.d < 2:
        raise ConfigurationError("The voter constant needs d >= 2")
    return escape_probability(kernel)


def voter_sbm_params(kernel: Kernel) -> SbmParams:
    """(gamma, sigma0^2) = (2β_d, σ²) for the voter model."""
    return SbmParams(gamma=2.0 * beta_d(kernel), sigma0_sq=float(kernel.sigma2))


def _truncate(poly: sympy.Poly, degree: int) -> sympy.Poly:
    terms = [(m, c) for m, c in poly.terms() if sum(m) <= degree]
    return sympy.Poly.from_dict(dict(terms), *poly.gens) if terms else sympy.Poly(0, *poly.gens)


def walk_moment(kernel: Kernel, s: Fraction, p: int) -> Fraction:
    """Exact E|W_s|^p for the rate-1 continuous-time kernel walk, p even.

    The cumulant generating function of W_s is s·(E e^{θ·ξ} - 1), whose
    Taylor coefficients are s times the step moments; exponentiating the
    truncated series and applying the Laplacian p/2 times at θ = 0 gives
    the moment.
    """
    if p % 2 or p < 0:
        raise PreconditionError(f"Power must be even and non-negative, got {p}")
    theta = sympy.symbols(f"th0:{kernel.d}")
    s = sympy.Rational(Fraction(s).numerator, Fraction(s).denominator)
    cumulant = sympy.Poly(0, *theta)
    for x, w in kernel.weights.items():
        dot = sympy.Poly(sum(xi * th for xi, th in zip(x, theta)), *theta)
        term = sympy.Poly(0, *theta)
        power = sympy.Poly(1, *theta)
        for j in range(1, p + 1):
            power = _truncate(power * dot, p)
            term += power * sympy.Rational(1, math.factorial(j))
        cumulant += term * sympy.Rational(w.numerator, w.denominator)
    cumulant = cumulant * s

    mgf = sympy.Poly(1, *theta)
    power = sympy.Poly(1, *theta)
    for m in range(1, p // 2 + 1):
        power = _truncate(power * cumulant, p)
        mgf += power * sympy.Rational(1, math.factorial(m))
    expr = mgf.as_expr()
    for _ in range(p // 2):
        expr = sum(sympy.diff(expr, th, 2) for th in theta)
    value = sympy.Rational(expr.subs({th: 0 for th in theta}))
    return Fraction(int(value.p), int(value.q))
