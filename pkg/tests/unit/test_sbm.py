"""Tests for super-Brownian reference quantities."""

import math
from fractions import Fraction

import pytest

from rangelab.exceptions import ConfigurationError, PreconditionError
from rangelab.sbm import (
    SbmParams,
    beta_d,
    canonical_mass_density,
    canonical_tail,
    escape_probability,
    feller_laplace,
    feller_residual,
    one_arm_limit,
    radius_tail,
    small_mass_tail,
    solve_vd,
    vd_beta_closed_form,
    vd_quadrature_oracle,
    voter_sbm_params,
    walk_moment,
)


class TestSbmParams:
    """Tests for SbmParams."""

    def test_survival_constant(self):
        """Test s_D = 2/gamma."""
        assert SbmParams(gamma=4.0, sigma0_sq=1.0).s_D == 0.5

    @pytest.mark.parametrize("gamma,sigma0_sq", [(0.0, 1.0), (1.0, -1.0)])
    def test_non_positive(self, gamma, sigma0_sq):
        """Test non-positive parameters are rejected."""
        with pytest.raises(ConfigurationError):
            SbmParams(gamma=gamma, sigma0_sq=sigma0_sq)


class TestBlowup:
    """Tests for the boundary blow-up solution."""

    def test_closed_forms_agree(self):
        """Test the quadrature and beta-function forms of v_1(0)."""
        assert vd_quadrature_oracle() == pytest.approx(vd_beta_closed_form(), rel=1e-10)
        assert vd_beta_closed_form() == pytest.approx(8.85, abs=0.01)

    def test_radius_scaling(self):
        """Test v(0) scales as radius^-2."""
        assert vd_beta_closed_form(2.0) == pytest.approx(vd_beta_closed_form(1.0) / 4.0)

    def test_shooting_matches_oracle(self):
        """Test the d = 1 shooting solution against the quadrature oracle."""
        result = solve_vd(1, tol=1e-9)
        assert result.v0 == pytest.approx(vd_quadrature_oracle(), rel=1e-5)
        assert result.bracket[0] <= result.v0 <= result.bracket[1]
        assert result.to_dict()["d"] == 1

    def test_center_value_grows_with_dimension(self):
        """Test v_d(0) increases with d."""
        assert solve_vd(3, tol=1e-6).v0 > solve_vd(1, tol=1e-6).v0

    def test_invalid(self):
        """Test invalid dimension and tolerance."""
        with pytest.raises(ConfigurationError):
            solve_vd(0)
        with pytest.raises(ConfigurationError):
            solve_vd(1, tol=0.0)


class TestCanonicalMeasure:
    """Tests for canonical-measure closed forms."""

    def test_tail(self):
        """Test N(S > s) = 2/(gamma s)."""
        assert canonical_tail(SbmParams(2.0, 1.0), 4.0) == pytest.approx(0.25)
        with pytest.raises(PreconditionError):
            canonical_tail(SbmParams(2.0, 1.0), 0.0)

    def test_mass_density(self):
        """Test the conditioned mass density is exponential."""
        params = SbmParams(2.0, 1.0)
        assert canonical_mass_density(params, -1.0) == 0.0
        assert canonical_mass_density(params, 0.0) == pytest.approx(1.0)

    def test_small_mass_tail(self):
        """Test the small-mass asymptotic lies under its bound."""
        tail = small_mass_tail(SbmParams(1.0, 1.0), 0.01)
        assert tail.asymptotic == pytest.approx(0.4 / math.sqrt(2 * math.pi))
        assert tail.asymptotic < tail.bound
        with pytest.raises(PreconditionError):
            small_mass_tail(SbmParams(1.0, 1.0), 0.0)

    def test_radius_and_one_arm(self):
        """Test the radius tail and one-arm limit."""
        params = SbmParams(2.0, 0.5)
        assert radius_tail(params, 8.0, 2.0) == pytest.approx(0.5)
        assert one_arm_limit(params, 8.0, params.s_D) == pytest.approx(2.0)


class TestFeller:
    """Tests for Feller-diffusion Laplace duality."""

    @pytest.mark.parametrize("t,lam", [(0.5, 0.1), (1.0, 1.0), (3.0, 10.0)])
    def test_residual(self, t, lam):
        """Test the closed form solves the ODE."""
        assert feller_residual(1.5, t, lam) < 1e-9

    def test_initial_value(self):
        """Test v_0 = 0 while the functional stays at its t = 1 value."""
        result = feller_laplace(SbmParams(1.0, 1.0), 0.0, 2.0)
        assert result.v == 0.0
        assert result.functional == pytest.approx(2.0 / (2.0 + math.tanh(1.0) * 2.0))

    def test_zero_lambda(self):
        """Test lambda = 0 gives v = 0 and a functional of one."""
        result = feller_laplace(SbmParams(1.0, 1.0), 2.0, 0.0)
        assert result.v == 0.0
        assert result.functional == 1.0

    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_functional_ignores_time(self, lam):
        """Test the functional uses v_1 at every t."""
        params = SbmParams(1.5, 1.0)
        values = [feller_laplace(params, t, lam).functional for t in (0.5, 1.0, 2.0, 4.0)]
        v1 = feller_laplace(params, 1.0, lam).v

        assert values == pytest.approx([2.0 / (2.0 + 1.5 * v1)] * 4)

    def test_functional_decreasing_in_lambda(self):
        """Test the functional lies in (0, 1] and decreases in lambda."""
        params = SbmParams(1.0, 1.0)
        values = [feller_laplace(params, 2.0, lam).functional for lam in (0, 1, 10, 100)]
        assert all(0 < v <= 1 for v in values)
        assert values == sorted(values, reverse=True)

    def test_large_time_limit(self):
        """Test v_t tends to sqrt(2 lambda / gamma)."""
        assert feller_laplace(SbmParams(2.0, 1.0), 50.0, 4.0).v == pytest.approx(2.0)

    def test_negative_arguments(self):
        """Test negative time is rejected."""
        with pytest.raises(PreconditionError):
            feller_laplace(SbmParams(1.0, 1.0), -1.0, 1.0)


class TestWalkConstants:
    """Tests for random-walk constants."""

    def test_planar_constant(self, nn2):
        """Test beta_2 = 2 pi sigma^2 = pi."""
        assert beta_d(nn2) == pytest.approx(math.pi)
        assert escape_probability(nn2) == 0.0
        assert voter_sbm_params(nn2).s_D == pytest.approx(1.0 / math.pi)

    def test_cubic_escape(self, nn3):
        """Test the simple-random-walk escape probability in d = 3."""
        assert beta_d(nn3) == pytest.approx(0.659463, abs=1e-4)

    def test_line_has_no_voter_constant(self, nn1):
        """Test d = 1 is rejected."""
        with pytest.raises(ConfigurationError):
            beta_d(nn1)

    def test_walk_moments(self, nn1, nn2):
        """Test exact Poissonized moments."""
        assert walk_moment(nn1, Fraction(2), 2) == 2
        assert walk_moment(nn1, Fraction(2), 4) == 14
        assert walk_moment(nn2, Fraction(1, 3), 2) == Fraction(1, 3)

    def test_odd_power(self, nn1):
        """Test odd powers are rejected."""
        with pytest.raises(PreconditionError):
            walk_moment(nn1, Fraction(1), 3)
