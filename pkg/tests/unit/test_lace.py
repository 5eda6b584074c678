"""Tests for the lace-expansion identity layer."""

from fractions import Fraction

import numpy as np
import pytest

from rangelab.exceptions import GuardRefusalError
from rangelab.trees.lace import (
    LaceGraphTable,
    compositions,
    constant_assignment,
    is_connected,
    lace_identity_check,
    overlap_assignment,
    pi_n_exact,
    random_assignment,
    symbolic_assignment,
)


class TestGraphs:
    """Tests for connectivity and compositions."""

    def test_connectivity(self):
        """Test interval-covering connectivity."""
        assert is_connected([(0, 2)], 0, 2)
        assert is_connected([(0, 1), (1, 2)], 0, 2)
        assert not is_connected([(0, 1)], 0, 2)
        assert is_connected([], 1, 1)

    def test_compositions(self):
        """Test the 2^n compositions of [0, n]."""
        blocks = list(compositions(2))
        assert len(blocks) == 4
        assert [(0, 2)] in blocks
        assert [(0, 0), (1, 1), (2, 2)] in blocks

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_recursion_matches_enumeration(self, n):
        """Test the covering-mask J equals the explicit graph sum."""
        U = random_assignment(n, np.random.default_rng(4))
        table = LaceGraphTable(n, U)
        for a in range(n + 1):
            for b in range(a, n + 1):
                assert table.J(a, b) == table.J_enumerated(a, b)

    @pytest.mark.slow
    def test_recursion_matches_enumeration_n6(self):
        """Test the covering-mask J on [0, 6] against every connected graph."""
        table = LaceGraphTable(6, random_assignment(6, np.random.default_rng(6)))
        assert table.J(0, 6) == table.J_enumerated(0, 6)


class TestLaceIdentity:
    """Tests for lace_identity_check."""

    @pytest.mark.parametrize("n", [0, 1, 2, 3, 4, 5])
    def test_random_rationals(self, n):
        """Test the identity on random rational assignments."""
        check = lace_identity_check(n, random_assignment(n, np.random.default_rng(n)))
        assert check.holds
        assert check.witness is None

    def test_enumerated_graphs_at_five(self):
        """Test the identity with connected graphs listed explicitly."""
        U = random_assignment(5, np.random.default_rng(11))
        assert lace_identity_check(5, U, enumerate_graphs=True).holds

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_symbolic(self, n):
        """Test the identity as a polynomial identity."""
        assert lace_identity_check(n, symbolic_assignment(n)).holds

    def test_all_overlapping(self):
        """Test K vanishes when every pair overlaps."""
        check = lace_identity_check(2, constant_assignment(2, Fraction(-1)))
        assert check.lhs == 0
        assert check.holds

    def test_overlap_assignment(self):
        """Test U from rib intersections."""
        U = overlap_assignment([frozenset({(0,)}), frozenset({(1,)}), frozenset({(0,), (2,)})])
        assert U == {(0, 1): 0, (0, 2): -1, (1, 2): 0}

    def test_guard(self):
        """Test n > 6 is refused."""
        with pytest.raises(GuardRefusalError):
            lace_identity_check(7, constant_assignment(7, Fraction(0)))


class TestPi:
    """Tests for exact pi_n."""

    @pytest.mark.parametrize("n,x", [(0, (0,)), (1, (1,)), (2, (0,))])
    def test_recomposes_on_line(self, nn1, n, x):
        """Test pi plus multi-block terms equals the two-point sum."""
        result = pi_n_exact(nn1, Fraction(1, 3), n, x, 4)
        assert result.recomposes
        assert result.configurations > 0

    def test_recomposes_in_plane(self, nn2):
        """Test recomposition in d = 2."""
        assert pi_n_exact(nn2, Fraction(1, 5), 1, (1, 0), 3).recomposes

    def test_guard(self, nn3):
        """Test pi_n is refused outside micro scale."""
        with pytest.raises(GuardRefusalError):
            pi_n_exact(nn3, Fraction(1, 8), 1, (1, 0, 0), 2)
