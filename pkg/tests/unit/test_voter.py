"""Tests for the voter model simulator and its ancestral system."""

import itertools

import numpy as np
import pytest

from rangelab.ancestry import check_ar_axioms, check_paths, read_event_log, write_event_log
from rangelab.exceptions import PreconditionError
from rangelab.lattice import add
from rangelab.models.voter import (
    BIRTH,
    DEATH,
    SILENT,
    ArrowEvent,
    VoterRealization,
    simulate_voter,
    simulate_walk_moment,
    voter_ancestral,
)
from rangelab.rng import replica_rng, stream_digest


@pytest.fixture
def arrows():
    """Birth to (1,0), a silent arrow back, then both sites die."""
    return [
        ArrowEvent(1.0, (0, 0), (1, 0), BIRTH),
        ArrowEvent(1.5, (1, 0), (0, 0), SILENT),
        ArrowEvent(2.0, (0, 1), (0, 0), DEATH),
        ArrowEvent(3.0, (2, 0), (1, 0), DEATH),
    ]


@pytest.fixture
def realization(nn2, arrows):
    """Hand-built voter realization."""
    return VoterRealization(nn2, arrows, t_max=10.0)


class TestVoterRealization:
    """Tests for VoterRealization."""

    def test_occupancy(self, realization):
        """Test occupancy intervals follow births and deaths."""
        assert realization.occupied(0.5) == frozenset({(0, 0)})
        assert realization.occupied(1.2) == frozenset({(0, 0), (1, 0)})
        assert realization.occupied(2.5) == frozenset({(1, 0)})
        assert realization.survival_time() == 3.0
        assert realization.horizon == 3.0

    def test_mass_profile(self, realization):
        """Test the mass profile is read from births and deaths."""
        times, masses = realization.mass_profile()
        assert times.tolist() == [0.0, 1.0, 2.0, 3.0]
        assert masses.tolist() == [1.0, 2.0, 1.0, 0.0]

    def test_dual_walk(self, realization):
        """Test the dual walk follows arrows backward in time."""
        walk = realization.dual_walk(1.7, (0, 0))
        assert walk.jumps == [(pytest.approx(0.2), (1, 0)), (pytest.approx(0.7), (0, 0))]
        assert walk.end == (0, 0)

    def test_ancestry(self, realization):
        """Test ancestry queries through the dual walk."""
        assert realization.ancestor(0.0, (0, 0), 1.7, (0, 0))
        assert realization.ancestor(1.2, (1, 0), 1.7, (0, 0))
        assert not realization.ancestor(1.2, (0, 0), 1.7, (0, 0))
        assert realization.descendants(1.2, (1, 0), 1.7) == {(0, 0), (1, 0)}

    def test_axioms_hold(self, realization):
        """Test a consistent arrow log satisfies the axioms."""
        assert check_ar_axioms(realization) == []
        assert check_paths(realization) == []

    def test_silent_arrow_from_empty_source_is_flagged(self, nn2):
        """Test an arrow a dual can cross must start at an occupied site."""
        bad = VoterRealization(nn2, [ArrowEvent(1.5, (3, 0), (0, 0), SILENT)], t_max=4.0)

        assert bad.occupancy_gaps() == [(1.5, (3, 0))]
        assert "occupancy" in {v.kind for v in check_ar_axioms(bad)}

    def test_ancestors(self, realization):
        """Test the ancestor set is the dual position."""
        assert realization.occupancy_gaps() == []
        assert realization.ancestors(1.2, 1.7, (0, 0)) == frozenset({(1, 0)})
        assert realization.ancestors(1.7, 1.7, (0, 0)) == frozenset({(0, 0)})
        assert realization.ancestors(2.5, 2.5, (0, 0)) == frozenset()

    def test_query_far_from_range(self, realization):
        """Test queries outside the logged neighborhood are refused."""
        with pytest.raises(PreconditionError):
            realization.dual_walk(1.0, (9, 9))

    def test_range_and_sites_by(self, realization):
        """Test the range and the distinct-site count."""
        assert realization.range_sites() == {(0, 0), (1, 0)}
        assert realization.sites_by(0.5) == 1
        assert realization.sites_by(1.0) == 2

    def test_event_log_round_trip(self, realization, tmp_path):
        """Test an arrow log replays to the same system."""
        path = write_event_log(tmp_path / "voter.jsonl", realization, seed=1)
        header, records = read_event_log(path)
        rebuilt = VoterRealization.from_event_log(header, records)
        assert rebuilt.survival_time() == realization.survival_time()
        assert rebuilt.occupied(1.2) == realization.occupied(1.2)

    def test_dual_from_empty_site_moves(self, nn2):
        """Test a dual walk from an empty site jumps and avoids occupied sources."""
        lone = VoterRealization(nn2, [], t_max=50.0, dual_seed=3)
        walk = lone.dual_walk(50.0, (1, 0))

        assert len(walk.jumps) > 0
        assert (0, 0) not in [y for _, y in walk.jumps]
        assert walk.end != (0, 0)

    def test_silent_stream_is_order_independent(self, nn2, arrows):
        """Test empty-site duals do not depend on query order."""
        a = VoterRealization(nn2, arrows, t_max=10.0, dual_seed=8)
        b = VoterRealization(nn2, arrows, t_max=10.0, dual_seed=8)
        first = a.dual_walk(6.0, (1, 1)).jumps
        second = a.dual_walk(5.0, (-1, 0)).jumps

        assert b.dual_walk(5.0, (-1, 0)).jumps == second
        assert b.dual_walk(6.0, (1, 1)).jumps == first

    def test_dual_seed_round_trip(self, nn2, arrows, tmp_path):
        """Test the silent stream survives a persisted log."""
        original = VoterRealization(nn2, arrows, t_max=10.0, dual_seed=8)
        header, records = read_event_log(write_event_log(tmp_path / "v.jsonl", original))
        rebuilt = VoterRealization.from_event_log(header, records)

        assert rebuilt.dual_seed == 8
        assert rebuilt.dual_walk(6.0, (1, 1)).jumps == original.dual_walk(6.0, (1, 1)).jumps


class TestSimulateVoter:
    """Tests for simulate_voter."""

    def test_reproducible(self, nn2):
        """Test the same stream gives the same arrow log."""
        a = simulate_voter(nn2, replica_rng(5, "voter", 0), t_max=5.0)
        b = simulate_voter(nn2, replica_rng(5, "voter", 0), t_max=5.0)
        assert a.arrows == b.arrows

    @pytest.mark.parametrize("replica", range(5))
    def test_simulated_axioms(self, nn2, replica):
        """Test simulated runs satisfy the axioms."""
        rng = replica_rng(9, "voter-axioms", replica)
        run = voter_ancestral(simulate_voter(nn2, rng, t_max=3.0))
        assert run.occupied(0.0) == frozenset({(0, 0)})
        assert check_ar_axioms(run, sample_budget=500) == []

    def test_site_cap_or_extinction(self, nn2):
        """Test a tight site cap stops every surviving run."""
        for replica in range(10):
            run = simulate_voter(nn2, replica_rng(3, "voter-cap", replica), t_max=1e6, site_cap=3)
            assert run.truncated or run.extinct()
            assert len(run.range_sites()) <= 4

    def test_non_positive_horizon(self, nn2, rng):
        """Test t_max must be positive."""
        with pytest.raises(PreconditionError):
            simulate_voter(nn2, rng, t_max=0.0)

    def test_stream_untouched_by_other_replicas(self, nn2):
        """Test one replica's stream does not depend on running others first."""
        before = stream_digest(replica_rng(5, "voter", 0))
        simulate_voter(nn2, replica_rng(5, "voter", 1), t_max=5.0)
        assert stream_digest(replica_rng(5, "voter", 0)) == before


def _window(d: int):
    return list(itertools.product(range(-1, 2), repeat=d))


class TestDualWalkLaw:
    """Tests for dual walks on simulated runs."""

    @pytest.mark.parametrize("replica", range(4))
    def test_membership_equivalence(self, nn2, replica):
        """Test x in T_t exactly when the dual from (t, x) ends at the origin."""
        run = simulate_voter(nn2, replica_rng(17, "voter-dual", replica), t_max=3.0)
        sites = {add(y, step) for y in run.range_sites() for step in _window(2)}

        for t in (0.5, 1.5, 2.5):
            for x in sites:
                assert run.is_occupied(t, x) == (run.dual_walk(t, x).end == (0, 0))

    @pytest.mark.parametrize("replica", range(3))
    def test_coalescence(self, nn2, replica):
        """Test duals that meet stay merged."""
        run = simulate_voter(nn2, replica_rng(19, "voter-dual", replica), t_max=3.0)
        sites = sorted({add(y, step) for y in run.range_sites() for step in _window(2)})
        grid = np.linspace(0.0, 3.0, 121)

        for x, x2 in itertools.combinations(sites[:12], 2):
            a, b = run.dual_walk(3.0, x), run.dual_walk(3.0, x2)
            met = False
            for u in grid:
                same = a.at(u) == b.at(u)
                assert same or not met
                met = met or same

    def test_step_statistics_match_direct_walk(self, nn2):
        """Test dual jump counts and displacements against a rate-1 kernel walk."""
        s, x = 2.0, (1, 0)
        counts, squares = [], []
        for replica in range(400):
            run = simulate_voter(nn2, replica_rng(21, "voter-dual", replica), t_max=s)
            walk = run.dual_walk(s, x)
            counts.append(len(walk.jumps))
            squares.append(sum((a - b) ** 2 for a, b in zip(walk.end, x)))
        counts = np.array(counts)
        squares = np.array(squares, dtype=float)
        direct = simulate_walk_moment(nn2, s, 2, np.random.default_rng(21), 20000)

        # Jumps on [0, s] are Poisson(s)
        assert abs(counts.mean() - s) <= 4 * np.sqrt(s / counts.size)
        assert abs(np.mean(counts == 0) - np.exp(-s)) <= 0.07
        se = np.sqrt(squares.var() / squares.size + direct.var() / direct.size)
        assert abs(squares.mean() - direct.mean()) <= 4 * se
        assert abs(direct.mean() - s) <= 0.15


class TestWalkMoment:
    """Tests for simulate_walk_moment."""

    def test_second_moment(self, nn2):
        """Test E|W_s|^2 = s for the rate-1 nearest-neighbor walk."""
        values = simulate_walk_moment(nn2, 4.0, 2, np.random.default_rng(0), 20000)
        assert values.mean() == pytest.approx(4.0, abs=0.3)
