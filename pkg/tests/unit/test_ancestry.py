"""Tests for the ancestral-relation contract."""

import math

import numpy as np
import pytest

from rangelab.ancestry import (
    GenerationalSystem,
    check_ar_axioms,
    check_paths,
    extract_path,
    generational_from_records,
    modulus_stat,
    read_event_log,
    rescale,
    write_event_log,
)
from rangelab.exceptions import ConfigurationError, PreconditionError


@pytest.fixture
def diamond():
    """Origin splits to +-1, both merge back at the origin, then extinction."""
    generations = [
        frozenset({(0,)}),
        frozenset({(-1,), (1,)}),
        frozenset({(0,)}),
        frozenset(),
    ]
    parents = {
        (1, (-1,)): frozenset({(0,)}),
        (1, (1,)): frozenset({(0,)}),
        (2, (0,)): frozenset({(-1,), (1,)}),
    }
    return GenerationalSystem(1, generations, parents)


class TestGenerationalSystem:
    """Tests for GenerationalSystem."""

    def test_generation_zero_must_be_origin(self):
        """Test that a non-origin start is rejected."""
        with pytest.raises(PreconditionError):
            GenerationalSystem(1, [frozenset({(1,)})])

    def test_survival(self, diamond):
        """Test extinction time and horizon."""
        assert diamond.survival_time() == 3.0
        assert diamond.extinct()
        assert diamond.horizon == 3.0
        assert diamond.occupied(10) == frozenset()

    def test_beyond_horizon_of_surviving_run(self):
        """Test queries past the horizon of a surviving run are refused."""
        layers = [frozenset({(0,)}), frozenset({(1,)})]
        system = GenerationalSystem(1, layers, {(1, (1,)): frozenset({(0,)})})
        assert math.isinf(system.survival_time())
        with pytest.raises(PreconditionError):
            system.occupied(5)

    def test_ancestry(self, diamond):
        """Test ancestry is parent-chain reachability."""
        assert diamond.ancestor(0, (0,), 2, (0,))
        assert diamond.ancestor(1, (-1,), 2, (0,))
        assert not diamond.ancestor(1, (1,), 1, (-1,))
        assert not diamond.ancestor(2, (0,), 1, (1,))
        assert diamond.e(2, 1, (0,), (0,)) is False
        assert diamond.e(2, 2, (0,), (0,)) is True

    def test_ancestral_path(self, diamond):
        """Test the lexicographically least path is chosen."""
        path = diamond.ancestral_path(2, (0,))
        assert path.breakpoints == [(0.0, (0,)), (1.0, (-1,)), (2.0, (0,))]
        assert path.at(1.5) == (-1,)
        assert path.jump_times() == [1.0, 2.0]

    def test_extract_path_unoccupied(self, diamond):
        """Test path extraction at an unoccupied site."""
        with pytest.raises(PreconditionError):
            extract_path(diamond, 1, (0,))

    def test_mass_profile(self, diamond):
        """Test the step-function mass profile."""
        times, masses = diamond.mass_profile()
        assert times.tolist() == [0.0, 1.0, 2.0, 3.0]
        assert masses.tolist() == [1.0, 2.0, 1.0, 0.0]

    def test_range_sites(self, diamond):
        """Test the range is every site ever occupied."""
        assert diamond.range_sites() == {(-1,), (0,), (1,)}


class TestAxioms:
    """Tests for axiom and path audits."""

    def test_valid_system(self, diamond):
        """Test a consistent system has no violations."""
        assert check_ar_axioms(diamond) == []
        assert check_paths(diamond) == []

    def test_orphan_violates_root(self):
        """Test an occupied site without a parent chain is flagged."""
        system = GenerationalSystem(1, [frozenset({(0,)}), frozenset({(1,)})])
        kinds = {v.kind for v in check_ar_axioms(system)}
        assert "root" in kinds

    def test_sampled_triples(self, diamond):
        """Test the sampled branch agrees on a valid system."""
        assert check_ar_axioms(diamond, sample_budget=1, rng=np.random.default_rng(3)) == []

    def test_equal_time_check_covers_wide_generations(self):
        """Test a relation between the last two of 25 equal-time sites is caught."""

        class LinkedPair(GenerationalSystem):
            def ancestors(self, s, t, x):
                related = super().ancestors(s, t, x)
                if s == t == 1 and tuple(x) == (25,):
                    return related | {(24,)}
                return related

        wide = frozenset((k,) for k in range(1, 26))
        parents = {(1, x): frozenset({(0,)}) for x in wide}
        system = LinkedPair(1, [frozenset({(0,)}), wide, frozenset()], parents)

        found = [v for v in check_ar_axioms(system) if v.kind == "reflexive"]

        assert len(found) == 1
        assert found[0].detail == {"t": 1.0, "y": (24,), "x": (25,)}

    def test_unoccupied_parent_is_flagged(self):
        """Test a parent link to an empty site violates occupancy."""
        generations = [frozenset({(0,)}), frozenset({(1,)}), frozenset({(2,)}), frozenset()]
        parents = {
            (1, (1,)): frozenset({(0,)}),
            (2, (2,)): frozenset({(1,), (5,)}),
        }
        system = GenerationalSystem(1, generations, parents)

        assert system.occupancy_gaps() == [(1.0, (5,))]
        found = [v.detail for v in check_ar_axioms(system) if v.kind == "occupancy"]
        assert found == [{"s": 1.0, "y": (5,)}]

    def test_rescaled_gaps(self):
        """Test occupancy gaps carry over to the rescaled view."""
        generations = [frozenset({(0,)}), frozenset({(2,)}), frozenset()]
        parents = {(1, (2,)): frozenset({(0,), (4,)})}
        view = rescale(GenerationalSystem(1, generations, parents), 4)

        assert view.occupancy_gaps() == [(0.0, (2.0,))]

    def test_valid_system_has_no_gaps(self, diamond):
        """Test a consistent system reports no occupancy gaps."""
        assert diamond.occupancy_gaps() == []
        assert diamond.ancestors(1, 2, (0,)) == frozenset({(-1,), (1,)})
        assert diamond.ancestors(2, 2, (0,)) == frozenset({(0,)})
        assert diamond.ancestors(1, 1, (0,)) == frozenset()


class TestRescale:
    """Tests for rescaled views."""

    def test_rescaled_occupancy(self, diamond):
        """Test time is divided by n and space by sqrt(n)."""
        view = rescale(diamond, 4)
        assert view.occupied(0.25) == frozenset({(-0.5,), (0.5,)})
        assert view.is_occupied(0.5, (0.0,))
        assert not view.is_occupied(0.5, (0.3,))
        assert view.survival_time() == pytest.approx(0.75)

    def test_rescaled_path(self, diamond):
        """Test ancestral paths are rescaled."""
        path = rescale(diamond, 4).ancestral_path(0.5, (0.0,))
        assert path.breakpoints[1] == (0.25, (-0.5,))

    def test_range_points(self, diamond):
        """Test the rescaled range array."""
        points = rescale(diamond, 4).range_points()
        assert sorted(points[:, 0].tolist()) == [-0.5, 0.0, 0.5]

    def test_invalid_scale(self, diamond):
        """Test n < 1 and double rescaling are rejected."""
        with pytest.raises(ConfigurationError):
            rescale(diamond, 0.5)
        with pytest.raises(ConfigurationError):
            rescale(rescale(diamond, 2), 2)


class TestModulus:
    """Tests for the modulus statistic."""

    def test_modulus(self, diamond):
        """Test Delta(0) = 0 and a unit jump within positive time."""
        report = modulus_stat(rescale(diamond, 1), [0.0, 0.5, 2.0])
        assert report.delta == [0.0, 1.0, 1.0]
        assert report.lower_bound is True


class TestEventLog:
    """Tests for event-log persistence."""

    def test_round_trip(self, diamond, tmp_path):
        """Test a generational system survives a write and read."""
        path = write_event_log(tmp_path / "events.jsonl", diamond, seed=3)
        header, records = read_event_log(path)
        assert header["seed"] == 3
        rebuilt = generational_from_records(header, records)
        assert rebuilt.generations == diamond.generations
        assert rebuilt.ancestor(0, (0,), 2, (0,))

    def test_missing_header(self, tmp_path):
        """Test a log without a header is rejected."""
        path = tmp_path / "bad.jsonl"
        path.write_text('{"time": 1}\n')
        with pytest.raises(PreconditionError):
            read_event_log(path)
