"""Integration tests for the command-line runner."""

import json

import pytest

from rangelab.artifacts import read_artifact
from rangelab.cli import EXIT_GUARD, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, build_parser, run
from rangelab.exceptions import GuardRefusalError


def run_in(tmp_path, *argv):
    """Run one command with its artifacts under tmp_path."""
    return run([*argv, "--output", str(tmp_path), "--log-level", "WARNING"])


def manifest(tmp_path, run_dir):
    """Load the manifest of one run directory."""
    return json.loads((tmp_path / run_dir / "manifest.json").read_text())


class TestParser:
    """Tests for argument parsing."""

    def test_unknown_flag(self, tmp_path):
        """Test unknown flag is a usage error."""
        assert run_in(tmp_path, "sbm", "vd", "--bogus") == EXIT_USAGE

    def test_missing_group(self):
        """Test missing command group is a usage error."""
        assert run([]) == EXIT_USAGE

    def test_rational_flags(self):
        """Test rational values are accepted."""
        args = build_parser().parse_args(["op", "survive", "--p", "3/4", "--t-grid", "1,2,5"])

        assert args.p == pytest.approx(0.75)
        assert args.t_grid == [1.0, 2.0, 5.0]

    def test_missing_config(self, tmp_path):
        """Test missing config file is a usage error."""
        assert run_in(tmp_path, "sbm", "vd", "--config", str(tmp_path / "none.yaml")) == EXIT_USAGE

    def test_invalid_value(self, tmp_path):
        """Test invalid config value is a usage error."""
        assert run(["sbm", "vd", "--log-level", "LOUD", "--output", str(tmp_path)]) == EXIT_USAGE


class TestSbmCommands:
    """Tests for the sbm group."""

    def test_vd_d1(self, tmp_path):
        """Test v_1(0) against the quadrature oracle."""
        assert run_in(tmp_path, "sbm", "vd", "--d", "1") == EXIT_OK

        data = json.loads((tmp_path / "sbm-vd" / "sbm_vd.json").read_text())
        assert data["relative_error"] < 1e-4
        assert manifest(tmp_path, "sbm-vd")["exit_code"] == EXIT_OK

    def test_manifest_outputs(self, tmp_path):
        """Test manifest lists the artifacts and metrics are written."""
        run_in(tmp_path, "sbm", "vd", "--d", "1", "--seed", "5")
        data = manifest(tmp_path, "sbm-vd")

        assert data["outputs"] == ["sbm_vd.json"]
        assert data["seed"] == 5
        assert data["config"]["lattice"]["d"] == 1
        assert (tmp_path / "sbm-vd" / "metrics.prom").exists()


class TestTreeCommands:
    """Tests for the tree group."""

    def test_lace_check(self, tmp_path):
        """Test lace identity check passes."""
        assert run_in(tmp_path, "tree", "lace-check", "--n", "1", "--assignments", "5") == EXIT_OK

        data = json.loads((tmp_path / "tree-lace-check" / "tree_lace_check.json").read_text())
        assert data["verdict"] == "pass"
        assert data["violations"] == 0

    def test_lace_check_lists_graphs(self, tmp_path):
        """Test the first assignment at n = 5 lists connected graphs."""
        assert run_in(tmp_path, "tree", "lace-check", "--n", "5", "--assignments", "2") == EXIT_OK

        data = json.loads((tmp_path / "tree-lace-check" / "tree_lace_check.json").read_text())
        assert data["enumerated"] == 1
        assert data["verdict"] == "pass"

    def test_enumerate_d2(self, tmp_path):
        """Test tree counts on Z^2."""
        argv = ["tree", "enumerate", "--d", "2", "--depth", "3", "--check-upto", "2"]
        code = run_in(tmp_path, *argv)
        assert code == EXIT_OK

        data = json.loads((tmp_path / "tree-enumerate" / "tree_enumerate.json").read_text())
        assert data["counts"] == [1, 4, 18, 88]


class TestOpCommands:
    """Tests for the op group."""

    def test_exact_small(self, tmp_path):
        """Test a micro instance is enumerated."""
        assert run_in(tmp_path, "op", "exact", "--d", "1", "--n", "2") == EXIT_OK
        assert (tmp_path / "op-exact" / "op_exact.json").exists()

    def test_exact_guard(self, tmp_path):
        """Test an oversized instance is refused."""
        assert run_in(tmp_path, "op", "exact", "--d", "1", "--n", "5") == EXIT_GUARD
        assert manifest(tmp_path, "op-exact")["exit_code"] == EXIT_GUARD

    def test_cond7(self, tmp_path):
        """Test exact factorization identity passes."""
        assert run_in(tmp_path, "op", "cond7", "--d", "1") == EXIT_OK


class TestSimulationCommands:
    """Tests for simulation commands."""

    def test_gw_survive(self, tmp_path):
        """Test spaceless survival curve with its oracle column."""
        argv = ["brw", "survive", "--spaceless", "--offspring", "geometric", "--replicas", "200"]
        code = run_in(tmp_path, *argv, "--t-grid", "1,2,4", "--n-max", "10")
        assert code == EXIT_OK

        frame = read_artifact(tmp_path / "brw-survive" / "gw_survive.csv")
        assert frame["oracle"].tolist() == pytest.approx([1 / 2, 1 / 3, 1 / 5])
        assert len(frame) == 3

    def test_voter_survive(self, tmp_path):
        """Test small voter survival run."""
        argv = ["voter", "survive", "--d", "2", "--replicas", "20", "--t-grid", "1,2"]
        code = run_in(tmp_path, *argv, "--t-max", "2")
        assert code == EXIT_OK
        assert (tmp_path / "voter-survive" / "voter_survive.csv").exists()

    def test_unsupported_condition(self, tmp_path):
        """Test unsupported pair is a usage error."""
        argv = ["estimate", "condition", "--model", "gw", "--which", "3", "--replicas", "10"]
        code = run_in(tmp_path, *argv)
        assert code == EXIT_USAGE


class TestPlotData:
    """Tests for plotdata."""

    def test_merge(self, tmp_path):
        """Test merging a generated curve."""
        argv = ["brw", "survive", "--spaceless", "--replicas", "50", "--t-grid", "1,2"]
        run_in(tmp_path, *argv, "--n-max", "5")
        source = tmp_path / "brw-survive" / "gw_survive.csv"

        assert run_in(tmp_path, "plotdata", str(source)) == EXIT_OK
        merged = read_artifact(tmp_path / "plotdata" / "plotdata.csv")
        assert set(merged["series"]) == {"gw_survive", "gw_survive:prediction"}

    def test_missing_input(self, tmp_path):
        """Test missing input file exits with an internal error."""
        assert run_in(tmp_path, "plotdata", str(tmp_path / "none.csv")) == EXIT_INTERNAL


class TestFailureHandling:
    """Tests for exit codes of failing handlers."""

    def test_internal_error_writes_manifest(self, tmp_path, mocker):
        """Test a crashing handler exits 1 and still leaves a manifest."""
        handler = mocker.Mock(side_effect=RuntimeError("boom"))
        mocker.patch.dict("rangelab.cli.COMMANDS", {("sbm", "vd"): handler})

        assert run_in(tmp_path, "sbm", "vd") == EXIT_INTERNAL
        handler.assert_called_once()
        data = manifest(tmp_path, "sbm-vd")
        assert data["exit_code"] == EXIT_INTERNAL
        assert data["outputs"] == []

    def test_guard_refusal_exit(self, tmp_path, mocker):
        """Test a guard refusal raised by any handler maps to exit 2."""
        refusal = GuardRefusalError("too big", bound=4, requested=9)
        mocker.patch.dict(
            "rangelab.cli.COMMANDS", {("tree", "pi-n"): mocker.Mock(side_effect=refusal)}
        )

        assert run_in(tmp_path, "tree", "pi-n", "--x", "1,0") == EXIT_GUARD
