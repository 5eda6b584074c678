"""Unit tests for result types."""

import time

import numpy as np
import pytest

from rangelab.types import (
    CURVE_COLUMNS,
    Curve,
    EstimatorReport,
    ExperimentManifest,
    OneArmCurve,
    ReplicaRecord,
    SurvivalCurve,
)


def make_curve(cls=Curve, estimate=(0.5, 0.25, 0.125), normalized=(1.0, 1.0, 1.0)):
    """Build a three-point curve."""
    estimate = np.asarray(estimate, dtype=float)
    return cls(
        grid_name="t",
        grid=np.array([1.0, 2.0, 4.0]),
        estimate=estimate,
        stderr=np.full(3, 0.01),
        ci_lo=estimate - 0.02,
        ci_hi=estimate + 0.02,
        normalized=np.asarray(normalized, dtype=float),
        replicas=100,
    )


class TestReplicaRecord:
    """Tests for ReplicaRecord."""

    def test_defaults(self):
        """Test default status and payload."""
        record = ReplicaRecord(replica=3)

        assert record.status == "ok"
        assert record.payload == {}

    def test_to_dict(self):
        """Test conversion to dictionary."""
        data = ReplicaRecord(replica=1, status="truncated", events=7, payload={"S": 2.0}).to_dict()

        assert data["replica"] == 1
        assert data["status"] == "truncated"
        assert data["events"] == 7
        assert data["payload"] == {"S": 2.0}


class TestEstimatorReport:
    """Tests for EstimatorReport."""

    def test_from_samples(self):
        """Test mean and standard error."""
        report = EstimatorReport.from_samples("mass", [1.0, 2.0, 3.0, 4.0], seed=5)

        assert report.estimate == pytest.approx(2.5)
        assert report.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
        assert report.replicas == 4
        assert report.seed == 5

    def test_single_sample(self):
        """Test one sample has undefined standard error."""
        report = EstimatorReport.from_samples("mass", [1.0])

        assert np.isnan(report.stderr)

    def test_empty(self):
        """Test empty samples are refused."""
        with pytest.raises(ValueError, match="no samples"):
            EstimatorReport.from_samples("mass", [])

    def test_to_dict(self):
        """Test conversion to dictionary."""
        report = EstimatorReport.from_samples("mass", [1.0, 1.0], parameters={"n": 4})
        data = report.to_dict()

        assert data["name"] == "mass"
        assert data["parameters"] == {"n": 4}
        assert data["config_hash"] is None
        assert data["notes"] == []


class TestCurve:
    """Tests for Curve and its subclasses."""

    def test_frame_columns(self):
        """Test frame layout."""
        frame = make_curve().to_frame()

        assert list(frame.columns) == ["t", *CURVE_COLUMNS]
        assert len(frame) == 3

    def test_monotone(self):
        """Test monotonicity check."""
        assert make_curve().is_monotone()
        assert not make_curve(estimate=(0.5, 0.6, 0.1)).is_monotone()

    def test_to_dict(self):
        """Test conversion to dictionary."""
        data = make_curve().to_dict()

        assert data["t"] == [1.0, 2.0, 4.0]
        assert data["extras"] == {}

    def test_survival_envelope(self):
        """Test envelope of the normalized column."""
        curve = make_curve(SurvivalCurve, normalized=(0.8, 1.2, 1.0))

        assert curve.envelope == {"min": 0.8, "max": 1.2}

    def test_one_arm_prediction_default(self):
        """Test one-arm curve starts without a prediction."""
        assert make_curve(OneArmCurve).prediction is None


class TestExperimentManifest:
    """Tests for ExperimentManifest."""

    def test_creation(self):
        """Test manifest fields."""
        manifest = ExperimentManifest(
            command=["sbm", "vd"],
            config={"experiment": {"seed": 1}},
            config_hash="abc",
            seed=1,
            experiment_id="test",
            version="0.1.0",
        )

        assert manifest.exit_code is None
        assert manifest.wall_time_s is None
        assert manifest.outputs == []

    def test_finish(self):
        """Test finishing records exit code and wall time."""
        manifest = ExperimentManifest(["x"], {}, "h", 0, "e", "0.1.0", started_at=time.time() - 1.0)
        manifest.finish(2)
        data = manifest.to_dict()

        assert data["exit_code"] == 2
        assert data["wall_time_s"] >= 1.0
        assert data["finished_at"] is not None
