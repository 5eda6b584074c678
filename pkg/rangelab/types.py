"""Result types shared by estimators, the replica farm and the runner."""

import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

CURVE_COLUMNS = ("estimate", "stderr", "ci_lo", "ci_hi", "normalized", "replicas")


@dataclass
class ReplicaRecord:
    """Statistics extracted from one replica."""

    replica: int
    status: str = "ok"
    duration_s: float = 0.0
    events: int = 0
    payload: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation
        """
        return {
            "replica": self.replica,
            "status": self.status,
            "duration_s": self.duration_s,
            "events": self.events,
            "payload": self.payload,
        }


@dataclass
class EstimatorReport:
    """Point estimate with its provenance."""

    name: str
    estimate: float
    stderr: float
    replicas: int
    parameters: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    config_hash: Optional[str] = None
    notes: List[str] = field(default_factory=list)
    extras: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_samples(cls, name: str, samples: Any, **kwargs: Any) -> "EstimatorReport":
        """Mean and standard error of i.i.d. replica statistics."""
        values = np.asarray(samples, dtype=float)
        if values.size == 0:
            raise ValueError(f"{name}: no samples")
        stderr = float("nan")
        if values.size > 1:
            stderr = float(values.std(ddof=1) / np.sqrt(values.size))
        return cls(
            name=name,
            estimate=float(values.mean()),
            stderr=stderr,
            replicas=int(values.size),
            **kwargs,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation
        """
        return {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "replicas": self.replicas,
            "parameters": self.parameters,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "notes": self.notes,
            "extras": self.extras,
        }


@dataclass
class Curve:
    """Estimates over a grid, evaluated on one shared replica set."""

    grid_name: str
    grid: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    normalized: np.ndarray
    replicas: int
    descriptions: Dict[str, str] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)

    def is_monotone(self) -> bool:
        """Non-increasing estimate along the grid."""
        return bool(np.all(np.diff(self.estimate) <= 0))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                self.grid_name: self.grid,
                "estimate": self.estimate,
                "stderr": self.stderr,
                "ci_lo": self.ci_lo,
                "ci_hi": self.ci_hi,
                "normalized": self.normalized,
                "replicas": self.replicas,
            }
        )
        return frame

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation
        """
        out = self.to_frame().to_dict(orient="list")
        out["extras"] = self.extras
        return out


@dataclass
class SurvivalCurve(Curve):
    """theta(t) with the normalized column m(t) theta(t)."""

    @property
    def envelope(self) -> Dict[str, float]:
        """Min and max of m(t) theta(t) across the grid."""
        return {"min": float(np.min(self.normalized)), "max": float(np.max(self.normalized))}


@dataclass
class OneArmCurve(Curve):
    """eta_r with the normalized column m(r^2) eta_r and its predicted limit."""

    prediction: Optional[float] = None


@dataclass
class ExperimentManifest:
    """Provenance record written next to every run's artifacts."""

    command: List[str]
    config: Dict[str, Any]
    config_hash: str
    seed: int
    experiment_id: str
    version: str
    started_at: float = field(default_factory=time.time)
    finished_at: Optional[float] = None
    outputs: List[str] = field(default_factory=list)
    exit_code: Optional[int] = None

    @property
    def wall_time_s(self) -> Optional[float]:
        if self.finished_at is None:
            return None
        return self.finished_at - self.started_at

    def finish(self, exit_code: int) -> None:
        self.finished_at = time.time()
        self.exit_code = exit_code

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary.

        Returns:
            Dictionary representation
        """
        return {
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "experiment_id": self.experiment_id,
            "version": self.version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "wall_time_s": self.wall_time_s,
            "outputs": self.outputs,
            "exit_code": self.exit_code,
        }
