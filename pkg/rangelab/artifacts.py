"""Artifact writer and plot-data merge."""

import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from rangelab.exceptions import ArtifactNotFoundError
from rangelab.logging import get_logger
from rangelab.types import Curve, ExperimentManifest

logger = get_logger(__name__)

PLOT_COLUMNS = ("series", "x", "y", "ylo", "yhi")


def to_jsonable(value: Any) -> Any:
    """Convert results to JSON-ready values; rationals become "p/q" strings."""
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [to_jsonable(v) for v in items]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return str(value)


class ArtifactWriter:
    """Writes CSV and JSON artifacts into one run directory."""

    def __init__(self, output_dir: str):
        """Initialize artifact writer.

        Args:
            output_dir: Run directory, created if missing
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.outputs: List[str] = []
        logger.info(f"Output to local: {self.output_dir}")

    def write_csv(self, df: pd.DataFrame, filename: str, descriptions: Mapping[str, str]) -> Path:
        """Write a table with one "# column: meaning" line per column above the header.

        Args:
            df: Table to write
            filename: Output filename
            descriptions: Meaning and units per column

        Returns:
            Path of the written file
        """
        output_file = self.output_dir / filename
        with open(output_file, "w", newline="") as f:
            for column in df.columns:
                f.write(f"# {column}: {descriptions.get(column, column)}\n")
            df.to_csv(f, index=False)
        self.outputs.append(filename)
        logger.info(f"Wrote CSV to {output_file}")
        return output_file

    def write_curve(
        self, curve: Curve, filename: str, extra_columns: Optional[Dict[str, Any]] = None
    ) -> Path:
        """Write a curve table, optionally with extra columns such as a prediction."""
        df = curve.to_frame()
        descriptions = dict(curve.descriptions)
        for column, (values, meaning) in (extra_columns or {}).items():
            df[column] = values
            descriptions[column] = meaning
        return self.write_csv(df, filename, descriptions)

    def write_json(self, data: Any, filename: str) -> Path:
        """Write data as sorted, indented JSON.

        Args:
            data: Data to write
            filename: Output filename

        Returns:
            Path of the written file
        """
        output_file = self.output_dir / filename
        output_file.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n")
        self.outputs.append(filename)
        logger.info(f"Wrote JSON to {output_file}")
        return output_file

    def write_manifest(self, manifest: ExperimentManifest) -> Path:
        manifest.outputs = list(self.outputs)
        output_file = self.output_dir / "manifest.json"
        payload = json.dumps(to_jsonable(manifest.to_dict()), indent=2, sort_keys=True)
        output_file.write_text(payload + "\n")
        return output_file


def read_artifact(path: Path) -> pd.DataFrame:
    """Read a curve CSV, skipping its description lines.

    Raises:
        ArtifactNotFoundError: If the file does not exist
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactNotFoundError(f"Artifact not found: {path}")
    return pd.read_csv(path, comment="#")


def _block(series: str, x: pd.Series, y: pd.Series, ylo: Any, yhi: Any) -> pd.DataFrame:
    return pd.DataFrame({"series": series, "x": x.values, "y": y.values, "ylo": ylo, "yhi": yhi})


def plot_frame(df: pd.DataFrame, name: str) -> pd.DataFrame:
    """Long-format rows for one curve table.

    The first column is the x axis unless it is ``n``, in which case the
    table holds one curve per n and the second column is the x axis. A
    ``prediction`` column becomes its own series without a band.
    """
    columns = list(df.columns)
    groups = [(name, df)]
    x_col = columns[0]
    if x_col == "n" and len(columns) > 1:
        x_col = columns[1]
        groups = [(f"{name}:n={n:g}", part) for n, part in df.groupby("n", sort=True)]
    blocks = []
    for series, part in groups:
        ylo = part["ci_lo"].values if "ci_lo" in part else math.nan
        yhi = part["ci_hi"].values if "ci_hi" in part else math.nan
        blocks.append(_block(series, part[x_col], part["estimate"], ylo, yhi))
        if "prediction" in part:
            blocks.append(
                _block(f"{series}:prediction", part[x_col], part["prediction"], math.nan, math.nan)
            )
    return pd.concat(blocks, ignore_index=True)


def emit_plotdata(
    paths: Sequence[Path], writer: ArtifactWriter, filename: str = "plotdata.csv"
) -> Path:
    """Merge curve artifacts into one tidy (series, x, y, ylo, yhi) table.

    Args:
        paths: Curve CSVs
        writer: Destination writer
        filename: Output filename

    Returns:
        Path of the merged table

    Raises:
        ArtifactNotFoundError: If any input is missing
    """
    frames = [plot_frame(read_artifact(p), Path(p).stem) for p in paths]
    merged = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=PLOT_COLUMNS)
    return writer.write_csv(
        merged,
        filename,
        {
            "series": "curve name (file stem, with :n=... per scale and :prediction for limits)",
            "x": "grid value of the source curve",
            "y": "estimate or predicted value",
            "ylo": "lower 95% band (empty for predictions)",
            "yhi": "upper 95% band (empty for predictions)",
        },
    )
