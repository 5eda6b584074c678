"""Tests for structured logging."""

import json
import logging

from rangelab.config import LoggingConfig
from rangelab.logging import (
    JSONFormatter,
    PlainFormatter,
    RunContextFilter,
    get_logger,
    setup_logging,
)


class TestJSONFormatter:
    """Tests for JSONFormatter."""

    def test_format_with_extra(self):
        """Test JSON output carries extra fields."""
        record = logging.LogRecord(
            "rangelab.test", logging.INFO, __file__, 10, "ran %d", (3,), None
        )
        record.replica = 3
        record.model = "voter"
        data = json.loads(JSONFormatter().format(record))
        assert data["message"] == "ran 3"
        assert data["level"] == "INFO"
        assert data["replica"] == 3
        assert data["model"] == "voter"


class TestSetupLogging:
    """Tests for setup_logging."""

    def test_file_output(self, tmp_path):
        """Test logging to a file in plain format."""
        log_file = tmp_path / "run.log"
        setup_logging(LoggingConfig(level="DEBUG", format="plain", output=str(log_file)))
        root = logging.getLogger()
        assert root.level == logging.DEBUG
        assert isinstance(root.handlers[0].formatter, PlainFormatter)
        get_logger("rangelab.test").info("hello")
        root.handlers[0].flush()
        assert "hello" in log_file.read_text()
        setup_logging(LoggingConfig(output="stderr"))

    def test_ray_quieted(self):
        """Test the ray logger is raised to WARNING."""
        setup_logging(LoggingConfig(output="stderr"))
        assert logging.getLogger("ray").level == logging.WARNING

    def test_run_context_in_json(self, tmp_path):
        """Test every JSON record carries the run identifiers."""
        log_file = tmp_path / "run.jsonl"
        context = {"experiment_id": "range-a", "seed": 7, "config_hash": "abc123def456"}
        setup_logging(LoggingConfig(format="json", output=str(log_file)), context=context)
        get_logger("rangelab.test").info("replicas done", extra={"replicas": 10})
        logging.getLogger().handlers[0].flush()

        data = json.loads(log_file.read_text().splitlines()[-1])
        assert data["experiment_id"] == "range-a"
        assert data["seed"] == 7
        assert data["config_hash"] == "abc123def456"
        assert data["replicas"] == 10
        setup_logging(LoggingConfig(output="stderr"))

    def test_run_context_in_plain(self, tmp_path):
        """Test plain lines are tagged with experiment id and short config hash."""
        log_file = tmp_path / "run.log"
        context = {"experiment_id": "range-a", "config_hash": "abc123def456"}
        setup_logging(LoggingConfig(format="plain", output=str(log_file)), context=context)
        get_logger("rangelab.test").info("hello")
        logging.getLogger().handlers[0].flush()

        assert log_file.read_text().startswith("[range-a@abc123de] ")
        setup_logging(LoggingConfig(output="stderr"))


class TestRunContextFilter:
    """Tests for RunContextFilter."""

    def _record(self):
        return logging.LogRecord("rangelab.test", logging.INFO, __file__, 1, "x", (), None)

    def test_explicit_extra_wins(self):
        """Test a per-call seed is not overwritten by the run seed."""
        record = self._record()
        record.seed = 99
        assert RunContextFilter({"seed": 1, "experiment_id": "e"}).filter(record)
        assert record.seed == 99
        assert record.experiment_id == "e"

    def test_unknown_keys_dropped(self):
        """Test only run identifier fields are stamped."""
        record = self._record()
        RunContextFilter({"model": "voter", "command": "range stats"}).filter(record)
        assert not hasattr(record, "model")
        assert record.command == "range stats"

    def test_no_context_leaves_plain_untagged(self):
        """Test records without an experiment id format without a tag."""
        line = PlainFormatter().format(self._record())
        assert not line.startswith("[")
