"""Structured logging configuration.

Records are stamped with the run context (experiment id, seed, config hash
and command) so replica logs from different runs can be told apart.
"""

import json
import logging
import sys
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from rangelab.config import LoggingConfig

# Run context fields stamped on every record by RunContextFilter
_CONTEXT_FIELDS = ("experiment_id", "seed", "config_hash", "command")

# Per-call extra attributes copied into JSON output
_EXTRA_FIELDS = ("replica", "model", "duration_ms", "replicas", "operation", "exit_code")


class RunContextFilter(logging.Filter):
    """Attach the current run's identifiers to each record.

    A value passed explicitly through ``extra`` wins over the context.
    """

    def __init__(self, context: Optional[Dict[str, Any]] = None):
        super().__init__()
        self.context = {k: v for k, v in (context or {}).items() if k in _CONTEXT_FIELDS}

    def filter(self, record: logging.LogRecord) -> bool:
        for name, value in self.context.items():
            if not hasattr(record, name):
                setattr(record, name, value)
        return True


class JSONFormatter(logging.Formatter):
    """JSON log formatter."""

    def format(self, record: logging.LogRecord) -> str:
        """Format log record as JSON.

        Args:
            record: Log record

        Returns:
            JSON formatted log string
        """
        log_data: Dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "function": record.funcName,
            "line": record.lineno,
        }

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        for name in _CONTEXT_FIELDS + _EXTRA_FIELDS:
            if hasattr(record, name):
                log_data[name] = getattr(record, name)

        return json.dumps(log_data, default=str)


class PlainFormatter(logging.Formatter):
    """Plain text formatter; prefixes the experiment id and short config hash when known."""

    def __init__(self):
        fmt = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        super().__init__(fmt=fmt, datefmt="%Y-%m-%d %H:%M:%S")

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        experiment_id = getattr(record, "experiment_id", None)
        if experiment_id is None:
            return line
        config_hash = str(getattr(record, "config_hash", "") or "")[:8]
        tag = f"{experiment_id}@{config_hash}" if config_hash else str(experiment_id)
        return f"[{tag}] {line}"


def setup_logging(
    config: Optional[LoggingConfig] = None, context: Optional[Dict[str, Any]] = None
) -> None:
    """Setup logging configuration.

    Args:
        config: Logging configuration
        context: Run identifiers stamped on every record (experiment_id,
            seed, config_hash, command)
    """
    if config is None:
        from rangelab.config import get_config

        config = get_config().logging

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, config.level))

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    if config.output == "stdout":
        handler: logging.Handler = logging.StreamHandler(sys.stdout)
    elif config.output == "stderr":
        handler = logging.StreamHandler(sys.stderr)
    else:
        handler = logging.FileHandler(config.output)

    if config.format == "json":
        handler.setFormatter(JSONFormatter())
    else:
        handler.setFormatter(PlainFormatter())
    if context:
        handler.addFilter(RunContextFilter(context))

    root_logger.addHandler(handler)

    logging.getLogger("ray").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Get logger instance.

    Args:
        name: Logger name

    Returns:
        Logger instance
    """
    return logging.getLogger(name)
