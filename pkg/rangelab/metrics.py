"""Metrics collection and export."""

from pathlib import Path

from prometheus_client import Counter, Histogram, generate_latest

# Replica metrics
replica_counter = Counter(
    "rangelab_replicas_total",
    "Total number of simulated replicas",
    ["model", "status"],
)

replica_duration = Histogram(
    "rangelab_replica_duration_seconds",
    "Wall time per replica in seconds",
    ["model"],
    buckets=(0.0001, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 30.0),
)

replica_events = Histogram(
    "rangelab_replica_events",
    "Number of events per realization",
    ["model"],
    buckets=(1, 4, 16, 64, 256, 1024, 4096, 16384, 65536, 262144),
)

truncation_counter = Counter(
    "rangelab_truncations_total",
    "Realizations stopped by a site or particle cap",
    ["model"],
)

# Guard metrics
guard_refusals = Counter(
    "rangelab_guard_refusals_total",
    "Operations refused by an instance-size guard",
    ["operation"],
)

# Error metrics
error_counter = Counter(
    "rangelab_errors_total",
    "Total number of errors",
    ["model", "error_type"],
)


class MetricsCollector:
    """Metrics collector for one model's replica runs."""

    def __init__(self, model_name: str):
        """Initialize metrics collector.

        Args:
            model_name: Name of the model
        """
        self.model_name = model_name

    def record_replica(self, status: str, duration: float, events: int = 0) -> None:
        """Record replica metrics.

        Args:
            status: Replica status (ok, truncated, error)
            duration: Replica wall time in seconds
            events: Number of events in the realization
        """
        replica_counter.labels(model=self.model_name, status=status).inc()
        replica_duration.labels(model=self.model_name).observe(duration)
        replica_events.labels(model=self.model_name).observe(events)
        if status == "truncated":
            truncation_counter.labels(model=self.model_name).inc()

    def record_error(self, error_type: str) -> None:
        """Record error.

        Args:
            error_type: Type of error
        """
        error_counter.labels(model=self.model_name, error_type=error_type).inc()


def record_guard_refusal(operation: str) -> None:
    """Record a guard refusal.

    Args:
        operation: Refused operation name
    """
    guard_refusals.labels(operation=operation).inc()


def get_metrics() -> bytes:
    """Get Prometheus metrics in text format.

    Returns:
        Metrics in Prometheus text format
    """
    return generate_latest()


def write_metrics(output_dir: Path) -> Path:
    """Write the current metrics snapshot next to run artifacts.

    Args:
        output_dir: Run output directory

    Returns:
        Path of the written file
    """
    path = Path(output_dir) / "metrics.prom"
    path.write_bytes(get_metrics())
    return path
