"""Replica farm: maps a per-replica task over replica indices, serially or on Ray."""

import time
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import ray
from tqdm import tqdm

from rangelab.logging import get_logger
from rangelab.metrics import MetricsCollector
from rangelab.rng import MAIN_STREAM, replica_rng
from rangelab.types import ReplicaRecord

logger = get_logger(__name__)

# A task maps (replica index, generator) to a payload dict. The optional
# keys "truncated" (bool) and "events" (int) feed the status and metrics.
ReplicaTask = Callable[[int, np.random.Generator], Dict[str, Any]]


def run_replica(
    task: ReplicaTask, seed: int, experiment_id: str, replica: int, stream: int = MAIN_STREAM
) -> ReplicaRecord:
    """Run one replica on its own counter-based stream.

    Args:
        task: Per-replica task
        seed: Master seed
        experiment_id: Experiment name
        replica: Replica index
        stream: Stream id

    Returns:
        ReplicaRecord with timing and status
    """
    start_time = time.time()
    payload = dict(task(replica, replica_rng(seed, experiment_id, replica, stream)))
    truncated = bool(payload.pop("truncated", False))
    events = int(payload.pop("events", 0))
    return ReplicaRecord(
        replica=replica,
        status="truncated" if truncated else "ok",
        duration_s=time.time() - start_time,
        events=events,
        payload=payload,
    )


def run_chunk(
    task: ReplicaTask, seed: int, experiment_id: str, replicas: Sequence[int], stream: int
) -> List[ReplicaRecord]:
    """Run a contiguous chunk of replicas in one process."""
    return [run_replica(task, seed, experiment_id, r, stream) for r in replicas]


_remote_chunk = ray.remote(run_chunk)


class ReplicaFarm:
    """Run independent replicas and merge their records in replica order."""

    def __init__(
        self,
        model: str,
        workers: int = 1,
        experiment_id: str = "default",
        seed: int = 0,
        chunk_size: Optional[int] = None,
        progress: bool = True,
    ):
        """Initialize farm.

        Args:
            model: Model name used for metrics labels
            workers: Number of parallel workers (1 = in-process)
            experiment_id: Experiment name keying the random streams
            seed: Master seed
            chunk_size: Replicas per Ray task (None = spread evenly, 4 chunks per worker)
            progress: Show a tqdm progress bar
        """
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.model = model
        self.workers = workers
        self.experiment_id = experiment_id
        self.seed = seed
        self.chunk_size = chunk_size
        self.progress = progress
        self.metrics = MetricsCollector(model)
        self._submitted = 0
        self._completed = 0
        self._failed = 0
        self._truncated = 0

    def map(
        self, task: ReplicaTask, replicas: int, stream: int = MAIN_STREAM, desc: str = "Replicas"
    ) -> List[ReplicaRecord]:
        """Run ``task`` for replica indices 0..replicas-1.

        Args:
            task: Picklable per-replica task
            replicas: Number of replicas
            stream: Stream id, distinct per independent replica set
            desc: Progress bar label

        Returns:
            Records sorted by replica index

        Raises:
            Exception: The first task failure, after it is logged and counted
        """
        logger.info(
            f"Running {replicas} {self.model} replicas on {self.workers} workers",
            extra={"model": self.model, "replicas": replicas, "seed": self.seed},
        )
        self._submitted += replicas
        start_time = time.time()
        if self.workers == 1:
            records = self._map_serial(task, replicas, stream, desc)
        else:
            records = self._map_ray(task, replicas, stream, desc)
        records.sort(key=lambda r: r.replica)
        for record in records:
            self._completed += 1
            if record.status == "truncated":
                self._truncated += 1
            self.metrics.record_replica(record.status, record.duration_s, record.events)
        duration = time.time() - start_time
        logger.info(
            f"Finished {len(records)} {self.model} replicas in {duration:.2f}s "
            f"({self._truncated} truncated so far)",
            extra={"model": self.model, "duration_ms": duration * 1000},
        )
        return records

    def _map_serial(
        self, task: ReplicaTask, replicas: int, stream: int, desc: str
    ) -> List[ReplicaRecord]:
        records = []
        for replica in tqdm(range(replicas), desc=desc, disable=not self.progress):
            try:
                records.append(run_replica(task, self.seed, self.experiment_id, replica, stream))
            except Exception as e:
                self._record_failure(e, replica)
                raise
        return records

    def _chunks(self, replicas: int) -> List[range]:
        size = self.chunk_size or max(1, -(-replicas // (self.workers * 4)))
        return [range(i, min(i + size, replicas)) for i in range(0, replicas, size)]

    def _map_ray(
        self, task: ReplicaTask, replicas: int, stream: int, desc: str
    ) -> List[ReplicaRecord]:
        if not ray.is_initialized():
            logger.info(f"Initializing Ray with {self.workers} CPUs")
            ray.init(num_cpus=self.workers, ignore_reinit_error=True, log_to_driver=False)
        records: List[ReplicaRecord] = []
        task_ref = ray.put(task)
        futures = [
            _remote_chunk.remote(task_ref, self.seed, self.experiment_id, list(chunk), stream)
            for chunk in self._chunks(replicas)
        ]
        with tqdm(total=replicas, desc=desc, disable=not self.progress) as bar:
            while futures:
                ready, futures = ray.wait(futures, num_returns=1)
                try:
                    chunk_records = ray.get(ready[0])
                except Exception as e:
                    self._record_failure(e, None)
                    for future in futures:
                        ray.cancel(future)
                    raise
                records.extend(chunk_records)
                bar.update(len(chunk_records))
        return records

    def _record_failure(self, error: Exception, replica: Optional[int]) -> None:
        self._failed += 1
        self.metrics.record_error("replica_error")
        logger.error(
            f"Replica {replica} of {self.model} failed: {error}",
            exc_info=True,
            extra={"model": self.model, "replica": replica, "seed": self.seed},
        )

    def get_metrics(self) -> Dict[str, Any]:
        """Get farm metrics.

        Returns:
            Dictionary of metrics
        """
        return {
            "model": self.model,
            "workers": self.workers,
            "submitted": self._submitted,
            "completed": self._completed,
            "failed": self._failed,
            "truncated": self._truncated,
            "truncation_rate": self._truncated / self._completed if self._completed else 0.0,
        }
