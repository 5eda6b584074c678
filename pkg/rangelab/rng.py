"""Counter-based random streams for reproducible replicas.

Every replica draws from a Philox generator whose key is derived from
(master seed, experiment id, replica index, stream id). A replica's
numbers therefore depend only on its own coordinates, never on which
worker ran it or in what order.
"""

import hashlib
import zlib

import numpy as np

# Stream ids
MAIN_STREAM = 0
AUX_STREAM = 1


def experiment_key(experiment_id: str) -> int:
    """Map an experiment id to a stable 32-bit integer.

    Args:
        experiment_id: Experiment name

    Returns:
        CRC32 of the id
    """
    return zlib.crc32(experiment_id.encode("utf-8"))


def replica_rng(
    seed: int, experiment_id: str, replica: int, stream: int = MAIN_STREAM
) -> np.random.Generator:
    """Create the generator for one replica stream.

    Args:
        seed: Master seed
        experiment_id: Experiment name
        replica: Replica index
        stream: Stream id within the replica

    Returns:
        numpy Generator backed by Philox
    """
    seq = np.random.SeedSequence([seed, experiment_key(experiment_id), replica, stream])
    key = seq.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def stream_digest(rng: np.random.Generator, draws: int = 4) -> str:
    """Short fingerprint of a fresh generator, for manifests and tests.

    Args:
        rng: Generator (consumed)
        draws: Number of 64-bit draws hashed

    Returns:
        Hex digest
    """
    values = rng.integers(0, 2**63 - 1, size=draws, dtype=np.int64)
    return hashlib.sha256(values.tobytes()).hexdigest()[:16]
