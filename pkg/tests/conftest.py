"""Pytest configuration and fixtures."""

import tempfile
from pathlib import Path

import pytest

from rangelab.lattice import kernel_make
from rangelab.rng import replica_rng


@pytest.fixture
def temp_dir():
    """Create a temporary directory."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def mock_config_data():
    """Provide mock configuration data."""
    return {
        "experiment": {
            "seed": 11,
            "experiment_id": "test",
            "replicas": 50,
        },
        "lattice": {
            "d": 2,
            "L": 1,
        },
        "logging": {
            "level": "INFO",
        },
    }


@pytest.fixture
def nn1():
    """Nearest-neighbor kernel on Z."""
    return kernel_make("nearest-neighbor", 1, 1)


@pytest.fixture
def nn2():
    """Nearest-neighbor kernel on Z^2."""
    return kernel_make("nearest-neighbor", 2, 1)


@pytest.fixture
def nn3():
    """Nearest-neighbor kernel on Z^3."""
    return kernel_make("nearest-neighbor", 3, 1)


@pytest.fixture
def rng():
    """Fixed-seed generator."""
    return replica_rng(1234, "tests", 0)
