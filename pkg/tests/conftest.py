"""
Pytest configuration and shared fixtures
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.models.experiment import ExperimentConfig  # noqa: E402
from app.services import dataset_service  # noqa: E402
from app.utils.run_logger import RunLogger  # noqa: E402

TINY_SEED = 7
TINY_SCALE = "1/676"  # 26 words, 52 images


@pytest.fixture
def rng():
    """Seeded generator for synthetic test data"""
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_dataset():
    """26-word corpus shared across tests (images are read-only)"""
    return dataset_service.generate_dataset(TINY_SEED, TINY_SCALE)


@pytest.fixture
def memory_logger():
    """Run logger that keeps events in memory only"""
    return RunLogger()


@pytest.fixture
def tiny_config(tmp_path):
    """Small experiment that trains the cheap classifiers on the tiny corpus"""
    return ExperimentConfig(
        global_seed=TINY_SEED,
        scale=TINY_SCALE,
        m_list=[20, 10],
        train_per_label=16,
        test_per_label=10,
        classifiers=["ld", "lr"],
        folds=3,
        audit_m=[20, 10],
        audit_count=2,
        output_dir=str(tmp_path / "run"),
    )
