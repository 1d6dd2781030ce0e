import sys
from pathlib import Path

import pytest

from lstm_compress import dataset
from lstm_compress.prepared import prepare, write_prepared

ROOT = Path(__file__).resolve().parents[1]
SCRIPTS = ROOT / "scripts"
sys.path.insert(0, str(SCRIPTS))


@pytest.fixture(scope="session")
def small_series():
    spec = dataset.SyntheticSpec(n_days=200, noise_std=2.0, seed=3)
    return dataset.generate_synthetic_dataset(spec, n_stores=2, n_items=1)


@pytest.fixture(scope="session")
def small_data(small_series):
    return prepare(small_series)


@pytest.fixture(scope="session")
def prepared_dir(small_data, tmp_path_factory):
    return write_prepared(tmp_path_factory.mktemp("prep"), small_data)
