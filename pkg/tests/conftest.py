import os

import hypothesis
import numpy as np
import pytest

from preprocess.data_types import ChainState, UnitRecord
from preprocess.read_unit_data import read_areas_csv, read_units_csv
from preprocess.validate_dataset import validate_dataset

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the long Gibbs-chain tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def data_path(name):
    return os.path.join(DATA_DIR, name)


def load_corn(units="corn_units_full.csv"):
    records, names = read_units_csv(data_path(units))
    frame = read_areas_csv(data_path("corn_areas.csv"))
    return validate_dataset(records, frame, covariate_names=names)


def synthetic_records(m=6, n_i=5, beta=(10.0, 0.5), sigma_v=1.0, sigma_e=1.0, seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for a in range(m):
        v = rng.normal(0.0, sigma_v)
        for _ in range(n_i):
            x = rng.uniform(2.0, 4.0)
            y = beta[0] + beta[1] * x + v + rng.normal(0.0, sigma_e)
            records.append(UnitRecord(area_id=f"a{a}", y=float(y), x=(1.0, float(x))))
    return records


def synthetic_frame(m=6, N=50):
    from preprocess.data_types import AreaFrame
    xbar = np.column_stack([np.ones(m), np.linspace(2.5, 3.5, m)])
    return AreaFrame(area_ids=tuple(f"a{a}" for a in range(m)), N=np.full(m, N), xbar=xbar)


@pytest.fixture
def corn():
    return load_corn()


@pytest.fixture
def corn_reduced():
    return load_corn("corn_units_reduced.csv")


@pytest.fixture
def small_data():
    return validate_dataset(synthetic_records(), synthetic_frame(),
                            covariate_names=["intercept", "x"])


def random_state(dataset, rng, mixture=True, p_low=0.55):
    """A valid Gibbs state drawn at random for ``dataset``."""
    return ChainState(beta=rng.normal(0.0, 1.0, dataset.q),
                      v=rng.normal(0.0, 1.0, dataset.m),
                      z=(rng.random(dataset.n) < 0.7).astype(np.int8) if mixture
                      else np.ones(dataset.n, dtype=np.int8),
                      sigma1_sq=float(rng.uniform(0.5, 3.0)),
                      eta=float(rng.uniform(1.5, 10.0)) if mixture else 1.0,
                      sigma_v_sq=float(rng.uniform(0.5, 3.0)),
                      p_e=float(rng.uniform(p_low, 0.95)) if mixture else float("nan"))
