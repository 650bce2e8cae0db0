import hypothesis
import numpy as np
import pytest

from bilevel_attack.data import generate_dataset
from bilevel_attack.experiment import train_roster

hypothesis.settings.register_profile(
    "default", max_examples=25, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def reference_setup():
    """Reference dataset and trained roster (seed 0), shared across tests."""
    ds = generate_dataset(classes=8, dim=64, per_class=60, margin=0.32, seed=0)
    roster = train_roster(ds, seed=0)
    models = {mid: r.model for mid, r in roster.items()}
    return ds, models


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(1234))
