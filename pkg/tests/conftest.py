import json
from pathlib import Path

import numpy as np
import pytest

from ballbot import RiderBallbotParams, balance_gains

ORACLE_DIR = Path(__file__).parent / "oracles"


@pytest.fixture(scope="session")
def params():
    return RiderBallbotParams.default_rider()


@pytest.fixture(scope="session")
def gains(params):
    return balance_gains(params)


@pytest.fixture(scope="session")
def eom_oracle():
    data = json.loads((ORACLE_DIR / "eom_oracle.json").read_text())
    return RiderBallbotParams(**data["params"]), data["cases"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_states(rng, n, angle=1.0, rate=3.0, spin=15.0):
    """Random planar states: two lean angles, ball angle, then rates."""
    return np.column_stack([
        rng.uniform(-angle, angle, (n, 2)),
        rng.uniform(-10.0, 10.0, n),
        rng.uniform(-rate, rate, (n, 2)),
        rng.uniform(-spin, spin, n),
    ])
