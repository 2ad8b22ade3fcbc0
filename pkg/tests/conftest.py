from pathlib import Path

import numpy as np
import pytest

from mmdiv.model import DividendClock, JumpLaw, ModelSpec, Regime

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

Q = 0.1
BETA = 1.5
# Root of beta * exp(-2 q b / |mu| * |mu|) = 1 for the drift-down model:
# the uncontrolled surplus falls from b to 0 in time 2b, so beta e^{-0.2 b}=1.
B_STAR = 5.0 * np.log(1.5)          # 2.027326...
R_DET = float(np.exp(-Q))           # epoch discount, unit deterministic clock
V_UP_0 = R_DET / (1.0 - R_DET)      # 9.508332: geometric series of unit payouts
V_UP_1 = R_DET * (2.0 + V_UP_0)     # 10.413217


def drift_spec(mu: float) -> ModelSpec:
    return ModelSpec(("base",), [[0.0]], (Regime(mu),), [Q], BETA)


@pytest.fixture(scope="session")
def spec_up():
    return drift_spec(1.0)


@pytest.fixture(scope="session")
def spec_down():
    return drift_spec(-0.5)


@pytest.fixture(scope="session")
def spec_zero():
    return drift_spec(0.0)


@pytest.fixture(scope="session")
def unit_clock():
    return DividendClock("deterministic", delta=1.0)


def two_state_spec() -> ModelSpec:
    return ModelSpec(
        ("calm", "stressed"),
        [[-0.5, 0.5], [0.5, -0.5]],
        (Regime(1.0, 0.5),
         Regime(-0.5, 1.0, 0.2, JumpLaw("exp_down", mean=1.0))),
        [0.08, 0.12], 1.3)


@pytest.fixture(scope="session")
def spec_two():
    return two_state_spec()


@pytest.fixture(scope="session")
def exp_clock():
    return DividendClock("exponential", rate=2.0)
