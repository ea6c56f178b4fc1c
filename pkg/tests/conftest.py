import numpy as np
import pytest

from twoscale import (
    Policy,
    SchedulePair,
    StepSchedule,
    chain3,
    chain3_features,
    random_features,
    random_mdp,
    solve_oracle,
)
from twoscale.tdc import TdcProblem

# Exact value function of chain3's always-go policy: V(2) = 1/(1 - gamma^3),
# V(1) = gamma V(2), V(0) = gamma^2 V(2), from the reward-1 cycle solve.
CHAIN3_V2 = 1.0 / (1.0 - 0.9**3)
CHAIN3_VALUES = np.array([0.81 * CHAIN3_V2, 0.9 * CHAIN3_V2, CHAIN3_V2])


@pytest.fixture(scope="session")
def chain3_instance():
    mdp, pi, pi_b = chain3()
    return mdp, pi, pi_b, chain3_features()


@pytest.fixture(scope="session")
def chain3_oracle(chain3_instance):
    return solve_oracle(*chain3_instance)


@pytest.fixture(scope="session")
def chain3_problem(chain3_instance):
    return TdcProblem(*chain3_instance)


@pytest.fixture(scope="session")
def random5_instance():
    mdp = random_mdp(5, 2, sparsity=0.0, seed=7)
    pi = Policy(np.tile([0.2, 0.8], (5, 1)))
    pi_b = Policy.uniform(5, 2)
    return mdp, pi, pi_b, random_features(5, 3, seed=11)


@pytest.fixture(scope="session")
def random5_oracle(random5_instance):
    return solve_oracle(*random5_instance)


@pytest.fixture(scope="session")
def random5_problem(random5_instance):
    return TdcProblem(*random5_instance)


@pytest.fixture
def default_pair():
    return SchedulePair(
        StepSchedule.from_initial(0.5, 1e4, 1.0),
        StepSchedule.from_initial(0.5, 1e4, 0.6),
    )
