import numpy as np
import pytest

from mtdselect import experiment1_model, experiment2_model, simulate


@pytest.fixture(scope="session")
def exp1():
    return experiment1_model()


@pytest.fixture(scope="session")
def exp2():
    return experiment2_model()


@pytest.fixture(scope="session")
def exp1_seq_100k(exp1):
    return simulate(exp1, 100_000, np.random.SeedSequence([8, 1]))
