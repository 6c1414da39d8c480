import numpy as np
import pytest

from gradguide.bench import synthetic_setup
from gradguide.nn import Layer, MlpModel, init_mlp


def identity_model(k=2):
    return MlpModel((Layer(np.eye(k), np.zeros(k), "identity"),))


def random_model(sizes, seed):
    """Random MLP with nonzero biases so relu kinks are not all at the origin."""
    rng = np.random.default_rng(seed)
    base = init_mlp(sizes, int(rng.integers(2**31)))
    return MlpModel(tuple(Layer(l.weights, rng.normal(0, 0.3, l.out_dim), l.activation)
                          for l in base.layers))


@pytest.fixture
def ident2():
    return identity_model(2)


@pytest.fixture(scope="session")
def synthetic():
    """Seeded synthetic train/test splits and a trained 2-16-16-2 classifier."""
    return synthetic_setup(1)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
