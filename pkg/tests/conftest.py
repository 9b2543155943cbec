import sys

import numpy as np
import pytest

from mininfo import ReactivePolicy, robot, two_state
from mininfo.core import _make_model


@pytest.fixture
def m2():
    return two_state()


@pytest.fixture
def bot():
    return robot()


def random_model(rng, S, O, A, alpha=1.0):
    """Dirichlet-random stationary model with normal costs."""
    return _make_model(
        tuple(f"s{i}" for i in range(S)),
        tuple(f"o{i}" for i in range(O)),
        tuple(f"a{i}" for i in range(A)),
        rng.dirichlet(np.full(S, alpha), size=(S, A)),
        rng.dirichlet(np.full(O, alpha), size=S),
        rng.normal(size=(S, A)),
    )


def random_policy(rng, O, A, period=1):
    return ReactivePolicy(rng.dirichlet(np.ones(A), size=(period, O)))


def alternating():
    """M2 policy: right at phase 0, left at phase 1."""
    return ReactivePolicy(np.array([[[0.0, 1.0]], [[1.0, 0.0]]]))


def always_left():
    return ReactivePolicy(np.array([[[1.0, 0.0]]]))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
