import numpy as np
import pytest

from nrmab.cli import SMALL_SUITE, data_path
from nrmab.graph_model import ArmDynamics, Edge, Instance

# acceptance results collected here and echoed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])


def bundled(name: str) -> Instance:
    return Instance.load(data_path(name + ".json"))


@pytest.fixture(scope="session")
def small_suite():
    return {name: bundled(name) for name in SMALL_SUITE}


def make_instance(n, edges, k=1, gamma=0.9, rewards=None, dyn=(0.1, 0.8, 0.7, 0.95)):
    return Instance(
        n=n,
        edges=tuple(Edge(u, v, w) for u, v, w in edges),
        rewards=tuple(rewards or [1.0] * n),
        dynamics=tuple(ArmDynamics(*dyn) for _ in range(n)),
        budget=k,
        gamma=gamma,
    )


@pytest.fixture
def path3():
    return make_instance(3, [(0, 1, 0.5), (1, 2, 0.4)], k=1)


@pytest.fixture
def tri4():
    return make_instance(4, [(0, 1, 0.3), (1, 2, 0.6), (0, 2, 0.2), (2, 3, 0.5)], k=2,
                         rewards=[1.0, 2.0, 0.5, 1.5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
