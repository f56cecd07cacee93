import numpy as np
import pytest
from scipy.spatial.transform import Rotation

ACCEPTANCE_LINES: list[str] = []


def random_rotation(rng):
    return Rotation.random(random_state=rng).as_matrix()


def random_spd2(rng, cond_max=50.0):
    """Random 2x2 SPD matrix with condition number at most ``cond_max``."""
    t = rng.uniform(0, np.pi)
    Q = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    a = rng.uniform(0.2, 2.0)
    r = np.exp(rng.uniform(0, np.log(cond_max)))
    return Q @ np.diag([a, a * r]) @ Q.T


def random_block_A(rng, cond_max=50.0):
    from neplate.metric import sqrt_metric

    A = np.eye(3)
    A[:2, :2] = sqrt_metric(random_spd2(rng, cond_max))
    return A


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def record_criterion():
    def record(number, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
