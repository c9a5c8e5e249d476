import numpy as np
import pytest

from matbiorth import kernels as K


def two_node():
    """p = 1 bivariate measure on two x nodes and two y nodes."""
    return K.discrete([-0.5, 0.7], [0.3, -0.4], [[1.0, 0.4], [0.2, 0.8]])


def random_discrete(p, m, seed, complex_weights=False):
    rng = np.random.default_rng(seed)
    xs, ys = rng.uniform(-1, 1, m), rng.uniform(-1, 1, m)
    w = rng.normal(size=(m, m, p, p))
    if complex_weights:
        w = w + 1j * rng.normal(size=(m, m, p, p))
    return K.discrete(xs, ys, w)


def random_diagonal(p, m, seed):
    """Hankel-type discrete kernel with well-conditioned matrix weights."""
    rng = np.random.default_rng(seed)
    nodes = np.linspace(-1, 1, m)
    w = np.array([np.eye(p) + 0.3 * rng.normal(size=(p, p)) for _ in nodes])
    return K.diagonal(nodes, w)


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
