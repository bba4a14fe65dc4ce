import numpy as np
import pytest

from graphcal.data import Dataset
from graphcal.graph import build_graph
from graphcal.trainer import NodeMask


def random_dataset(seed: int, n: int = 40, k: int = 3, p_edge: float = 0.1, scale: float = 2.0) -> Dataset:
    """Small Erdos-Renyi graph, Gaussian logits and a disjoint train/val/test mask."""
    r = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    pick = r.random(iu[0].size) < p_edge
    g = build_graph(np.stack([iu[0][pick], iu[1][pick]], axis=1), n)
    logits = scale * r.standard_normal((n, k))
    labels = r.integers(0, k, n)
    perm = r.permutation(n)
    a, b = max(n // 4, 1), max(n // 2, 2)
    return Dataset(g, logits, labels, NodeMask(perm[:a], perm[a:b], perm[b:]))


@pytest.fixture
def small_dataset():
    return random_dataset(0)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
