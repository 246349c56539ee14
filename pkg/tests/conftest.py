import numpy as np
import pytest

from gigamae.graph import Graph, planted_partition_graph


@pytest.fixture
def path3():
    return Graph.from_edges(np.arange(6, dtype=float).reshape(3, 2), [(0, 1), (1, 2)], [0, 1, 0])


@pytest.fixture
def toy20():
    """20-node graph: two communities of ten bridged by one edge."""
    rng = np.random.default_rng(7)
    edges = []
    for base in (0, 10):
        for i in range(10):
            edges.append((base + i, base + (i + 1) % 10))
            edges.append((base + i, base + (i + 3) % 10))
    edges.append((0, 10))
    labels = np.r_[np.zeros(10, int), np.ones(10, int)]
    feats = rng.normal(size=(20, 6)) + labels[:, None] * 1.5
    return Graph.from_edges(feats, edges, labels)


@pytest.fixture(scope="session")
def planted():
    return planted_partition_graph(num_nodes=240, num_classes=4, feature_dim=60, avg_degree=5, seed=1)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> str:
    """Remember one acceptance result; all of them are printed in the summary."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
