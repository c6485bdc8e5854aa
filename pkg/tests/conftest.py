from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dkgccl.datasets import sbm_graph
from dkgccl.graph import SparseGraph
from dkgccl.partition import coarsen, from_assignment

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "sbm200"

ACCEPTANCE_LINES: list[str] = []


def random_graph(rng, n: int, p: float = 0.3, h: int = 5) -> SparseGraph:
    iu = np.triu_indices(n, 1)
    keep = rng.random(iu[0].size) < p
    edges = np.stack([iu[0][keep], iu[1][keep]], axis=1)
    return SparseGraph.from_edges(n, edges, rng.normal(size=(n, h)))


def random_assignment(rng, n: int, m: int) -> np.ndarray:
    """Hard assignment with every one of the m communities non-empty."""
    a = np.concatenate([np.arange(m), rng.integers(0, m, size=n - m)])
    return rng.permutation(a)


def loss_instance(seed: int, n: int = 20, m: int = 3, d_g: int = 4, d_p: int = 4, h: int = 6,
                  normalization: str = "symmetric", weights: str = "mean", p_edge: float = 0.3):
    """Random graph, partition, coarsened graph and raw features for loss tests."""
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p_edge, h)
    part = from_assignment(random_assignment(rng, n, m), weights)
    a_p = coarsen(g, part, normalization)
    return g, part, a_p, rng


@pytest.fixture
def sbm_small():
    return sbm_graph([25, 25, 25, 25], 0.3, 0.02, feature_dim=8, seed=3)


@pytest.fixture
def fixture_config():
    return FIXTURE_DIR / "config.json"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def central_difference(f, w: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar f() w.r.t. every entry of w (perturbed in place)."""
    grad = np.zeros_like(w)
    it = np.nditer(w, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = w[idx]
        w[idx] = old + step
        fp = f()
        w[idx] = old - step
        fm = f()
        w[idx] = old
        grad[idx] = (fp - fm) / (2 * step)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| scaled by the largest gradient magnitude (0 when both vanish)."""
    scale = max(np.abs(numeric).max(), np.abs(analytic).max())
    if scale == 0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)
