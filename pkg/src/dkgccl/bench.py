"""Timing harness: naive vs shared-aggregate loss, propagated vs distilled inference."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasets import sbm_by_degree
from .distill import final_representation, init_mlp
from .graph import normalized_adjacency
from .loss import LossConfig, loss_fast, loss_oracle
from .partition import coarsen, from_assignment

NAIVE_CAP = 20_000


@dataclass
class BenchReport:
    n_grid: list[int]
    d: int
    m: int
    mean_degree: float
    k_hop: int
    loss_naive_s: list[float | None] = field(default_factory=list)
    loss_fast_s: list[float] = field(default_factory=list)
    infer_gnn_s: list[float] = field(default_factory=list)
    infer_mlp_s: list[float] = field(default_factory=list)
    observed_degree: list[float] = field(default_factory=list)
    peak_bytes_naive: list[int | None] = field(default_factory=list)
    peak_bytes_fast: list[int] = field(default_factory=list)

    def ratios(self, key: str) -> list[float | None]:
        t = getattr(self, key)
        out = []
        for a, b in zip(t[:-1], t[1:]):
            out.append(None if a is None or b is None else b / a)
        return out

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("loss_naive_s", "loss_fast_s", "infer_gnn_s", "infer_mlp_s"):
            out[key.replace("_s", "_ratio")] = self.ratios(key)
        return out


def best_time(fn, repeats: int = 5) -> float:
    """Minimum wall time over ``repeats`` calls (after one warm-up)."""
    fn()
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(
    n_grid,
    d: int = 64,
    m: int = 64,
    mean_degree: float = 12.0,
    k_hop: int = 3,
    loss_cfg: LossConfig | None = None,
    naive_cap: int = NAIVE_CAP,
    timings=("loss", "infer"),
    repeats: int = 5,
    seed: int = 0,
) -> BenchReport:
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid[:-1], n_grid[1:])):
        raise ValueError("n_grid must be strictly ascending")
    loss_cfg = loss_cfg or LossConfig()
    report = BenchReport(n_grid, d, m, mean_degree, k_hop)
    rng = np.random.default_rng(seed)
    for n in n_grid:
        g, labels = sbm_by_degree(n, m, mean_degree, feature_dim=d, seed=seed)
        report.observed_degree.append(2.0 * g.num_edges / n)
        # planted blocks serve as the partition so partitioner cost stays out of the timings
        part = from_assignment(labels.labels)
        a_p = coarsen(g, part)
        v = rng.normal(size=(n, d))
        c = np.asarray(part.matrix().T @ rng.normal(size=(n, d)))
        if "loss" in timings:
            report.loss_fast_s.append(best_time(lambda: loss_fast(v, c, part, a_p, loss_cfg), repeats))
            report.peak_bytes_fast.append(8 * (3 * n * d + m * m + m * d))
            if n <= naive_cap:
                report.loss_naive_s.append(
                    best_time(lambda: loss_oracle(v, c, part, a_p, loss_cfg, max_n=naive_cap), 1)
                )
                report.peak_bytes_naive.append(8 * (n * d + 6 * 512 * n))
            else:
                report.loss_naive_s.append(None)
                report.peak_bytes_naive.append(None)
        if "infer" in timings:
            w_g = rng.normal(size=(d, d)) / np.sqrt(d)
            mlp = init_mlp(d, seed=seed)
            a_norm = normalized_adjacency(g)
            report.infer_gnn_s.append(
                best_time(lambda: final_representation(g, w_g, None, k=k_hop, a_norm=a_norm), repeats)
            )
            report.infer_mlp_s.append(best_time(lambda: final_representation(g, w_g, mlp), repeats))
    return report
