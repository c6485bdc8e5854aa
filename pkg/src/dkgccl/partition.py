"""Community partitions and the coarsened community graph.

The built-in partitioner is a small multilevel k-way scheme in the Metis
mould: heavy-edge matching until the graph has at most ``max(2m, 64)``
supernodes, greedy graph growing for the initial k-way split, then boundary
refinement on every level while projecting back. External partitions (Metis,
Louvain, ...) can be read with :func:`load_partition`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError, ParseError
from .graph import SparseGraph

WEIGHT_MODES = ("mean", "unit")
NORMALIZATIONS = ("raw", "row", "symmetric")


@dataclass(frozen=True)
class Partition:
    assignment: np.ndarray
    m: int
    weights: np.ndarray
    mode: str = "mean"

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        a.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "weights", w)
        if a.size and (a.min() < 0 or a.max() >= self.m):
            raise InputError("community id out of range")
        if np.any(np.bincount(a, minlength=self.m) == 0):
            raise InputError("partition has an empty community")
        if w.shape != a.shape or np.any(w <= 0):
            raise InputError("aggregation weights must be positive, one per node")

    @property
    def n(self) -> int:
        return self.assignment.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.m)

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == j)

    def matrix(self, unit: bool = False) -> sp.csr_matrix:
        """The n x m assignment matrix P (weighted unless ``unit``)."""
        data = np.ones(self.n) if unit else self.weights
        return sp.csr_matrix(
            (data, (np.arange(self.n), self.assignment)), shape=(self.n, self.m)
        )

    def community_weight_sums(self) -> np.ndarray:
        return np.bincount(self.assignment, weights=self.weights, minlength=self.m)


def from_assignment(assignment, mode: str = "mean") -> Partition:
    """Compact arbitrary community ids to [0, m) (sorted id order) and attach weights."""
    ids = np.asarray(assignment, dtype=np.int64)
    _, compact = np.unique(ids, return_inverse=True)
    m = int(compact.max()) + 1 if compact.size else 0
    return assignment_weights(Partition(compact, m, np.ones(compact.size), "unit"), mode)


def assignment_weights(p: Partition, mode: str = "mean") -> Partition:
    if mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {mode!r}")
    if mode == "mean":
        w = 1.0 / p.sizes[p.assignment]
    else:
        w = np.ones(p.n)
    return Partition(p.assignment, p.m, w, mode)


def load_partition(path, n: int, mode: str = "mean") -> Partition:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) != n:
        raise InputError(f"{path}: expected {n} community ids, found {len(lines)}")
    try:
        ids = [int(x) for x in lines]
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return from_assignment(ids, mode)


def save_partition(p: Partition, path) -> None:
    Path(path).write_text("".join(f"{c}\n" for c in p.assignment), encoding="utf-8")


def edge_cut(g: SparseGraph, assignment) -> int:
    a = np.asarray(assignment)
    e = g.edges()
    return int(np.count_nonzero(a[e[:, 0]] != a[e[:, 1]]))


def partition_report(g: SparseGraph, p: Partition) -> dict:
    return {"m": p.m, "edge_cut": edge_cut(g, p.assignment), "sizes": p.sizes.tolist()}


def partition_rate_to_m(rate: float, n: int) -> int:
    return max(1, int(round(rate * n)))


# ---------------------------------------------------------------------------
# coarsened graph


@dataclass(frozen=True)
class CoarsenedGraph:
    m: int
    matrix: np.ndarray
    normalization: str = "raw"


def coarsen(g: SparseGraph, p: Partition, normalization: str = "symmetric") -> CoarsenedGraph:
    """A^P = P^T A P with unit P, optionally row- or symmetrically normalised."""
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    pm = p.matrix(unit=True)
    raw = np.asarray((pm.T @ g.adjacency @ pm).todense(), dtype=np.float64)
    if normalization == "raw":
        mat = raw
    else:
        deg = raw.sum(axis=1)
        safe = np.where(deg > 0, deg, 1.0)
        if normalization == "row":
            mat = raw / safe[:, None]
        else:
            inv = np.where(deg > 0, 1.0 / np.sqrt(safe), 0.0)
            mat = inv[:, None] * raw * inv[None, :]
    return CoarsenedGraph(p.m, mat, normalization)


# ---------------------------------------------------------------------------
# multilevel k-way partitioner


def _weighted_adjacency(g: SparseGraph) -> sp.csr_matrix:
    a = g.adjacency.copy()
    a.sort_indices()
    return a


def _match_heavy_edges(adj: sp.csr_matrix, vwgt: np.ndarray, max_vwgt: float, rng):
    n = adj.shape[0]
    indptr, indices, data = adj.indptr, adj.indices, adj.data
    match = np.full(n, -1, dtype=np.int64)
    for u in rng.permutation(n):
        if match[u] != -1:
            continue
        best, best_w = -1, 0.0
        for idx in range(indptr[u], indptr[u + 1]):
            v = indices[idx]
            if match[v] == -1 and v != u and data[idx] > best_w:
                if vwgt[u] + vwgt[v] <= max_vwgt:
                    best, best_w = v, data[idx]
        if best >= 0:
            match[u] = best
            match[best] = u
        else:
            match[u] = u
    cmap = np.full(n, -1, dtype=np.int64)
    c = 0
    for u in range(n):
        if cmap[u] == -1:
            cmap[u] = c
            cmap[match[u]] = c
            c += 1
    return cmap, c


def _contract(adj, vwgt, cmap, nc):
    pm = sp.csr_matrix((np.ones(adj.shape[0]), (np.arange(adj.shape[0]), cmap)), shape=(adj.shape[0], nc))
    coarse = (pm.T @ adj @ pm).tocsr()
    coarse.setdiag(0)
    coarse.eliminate_zeros()
    coarse.sort_indices()
    return coarse, np.bincount(cmap, weights=vwgt, minlength=nc)


def _cut(adj, part) -> float:
    coo = adj.tocoo()
    return float(coo.data[part[coo.row] != part[coo.col]].sum()) / 2.0


def _grow_initial(adj, vwgt, m, max_pw, rng):
    """Greedy graph growing: each part absorbs its most-connected frontier vertex."""
    n = adj.shape[0]
    indptr, indices, data = adj.indptr, adj.indices, adj.data
    total = vwgt.sum()
    part = np.full(n, -1, dtype=np.int64)
    for k in range(m - 1):
        target = (total - vwgt[part >= 0].sum()) / (m - k)
        free = np.flatnonzero(part == -1)
        if free.size == 0:
            break
        conn = np.zeros(n)
        pw = 0.0
        seed = free[rng.integers(free.size)]
        candidates = {int(seed)}
        while pw < target:
            best, best_c = -1, -1.0
            for v in candidates:
                if part[v] == -1 and pw + vwgt[v] <= max_pw and conn[v] > best_c:
                    best, best_c = v, conn[v]
            if best < 0:
                free = np.flatnonzero(part == -1)
                fits = free[pw + vwgt[free] <= max_pw]
                if fits.size == 0:
                    break
                best = int(fits[rng.integers(fits.size)])
            part[best] = k
            pw += vwgt[best]
            candidates.discard(best)
            for idx in range(indptr[best], indptr[best + 1]):
                v = indices[idx]
                if part[v] == -1:
                    conn[v] += data[idx]
                    candidates.add(int(v))
    part[part == -1] = m - 1
    return part


def _refine(adj, vwgt, part, m, max_pw, rng, passes=10):
    """Greedy boundary refinement; also drains overweight parts."""
    indptr, indices, data = adj.indptr, adj.indices, adj.data
    n = adj.shape[0]
    pw = np.bincount(part, weights=vwgt, minlength=m)
    cnt = np.bincount(part, minlength=m)
    for _ in range(passes):
        moved = 0
        for u in rng.permutation(n):
            pu = part[u]
            if cnt[pu] <= 1:
                continue
            conn: dict[int, float] = {}
            for idx in range(indptr[u], indptr[u + 1]):
                q = part[indices[idx]]
                conn[q] = conn.get(q, 0.0) + data[idx]
            internal = conn.get(pu, 0.0)
            overweight = pw[pu] > max_pw
            if len(conn) == 0 or (len(conn) == 1 and pu in conn and not overweight):
                continue
            best_q, best_gain = -1, -np.inf
            for q, c in conn.items():
                if q == pu or pw[q] + vwgt[u] > max_pw:
                    continue
                gain = c - internal
                if gain > best_gain or (gain == best_gain and pw[q] < pw[best_q]):
                    best_q, best_gain = q, gain
            if overweight and best_q < 0:
                q = int(np.argmin(pw))
                if q != pu and pw[q] + vwgt[u] <= max_pw:
                    best_q, best_gain = q, -internal
            if best_q < 0:
                continue
            balance_gain = pw[best_q] + vwgt[u] < pw[pu]
            if best_gain > 0 or (best_gain == 0 and balance_gain) or overweight:
                part[u] = best_q
                pw[pu] -= vwgt[u]
                pw[best_q] += vwgt[u]
                cnt[pu] -= 1
                cnt[best_q] += 1
                moved += 1
        if moved == 0:
            break
    return part


def _fill_empty(adj, part, m):
    """Give every empty part one vertex taken from the largest part."""
    indptr, indices = adj.indptr, adj.indices
    cnt = np.bincount(part, minlength=m)
    for k in np.flatnonzero(cnt == 0):
        big = int(np.argmax(cnt))
        members = np.flatnonzero(part == big)
        # the member least tied to its own part costs the least cut
        internal = [np.count_nonzero(part[indices[indptr[u] : indptr[u + 1]]] == big) for u in members]
        u = members[int(np.argmin(internal))]
        part[u] = k
        cnt[big] -= 1
        cnt[k] += 1
    return part


def partition_graph(
    g: SparseGraph, m: int, seed: int = 0, imbalance: float = 0.1, n_init: int = 4
) -> Partition:
    """Hard m-way partition minimising edge cut under a (1 + imbalance) balance bound."""
    n = g.n
    if m < 1 or m > n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if m == 1:
        return from_assignment(np.zeros(n, dtype=np.int64))
    if m == n:
        return from_assignment(np.arange(n))
    rng = np.random.default_rng(seed)
    max_pw = (1.0 + imbalance) * n / m

    coarsen_to = max(2 * m, 64)
    levels = []
    adj = _weighted_adjacency(g)
    vwgt = np.ones(n)
    while adj.shape[0] > coarsen_to:
        cmap, nc = _match_heavy_edges(adj, vwgt, max(1.5 * n / coarsen_to, 2.0), rng)
        if nc > 0.95 * adj.shape[0]:
            break
        levels.append((adj, vwgt, cmap))
        adj, vwgt = _contract(adj, vwgt, cmap, nc)

    best, best_key = None, None
    for _ in range(n_init):
        part = _grow_initial(adj, vwgt, m, max_pw, rng)
        part = _refine(adj, vwgt, part, m, max_pw, rng)
        pw = np.bincount(part, weights=vwgt, minlength=m)
        key = (max(pw.max() - max_pw, 0.0), _cut(adj, part))
        if best_key is None or key < best_key:
            best, best_key = part.copy(), key
    part = best

    for fine_adj, fine_vwgt, cmap in reversed(levels):
        part = part[cmap]
        part = _refine(fine_adj, fine_vwgt, part, m, max_pw, rng)

    part = _fill_empty(_weighted_adjacency(g), part, m)
    return assignment_weights(Partition(part, m, np.ones(n), "unit"), "mean")


def random_balanced_assignment(n: int, m: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.permutation(np.arange(n) % m)


def save_partition_report(g: SparseGraph, p: Partition, path) -> dict:
    report = partition_report(g, p)
    Path(path).write_text(json.dumps(report, indent=2))
    return report
