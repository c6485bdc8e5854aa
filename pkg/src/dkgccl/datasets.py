"""Synthetic stochastic-block-model graphs and loaders for public citation datasets."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InputError
from .graph import LabelVector, SparseGraph


def _sample_block_edges(rng, lo_a, size_a, lo_b, size_b, prob, same):
    if prob <= 0 or size_a == 0 or size_b == 0:
        return np.empty((0, 2), dtype=np.int64)
    pairs = size_a * (size_a - 1) // 2 if same else size_a * size_b
    k = rng.binomial(pairs, min(prob, 1.0))
    if k == 0:
        return np.empty((0, 2), dtype=np.int64)
    if same and prob >= 0.5 or (not same and pairs <= 4 * k):
        # dense regime: enumerate
        if same:
            iu = np.triu_indices(size_a, 1)
            cand = np.stack(iu, axis=1)
        else:
            cand = np.stack(np.meshgrid(np.arange(size_a), np.arange(size_b), indexing="ij"), -1).reshape(-1, 2)
        pick = cand[rng.choice(len(cand), size=k, replace=False)]
    else:
        # sparse regime: draw with replacement, duplicates are merged later
        u = rng.integers(0, size_a, size=k)
        v = rng.integers(0, size_b, size=k)
        pick = np.stack([u, v], axis=1)
        if same:
            pick = pick[pick[:, 0] != pick[:, 1]]
    return pick + np.array([lo_a, lo_b])


def sbm_graph(
    block_sizes,
    p_in: float,
    p_out: float,
    feature_dim: int = 16,
    signal: float = 1.0,
    noise: float = 1.0,
    seed: int = 0,
) -> tuple[SparseGraph, LabelVector]:
    """Planted-partition SBM; node features are a block-specific mean plus Gaussian noise.

    Nodes are numbered block by block, so labels are contiguous runs.
    """
    rng = np.random.default_rng(seed)
    sizes = np.asarray(block_sizes, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = int(offsets[-1])
    chunks = []
    for a in range(len(sizes)):
        for b in range(a, len(sizes)):
            prob = p_in if a == b else p_out
            chunks.append(
                _sample_block_edges(rng, offsets[a], sizes[a], offsets[b], sizes[b], prob, a == b)
            )
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    means = rng.normal(size=(len(sizes), feature_dim)) * signal
    x = means[labels] + noise * rng.normal(size=(n, feature_dim))
    g = SparseGraph.from_edges(n, edges, x)
    return g, LabelVector(labels, len(sizes))


def sbm_by_degree(
    n: int,
    blocks: int,
    mean_degree: float,
    intra_fraction: float = 0.8,
    feature_dim: int = 16,
    signal: float = 1.0,
    noise: float = 1.0,
    seed: int = 0,
) -> tuple[SparseGraph, LabelVector]:
    """SBM parameterised by expected mean degree and the fraction of intra-block edges."""
    size = n // blocks
    sizes = [size] * (blocks - 1) + [n - size * (blocks - 1)]
    p_in = mean_degree * intra_fraction / max(size - 1, 1)
    p_out = mean_degree * (1 - intra_fraction) / max(n - size, 1)
    return sbm_graph(sizes, p_in, p_out, feature_dim, signal, noise, seed)


def load_linqs(directory, name: str = "cora") -> tuple[SparseGraph, LabelVector, list[str]]:
    """Read the LINQS ``<name>.content`` / ``<name>.cites`` pair.

    Content rows are ``paper_id f_1 ... f_h class``; cites rows are
    ``cited citing``. Citations naming unknown papers are skipped.
    Returns the graph, labels and the sorted class names.
    """
    directory = Path(directory)
    content = directory / f"{name}.content"
    cites = directory / f"{name}.cites"
    if not content.exists() or not cites.exists():
        raise InputError(f"{directory} lacks {name}.content / {name}.cites")
    ids, rows, classes = [], [], []
    with open(content, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rows.append(np.asarray(parts[1:-1], dtype=np.float64))
            classes.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    class_names = sorted(set(classes))
    y = np.array([class_names.index(c) for c in classes])
    edges = []
    with open(cites, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 2 and parts[0] in index and parts[1] in index:
                edges.append((index[parts[0]], index[parts[1]]))
    g = SparseGraph.from_edges(len(ids), edges, np.vstack(rows))
    return g, LabelVector(y, len(class_names)), class_names


def row_normalize(x: np.ndarray) -> np.ndarray:
    s = np.abs(x).sum(axis=1, keepdims=True)
    return x / np.where(s > 0, s, 1.0)
