"""Graph storage, file formats and propagation primitives.

A graph is an immutable CSR adjacency (symmetric, unit weights, no stored
self-loops) plus a dense ``n x h`` float64 feature matrix.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError, ParseError, UndefinedScoreError

BINARY_SUFFIXES = (".bin", ".f64")
DIGEST_MAGIC = b"DGST"


@dataclass(frozen=True, eq=False)
class SparseGraph:
    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        ro = np.asarray(self.row_offsets, dtype=np.int64)
        ci = np.asarray(self.col_indices, dtype=np.int64)
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        for arr in (ro, ci, x):
            arr.setflags(write=False)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "features", x)
        self._validate()

    def _validate(self):
        n = self.n
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (n + 1,) or ro[0] != 0 or ro[-1] != ci.size:
            raise InputError("row_offsets inconsistent with col_indices")
        if np.any(np.diff(ro) < 0):
            raise InputError("row_offsets must be non-decreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= n):
            raise InputError("column index out of range")
        if self.features.shape[0] != n:
            raise InputError(
                f"features have {self.features.shape[0]} rows, graph has {n} nodes"
            )
        rows = np.repeat(np.arange(n), np.diff(ro))
        if np.any(rows == ci):
            raise InputError("self-loops must not be stored in the adjacency")
        # strictly increasing inside each row => sorted, no duplicates
        same_row = rows[1:] == rows[:-1]
        if np.any(ci[1:][same_row] <= ci[:-1][same_row]):
            raise InputError("col_indices must be strictly increasing within a row")
        a = self.adjacency
        if (a != a.T).nnz:
            raise InputError("adjacency must be symmetric")

    @classmethod
    def from_edges(cls, n: int, edges, features) -> "SparseGraph":
        """Build from an iterable of (u, v) pairs.

        Reversed and duplicate pairs collapse to one undirected edge; self-loops
        are dropped.
        """
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise InputError(f"edge endpoint out of range [0, {n})")
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]])
        a = sp.coo_matrix(
            (np.ones(len(both)), (both[:, 0], both[:, 1])), shape=(n, n)
        ).tocsr()
        a.sum_duplicates()
        a.sort_indices()
        return cls(n, a.indptr, a.indices, features)

    @property
    def h(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.col_indices.size // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.col_indices.size)
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets), shape=(self.n, self.n)
        )

    def edges(self) -> np.ndarray:
        """Undirected edges as an (|E|, 2) array with u < v."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        keep = rows < self.col_indices
        return np.stack([rows[keep], self.col_indices[keep]], axis=1)

    def neighbors(self, v: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[v] : self.row_offsets[v + 1]]

    def with_features(self, features) -> "SparseGraph":
        return SparseGraph(self.n, self.row_offsets, self.col_indices, features)

    def __eq__(self, other):
        if not isinstance(other, SparseGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True)
class LabelVector:
    labels: np.ndarray
    num_classes: int = field(default=-1)

    def __post_init__(self):
        y = np.asarray(self.labels).astype(np.int64)
        object.__setattr__(self, "labels", y)
        if self.num_classes < 0:
            object.__setattr__(self, "num_classes", int(y.max()) + 1 if y.size else 0)
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise InputError("label out of range")

    def __len__(self):
        return self.labels.size


@dataclass(frozen=True)
class SplitSpec:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))

    def validate(self, n: int) -> None:
        parts = [self.train, self.valid, self.test]
        for part in parts:
            if part.size and (part.min() < 0 or part.max() >= n):
                raise InputError("split index out of range")
            if np.unique(part).size != part.size:
                raise InputError("split contains repeated indices")
        joined = np.concatenate(parts)
        if np.unique(joined).size != joined.size:
            raise InputError("train/valid/test splits overlap")

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("train", "valid", "test")}

    @classmethod
    def load(cls, path) -> "SplitSpec":
        try:
            d = json.loads(Path(path).read_text())
            return cls(d["train"], d["valid"], d["test"])
        except (KeyError, json.JSONDecodeError) as exc:
            raise ParseError(f"bad split file {path}: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


# ---------------------------------------------------------------------------
# matrix files: CSV (one row per node) or little-endian f64 binary with an
# 8-byte header of two uint32 (rows, cols); an optional trailer
# b"DGST" + 32-byte sha256 config digest may follow the payload.


def _is_binary(path) -> bool:
    return Path(path).suffix in BINARY_SUFFIXES


def write_matrix(path, mat, digest: bytes | None = None) -> None:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat.reshape(-1, 1)
    path = Path(path)
    if _is_binary(path):
        with open(path, "wb") as fh:
            fh.write(struct.pack("<II", *mat.shape))
            fh.write(mat.astype("<f8").tobytes(order="C"))
            if digest is not None:
                fh.write(DIGEST_MAGIC + digest)
    else:
        np.savetxt(path, mat, fmt="%.17g", delimiter=",")


def read_matrix_with_digest(path) -> tuple[np.ndarray, bytes | None]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    if _is_binary(path):
        raw = path.read_bytes()
        if len(raw) < 8:
            raise ParseError(f"{path}: truncated header")
        rows, cols = struct.unpack("<II", raw[:8])
        end = 8 + rows * cols * 8
        if len(raw) < end:
            raise ParseError(f"{path}: payload shorter than header says")
        mat = np.frombuffer(raw[8:end], dtype="<f8").astype(np.float64).reshape(rows, cols)
        trailer = raw[end:]
        digest = None
        if trailer:
            if not trailer.startswith(DIGEST_MAGIC) or len(trailer) != 36:
                raise ParseError(f"{path}: unrecognised trailer")
            digest = trailer[4:]
        return mat, digest
    try:
        mat = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return mat, None


def read_matrix(path) -> np.ndarray:
    return read_matrix_with_digest(path)[0]


def read_edges(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'u v'")
            try:
                rows.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return np.asarray(rows, dtype=np.int64).reshape(-1, 2)


def load_graph(edge_path, feature_path) -> SparseGraph:
    features = read_matrix(feature_path)
    edges = read_edges(edge_path)
    n = features.shape[0]
    if edges.size and edges.max() >= n:
        raise InputError(
            f"edge file references node {edges.max()} but only {n} feature rows exist"
        )
    return SparseGraph.from_edges(n, edges, features)


def save_graph(g: SparseGraph, edge_path, feature_path) -> None:
    with open(edge_path, "w", encoding="utf-8") as fh:
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")
    write_matrix(feature_path, g.features)


def load_labels(path, num_classes: int | None = None) -> LabelVector:
    y = read_matrix(path)
    if y.shape[1] != 1:
        raise ParseError(f"{path}: labels must have one column")
    y = y[:, 0]
    if not np.all(y == np.round(y)):
        raise ParseError(f"{path}: non-integer label")
    return LabelVector(y.astype(np.int64), -1 if num_classes is None else num_classes)


# ---------------------------------------------------------------------------


def normalized_adjacency(g: SparseGraph) -> sp.csr_matrix:
    """Symmetric GCN normalisation D^-1/2 (A + I) D^-1/2 (degrees include the self-loop)."""
    a = g.adjacency + sp.identity(g.n, format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    a = a.tocoo()
    # one multiplication order for (i, j) and (j, i) keeps the result exactly symmetric
    data = 1.0 / np.sqrt(deg[a.row] * deg[a.col])
    out = sp.csr_matrix((data, (a.row, a.col)), shape=a.shape)
    out.sort_indices()
    return out


def k_hop_mean(a_norm, v: np.ndarray, k: int) -> np.ndarray:
    """(1/K) * sum_{k=1..K} A^k V via K sparse-dense products."""
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    cur = np.asarray(v, dtype=np.float64)
    acc = np.zeros_like(cur)
    for _ in range(k):
        cur = a_norm @ cur
        acc += cur
    return acc / k


def node_homophily(g: SparseGraph, labels: LabelVector, v: int) -> float:
    nbrs = g.neighbors(v)
    if nbrs.size == 0:
        raise UndefinedScoreError(f"node {v} is isolated; homophily is undefined")
    y = labels.labels
    return float(np.mean(y[nbrs] == y[v]))
