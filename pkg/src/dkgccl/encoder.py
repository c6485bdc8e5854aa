"""Stage-1 parameters and bi-level feature generation.

Node-level features are a plain projection ``V = X W_G``. Community-level
features apply element-wise inverted dropout to ``X W_P`` and then sum each
community's rows with the partition weights.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError
from .graph import DIGEST_MAGIC
from .partition import Partition


@dataclass
class EncoderParams:
    W_G: np.ndarray
    W_P: np.ndarray

    @property
    def h(self) -> int:
        return self.W_G.shape[0]

    @property
    def d_g(self) -> int:
        return self.W_G.shape[1]

    @property
    def d_p(self) -> int:
        return self.W_P.shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.W_G.copy(), self.W_P.copy())


@dataclass
class BiLevelFeatures:
    V: np.ndarray
    C: np.ndarray
    mask: np.ndarray  # n x d_P, entries 0 or 1/(1-p)


def glorot_uniform(rng, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(h: int, d_g: int, d_p: int, seed: int = 0) -> EncoderParams:
    if min(h, d_g, d_p) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    return EncoderParams(glorot_uniform(rng, h, d_g), glorot_uniform(rng, h, d_p))


def node_level_features(x: np.ndarray, w_g: np.ndarray) -> np.ndarray:
    if x.shape[1] != w_g.shape[0]:
        raise ValueError(f"shape mismatch: X is {x.shape}, W_G is {w_g.shape}")
    return x @ w_g


def dropout_mask(rng, shape, p: float) -> np.ndarray:
    """Inverted-dropout mask: each entry kept with prob 1-p and scaled by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)


def aggregate(partition: Partition, rows: np.ndarray) -> np.ndarray:
    """Weighted per-community row sums: out[j] = sum_{t in P_j} w_t rows[t]."""
    return partition.matrix().T @ rows


def community_level_features(
    x: np.ndarray,
    w_p: np.ndarray,
    partition: Partition,
    p: float = 0.0,
    rng=None,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    if x.shape[1] != w_p.shape[0]:
        raise ValueError(f"shape mismatch: X is {x.shape}, W_P is {w_p.shape}")
    u = x @ w_p
    if mask is None:
        if p > 0 and rng is None:
            raise ValueError("an rng is required when p > 0")
        mask = dropout_mask(rng, u.shape, p)
    return aggregate(partition, u * mask), mask


def bilevel_features(x, params: EncoderParams, partition, p=0.0, rng=None, mask=None) -> BiLevelFeatures:
    v = node_level_features(x, params.W_G)
    c, mask = community_level_features(x, params.W_P, partition, p, rng, mask)
    return BiLevelFeatures(v, c, mask)


def substructure_count_expectation(d_p: int, p: float, community_size: int) -> float:
    """Expected number of feature dimensions in which dropout removes at least one member."""
    return d_p * (1.0 - (1.0 - p) ** community_size)


def substructure_count_monte_carlo(
    d_p: int, p: float, community_size: int, draws: int, seed: int = 0, chunk: int = 2000
) -> float:
    """Mean over ``draws`` masks of the number of dimensions with >= 1 dropped member."""
    rng = np.random.default_rng(seed)
    total = 0
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        dropped = rng.random((b, community_size, d_p)) < p
        total += int(dropped.any(axis=1).sum())
        done += b
    return total / draws


# ---------------------------------------------------------------------------
# checkpoint: 3 x uint64 LE header (h, d_G, d_P), then W_G and W_P as
# row-major little-endian f64; optional trailer b"DGST" + 32-byte digest.


def save_encoder(params: EncoderParams, path, digest: bytes | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQQ", params.h, params.d_g, params.d_p))
        fh.write(np.ascontiguousarray(params.W_G, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.W_P, dtype="<f8").tobytes())
        if digest is not None:
            fh.write(DIGEST_MAGIC + digest)


def load_encoder(path) -> tuple[EncoderParams, bytes | None]:
    raw = Path(path).read_bytes()
    if len(raw) < 24:
        raise ParseError(f"{path}: truncated encoder header")
    h, d_g, d_p = struct.unpack("<QQQ", raw[:24])
    a = 24 + h * d_g * 8
    b = a + h * d_p * 8
    if len(raw) < b:
        raise ParseError(f"{path}: truncated encoder payload")
    w_g = np.frombuffer(raw[24:a], dtype="<f8").reshape(h, d_g).astype(np.float64)
    w_p = np.frombuffer(raw[a:b], dtype="<f8").reshape(h, d_p).astype(np.float64)
    trailer = raw[b:]
    digest = trailer[4:] if trailer.startswith(DIGEST_MAGIC) else None
    return EncoderParams(w_g, w_p), digest
