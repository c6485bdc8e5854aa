"""Decoupled propagation, the distillation MLP and final representations.

The propagated path computes ``sigma(V + (1/K) sum_k A^k V)`` with
``V = X W_G``; the distilled path swaps the propagation term for
``MLP(V)`` and never reads the adjacency.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import glorot_uniform
from .errors import ParseError
from .graph import DIGEST_MAGIC, SparseGraph, k_hop_mean, normalized_adjacency

ACTIVATIONS = ("identity", "relu", "prelu")
PRELU_SLOPE = 0.25
INFER_BLOCK = 4096


@dataclass
class DistillMlp:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def d_hidden(self) -> int:
        return self.W1.shape[1]


@dataclass
class FinalRepresentation:
    Z_star: np.ndarray
    source: str  # "gnn_propagated" | "distilled"


def init_mlp(d_g: int, d_hidden: int | None = None, seed: int = 0) -> DistillMlp:
    d_hidden = d_g if d_hidden is None else d_hidden
    rng = np.random.default_rng(seed)
    return DistillMlp(
        glorot_uniform(rng, d_g, d_hidden),
        np.zeros(d_hidden),
        glorot_uniform(rng, d_hidden, d_g),
        np.zeros(d_g),
    )


def propagation_target(g: SparseGraph, w_g: np.ndarray, k: int, a_norm=None) -> np.ndarray:
    if a_norm is None:
        a_norm = normalized_adjacency(g)
    return k_hop_mean(a_norm, g.features @ w_g, k)


def mlp_forward(mlp: DistillMlp, v: np.ndarray) -> np.ndarray:
    if v.shape[1] != mlp.d_in:
        raise ValueError(f"MLP expects {mlp.d_in} input columns, got {v.shape[1]}")
    # in place on the n x d temporaries; inference time is dominated by them
    hid = v @ mlp.W1
    hid += mlp.b1
    np.maximum(hid, 0.0, out=hid)
    out = hid @ mlp.W2
    out += mlp.b2
    return out


def distill_loss_and_grad(mlp: DistillMlp, v: np.ndarray, target: np.ndarray):
    """Squared Frobenius residual ||MLP(V) - T||_F^2 and its parameter gradients."""
    pre = v @ mlp.W1 + mlp.b1
    hid = np.maximum(pre, 0.0)
    out = hid @ mlp.W2 + mlp.b2
    resid = out - target
    loss = float(np.sum(resid * resid))
    dout = 2.0 * resid
    dhid = (dout @ mlp.W2.T) * (pre > 0)
    grads = {
        "W1": v.T @ dhid,
        "b1": dhid.sum(axis=0),
        "W2": hid.T @ dout,
        "b2": dout.sum(axis=0),
    }
    return loss, grads


def activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "prelu":
        return np.where(z > 0, z, PRELU_SLOPE * z)
    raise ValueError(f"unknown activation {kind!r}")


def final_representation(
    g: SparseGraph,
    w_g: np.ndarray,
    mlp: DistillMlp | None,
    k: int = 1,
    activation: str = "relu",
    a_norm=None,
) -> FinalRepresentation:
    """Z* from the distilled MLP when ``mlp`` is given, else from K-hop propagation."""
    if mlp is not None:
        # distilled path: per-node work only, the adjacency is never read.
        # Row blocks keep the temporaries cache-sized so cost stays linear in n.
        x = g.features
        z = np.empty((x.shape[0], w_g.shape[1]))
        for lo in range(0, x.shape[0], INFER_BLOCK):
            v = x[lo : lo + INFER_BLOCK] @ w_g
            blk = mlp_forward(mlp, v)
            blk += v
            z[lo : lo + INFER_BLOCK] = activate(blk, activation)
        return FinalRepresentation(z, "distilled")
    v = g.features @ w_g
    if a_norm is None:
        a_norm = normalized_adjacency(g)
    z = v + k_hop_mean(a_norm, v, k)
    return FinalRepresentation(activate(z, activation), "gnn_propagated")


# ---------------------------------------------------------------------------
# checkpoint: 2 x uint64 LE header (d_in, d_hidden), then W1, b1, W2, b2 as
# little-endian f64 (W2 is d_hidden x d_in); optional digest trailer.


def save_mlp(mlp: DistillMlp, path, digest: bytes | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", mlp.d_in, mlp.d_hidden))
        for arr in (mlp.W1, mlp.b1, mlp.W2, mlp.b2):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        if digest is not None:
            fh.write(DIGEST_MAGIC + digest)


def load_mlp(path) -> tuple[DistillMlp, bytes | None]:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ParseError(f"{path}: truncated MLP header")
    d_in, d_h = struct.unpack("<QQ", raw[:16])
    shapes = [(d_in, d_h), (d_h,), (d_h, d_in), (d_in,)]
    arrays, off = [], 16
    for shape in shapes:
        size = int(np.prod(shape)) * 8
        if len(raw) < off + size:
            raise ParseError(f"{path}: truncated MLP payload")
        arrays.append(np.frombuffer(raw[off : off + size], dtype="<f8").reshape(shape).astype(np.float64))
        off += size
    trailer = raw[off:]
    digest = trailer[4:] if trailer.startswith(DIGEST_MAGIC) else None
    return DistillMlp(*arrays), digest
