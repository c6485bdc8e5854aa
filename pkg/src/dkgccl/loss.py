"""Dual-kernel community contrastive loss.

For node ``i`` in community ``j`` the per-node ratio is

    l(i) = sum_{k in N(j)} A^P[j,k] sum_{t in P_k} w_t kB(i, t)
           -------------------------------------------------
                 sum_k sum_{t in P_k} w_t kB(i, t)

with the bi-level kernel ``kB`` either the tensor product
``K_P[j,k] * phi(v_i).phi(v_t)`` or the convex combination
``alpha * phi(v_i).phi(v_t) + (1 - alpha) * K_P[j,k]``, and the loss is
``-mean_i log l(i)``.

:func:`loss_oracle` expands every (node, node) pair and costs O(n^2 d).
:func:`loss_fast` factors ``phi(v_i)`` out of the inner sums, so the
bracketed community aggregates are built once and shared: O(n d + m^2 d_P).
:func:`loss_and_grad` backpropagates the fast path through the feature map,
the L2-normalised community kernel and the masked aggregation that produced
the community features.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePositiveSetError, NumericalError
from .partition import CoarsenedGraph, Partition

log = logging.getLogger(__name__)

VARIANTS = ("tensor_product", "linear_combination")
FEATURE_MAPS = ("sigmoid", "relu", "elu_plus_one")


@dataclass(frozen=True)
class LossConfig:
    variant: str = "linear_combination"
    alpha: float = 0.5
    tau: float = 0.5
    feature_map: str = "sigmoid"
    include_self_community: bool = True
    epsilon_clamp: float = 1e-12

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.feature_map not in FEATURE_MAPS:
            raise ValueError(f"unknown feature map {self.feature_map!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def beta(self) -> float:
        return 1.0 - self.alpha


@dataclass
class LossAggregates:
    phi: np.ndarray  # n x d_G mapped node features
    s: np.ndarray  # m x d_G weighted per-community sums of phi
    S: np.ndarray  # d_G, sum of s over communities
    K: np.ndarray  # m x m community kernel
    w: np.ndarray  # m, per-community weight sums
    pos: np.ndarray  # m x m positive-pair weights A^P restricted to N(P_j)
    num_bracket: np.ndarray  # per-community numerator bracket
    den_bracket: np.ndarray  # per-community denominator bracket
    num: np.ndarray  # n, per-node numerators (before clamping)
    den: np.ndarray  # n
    clamped: np.ndarray  # n, bool
    extra: dict

    @property
    def clamp_count(self) -> int:
        return int(self.clamped.sum())


@dataclass
class LossGradients:
    dW_G: np.ndarray
    dW_P: np.ndarray


def feature_map(v: np.ndarray, kind: str = "sigmoid") -> np.ndarray:
    if kind == "sigmoid":
        # split by sign so exp never overflows
        out = np.empty_like(v, dtype=np.float64)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        out[~pos] = ev / (1.0 + ev)
        return out
    if kind == "relu":
        return np.maximum(v, 0.0)
    if kind == "elu_plus_one":
        return np.where(v > 0, v + 1.0, np.exp(np.minimum(v, 0.0)))
    raise ValueError(f"unknown feature map {kind!r}")


def feature_map_grad(v: np.ndarray, kind: str = "sigmoid") -> np.ndarray:
    if kind == "sigmoid":
        s = feature_map(v, "sigmoid")
        return s * (1.0 - s)
    if kind == "relu":
        return (v > 0).astype(np.float64)
    if kind == "elu_plus_one":
        return np.where(v > 0, 1.0, np.exp(np.minimum(v, 0.0)))
    raise ValueError(f"unknown feature map {kind!r}")


def normalize_rows(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("ij,ij->i", c, c))
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms[:, None] > 0, c / safe[:, None], 0.0), norms


def community_kernel(c: np.ndarray, tau: float) -> np.ndarray:
    """exp(cos(c_j, c_k) / tau); zero rows are treated as zero vectors (kernel value 1)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    chat, _ = normalize_rows(c)
    g = chat @ chat.T
    g = 0.5 * (g + g.T)
    return np.exp(g / tau)


def _as_matrix(a_p) -> np.ndarray:
    if isinstance(a_p, CoarsenedGraph):
        return a_p.matrix
    return np.asarray(a_p, dtype=np.float64)


def positive_weights(a_p, include_self: bool = True) -> np.ndarray:
    """A^P with entries outside the positive set N(P_j) zeroed."""
    a = _as_matrix(a_p)
    pos = np.where(a > 0, a, 0.0)
    if not include_self:
        np.fill_diagonal(pos, 0.0)
    return pos


def _rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, b)


def loss_fast(v, c, partition: Partition, a_p, cfg: LossConfig) -> tuple[float, LossAggregates]:
    phi = feature_map(v, cfg.feature_map)
    pm = partition.matrix()
    j = partition.assignment
    s = np.asarray(pm.T @ phi)
    big_s = s.sum(axis=0)
    w = partition.community_weight_sums()
    k = community_kernel(c, cfg.tau)
    pos = positive_weights(a_p, cfg.include_self_community)
    pk = pos * k
    extra = {}
    if cfg.variant == "tensor_product":
        q = pk @ s
        r = k @ s
        num = _rowdot(phi, q[j])
        den = _rowdot(phi, r[j])
        num_bracket, den_bracket = q, r
    else:
        a, b = cfg.alpha, cfg.beta
        a_s = pos @ s
        comm_num = pk @ w
        comm_den = k @ w
        num = a * _rowdot(phi, a_s[j]) + b * comm_num[j]
        den = a * (phi @ big_s) + b * comm_den[j]
        num_bracket, den_bracket = a_s, big_s
        extra = {"comm_num": comm_num, "comm_den": comm_den}
    if not np.all(np.isfinite(den)) or np.any(den <= 0):
        raise NumericalError("non-finite or non-positive loss denominator")
    clamped = ~(num > cfg.epsilon_clamp)
    if clamped.any():
        log.warning("clamped %d non-positive loss numerators", int(clamped.sum()))
    num_c = np.where(clamped, cfg.epsilon_clamp, num)
    loss = -float(np.mean(np.log(num_c / den)))
    agg = LossAggregates(phi, s, big_s, k, w, pos, num_bracket, den_bracket, num, den, clamped, extra)
    return loss, agg


def loss_oracle(v, c, partition: Partition, a_p, cfg: LossConfig, max_n: int = 10_000, block: int = 512) -> float:
    """Reference value by explicit summation over all (node, node) pairs."""
    n = v.shape[0]
    if n > max_n:
        raise ValueError(f"oracle is O(n^2); n={n} exceeds guard {max_n}")
    phi = feature_map(v, cfg.feature_map)
    norms = np.sqrt((c * c).sum(axis=1))
    chat = np.zeros_like(c)
    nz = norms > 0
    chat[nz] = c[nz] / norms[nz, None]
    kc = np.exp((chat @ chat.T) / cfg.tau)
    a = _as_matrix(a_p)
    in_n = a > 0
    if not cfg.include_self_community:
        np.fill_diagonal(in_n, False)
    comm = partition.assignment
    wt = partition.weights
    total = 0.0
    for lo in range(0, n, block):
        rows = slice(lo, min(lo + block, n))
        cj = comm[rows]
        node_k = phi[rows] @ phi.T
        comm_k = kc[np.ix_(cj, comm)]
        if cfg.variant == "tensor_product":
            kb = comm_k * node_k
        else:
            kb = cfg.alpha * node_k + cfg.beta * comm_k
        weighted = kb * wt[None, :]
        pair_a = np.where(in_n[np.ix_(cj, comm)], a[np.ix_(cj, comm)], 0.0)
        num = (pair_a * weighted).sum(axis=1)
        den = weighted.sum(axis=1)
        if np.any(num <= 0):
            bad = lo + int(np.flatnonzero(num <= 0)[0])
            raise DegeneratePositiveSetError(f"node {bad} has an empty positive set")
        total += float(np.log(num / den).sum())
    return -total / n


def loss_and_grad(x, params, partition: Partition, a_p, cfg: LossConfig, mask=None):
    """Loss of the fast path and its exact gradients w.r.t. W_G and W_P.

    ``mask`` is the epoch's scaled dropout mask (entries 0 or 1/(1-p)); None
    means no dropout.
    """
    n = x.shape[0]
    v = x @ params.W_G
    u = x @ params.W_P
    if mask is None:
        mask = np.ones_like(u)
    pm = partition.matrix()
    unit = partition.matrix(unit=True)
    c = np.asarray(pm.T @ (u * mask))
    loss, agg = loss_fast(v, c, partition, a_p, cfg)

    j = partition.assignment
    phi, s, k, pos = agg.phi, agg.s, agg.K, agg.pos
    g_num = np.where(agg.clamped, 0.0, -1.0 / (n * np.where(agg.clamped, 1.0, agg.num)))
    g_den = 1.0 / (n * agg.den)

    if cfg.variant == "tensor_product":
        q, r = agg.num_bracket, agg.den_bracket
        dphi = g_num[:, None] * q[j] + g_den[:, None] * r[j]
        gq = np.asarray(unit.T @ (g_num[:, None] * phi))
        gr = np.asarray(unit.T @ (g_den[:, None] * phi))
        ds = (pos * k).T @ gq + k.T @ gr
        dk = pos * (gq @ s.T) + gr @ s.T
    else:
        a, b = cfg.alpha, cfg.beta
        a_s, big_s = agg.num_bracket, agg.den_bracket
        w = agg.w
        dphi = a * (g_num[:, None] * a_s[j] + g_den[:, None] * big_s[None, :])
        gq = np.asarray(unit.T @ (g_num[:, None] * phi))
        gs = g_den @ phi
        ds = a * (pos.T @ gq) + a * gs[None, :]
        gn = np.bincount(j, weights=g_num, minlength=partition.m)
        ge = np.bincount(j, weights=g_den, minlength=partition.m)
        dk = b * (gn[:, None] * pos * w[None, :] + ge[:, None] * w[None, :])

    dphi = dphi + np.asarray(pm @ ds)
    dv = dphi * feature_map_grad(v, cfg.feature_map)
    dw_g = x.T @ dv

    chat, norms = normalize_rows(c)
    dgram = dk * k / cfg.tau
    dchat = (dgram + dgram.T) @ chat
    radial = np.einsum("ij,ij->i", chat, dchat)
    safe = np.where(norms > 0, norms, 1.0)
    dc = np.where(norms[:, None] > 0, (dchat - chat * radial[:, None]) / safe[:, None], 0.0)
    du = np.asarray(pm @ dc) * mask
    dw_p = x.T @ du

    for name, arr in (("dW_G", dw_g), ("dW_P", dw_p)):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite gradient in {name}")
    return loss, LossGradients(dw_g, dw_p)
