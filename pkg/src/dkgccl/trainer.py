"""Two-stage training: contrastive encoder fitting, then MLP distillation."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .distill import DistillMlp, distill_loss_and_grad, init_mlp, propagation_target
from .encoder import EncoderParams, dropout_mask, init_params
from .errors import NumericalError
from .graph import SparseGraph
from .loss import LossConfig, loss_and_grad
from .partition import Partition


class Adam:
    """Bias-corrected Adam over a dict of named arrays, updated in place."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        if not lr > 0:
            raise ValueError("lr must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if g.shape != params[name].shape:
                raise ValueError(f"gradient for {name} has shape {g.shape}, expected {params[name].shape}")
            if not np.all(np.isfinite(g)):
                bad = np.argwhere(~np.isfinite(g))[0]
                raise NumericalError(f"non-finite gradient for {name} at index {tuple(int(i) for i in bad)}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, g in grads.items():
            p = params[name]
            if self.weight_decay:
                g = g + self.weight_decay * p
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainConfig:
    epochs: int = 15  # stage 1
    lr: float = 0.005
    distill_epochs: int = 300  # stage 2
    distill_lr: float = 0.01
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    p: float = 0.1
    k_hop: int = 3
    d_g: int = 64
    d_p: int | None = None
    d_hidden: int | None = None
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.distill_epochs < 1:
            raise ValueError("epoch counts must be >= 1")
        if not self.lr > 0 or not self.distill_lr > 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        if self.k_hop < 1:
            raise ValueError("k_hop must be >= 1")

    @property
    def dims(self) -> tuple[int, int]:
        return self.d_g, self.d_g if self.d_p is None else self.d_p


class JsonLinesLog:
    def __init__(self, path=None):
        self.path = path
        self.records: list[dict] = []

    def write(self, **record):
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")


def _rngs(seed: int):
    init_seq, drop_seq, mlp_seq = np.random.SeedSequence(seed).spawn(3)
    return init_seq, np.random.default_rng(drop_seq), mlp_seq


def train_stage1(
    g: SparseGraph,
    partition: Partition,
    a_p,
    cfg: TrainConfig,
    params: EncoderParams | None = None,
    log: JsonLinesLog | None = None,
) -> tuple[EncoderParams, list[float]]:
    """Full-batch Adam on the community contrastive loss; one dropout mask per epoch."""
    init_seq, drop_rng, _ = _rngs(cfg.seed)
    d_g, d_p = cfg.dims
    if params is None:
        params = init_params(g.h, d_g, d_p, seed=int(init_seq.generate_state(1)[0]))
    else:
        params = params.copy()
    opt = Adam(cfg.lr, weight_decay=cfg.weight_decay)
    x = g.features
    trace = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        mask = dropout_mask(drop_rng, (g.n, params.d_p), cfg.p)
        loss, grads = loss_and_grad(x, params, partition, a_p, cfg.loss, mask)
        opt.step({"W_G": params.W_G, "W_P": params.W_P}, {"W_G": grads.dW_G, "W_P": grads.dW_P})
        trace.append(loss)
        if log is not None:
            log.write(stage=1, epoch=epoch, loss=loss, wall_ms=(time.perf_counter() - t0) * 1e3)
    return params, trace


def train_stage2(
    g: SparseGraph,
    w_g: np.ndarray,
    cfg: TrainConfig,
    mlp: DistillMlp | None = None,
    log: JsonLinesLog | None = None,
    a_norm=None,
) -> tuple[DistillMlp, list[float]]:
    """Regress an MLP on V = X W_G onto the frozen K-hop propagated target."""
    _, _, mlp_seq = _rngs(cfg.seed)
    v = g.features @ w_g
    target = propagation_target(g, w_g, cfg.k_hop, a_norm)
    if mlp is None:
        mlp = init_mlp(w_g.shape[1], cfg.d_hidden, seed=int(mlp_seq.generate_state(1)[0]))
    opt = Adam(cfg.distill_lr)
    trace = []
    for epoch in range(cfg.distill_epochs):
        t0 = time.perf_counter()
        loss, grads = distill_loss_and_grad(mlp, v, target)
        opt.step(mlp.params(), grads)
        trace.append(loss)
        if log is not None:
            log.write(stage=2, epoch=epoch, loss=loss, loss_per_node=loss / g.n,
                      wall_ms=(time.perf_counter() - t0) * 1e3)
    return mlp, trace
