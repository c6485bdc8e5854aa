"""Downstream evaluation of frozen embeddings: linear probe, k-means, NMI / ARI."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DegenerateProbeError
from .graph import LabelVector, SplitSpec

# ---------------------------------------------------------------------------
# linear probe


@dataclass
class ProbeParams:
    W: np.ndarray
    b: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    def logits(self, z: np.ndarray) -> np.ndarray:
        return ((z - self.mean) / self.scale) @ self.W + self.b


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_probe(
    z: np.ndarray,
    labels,
    split: SplitSpec | np.ndarray,
    epochs: int = 300,
    lr: float = 0.1,
    weight_decay: float = 5e-4,
    num_classes: int | None = None,
) -> ProbeParams:
    """Full-batch softmax regression trained with Adam from a zero initialisation.

    Features are z-scored with statistics of the training rows only.
    """
    from .trainer import Adam

    y = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels)
    if num_classes is None:
        num_classes = labels.num_classes if isinstance(labels, LabelVector) else int(y.max()) + 1
    train = split.train if isinstance(split, SplitSpec) else np.asarray(split)
    if train.size == 0:
        raise DegenerateProbeError("empty training split")
    if np.unique(y[train]).size < 2:
        raise DegenerateProbeError("training split contains a single class")
    zt = z[train]
    mean = zt.mean(axis=0)
    scale = zt.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    xs = (zt - mean) / scale
    onehot = np.eye(num_classes)[y[train]]
    params = {"W": np.zeros((z.shape[1], num_classes)), "b": np.zeros(num_classes)}
    opt = Adam(lr, weight_decay=0.0)
    n = train.size
    for _ in range(epochs):
        prob = _softmax(xs @ params["W"] + params["b"])
        d = (prob - onehot) / n
        grads = {"W": xs.T @ d + weight_decay * params["W"], "b": d.sum(axis=0)}
        opt.step(params, grads)
    return ProbeParams(params["W"], params["b"], mean, scale)


def accuracy(probe: ProbeParams, z, labels, index) -> float:
    """Fraction of argmax matches; ties go to the lowest class id."""
    y = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels)
    index = np.asarray(index)
    if index.size == 0:
        raise ValueError("empty index set")
    pred = np.argmax(probe.logits(z[index]), axis=1)
    return float(np.mean(pred == y[index]))


def per_class_split(labels, per_class: int, n_valid: int, n_test: int, seed: int = 0) -> SplitSpec:
    """``per_class`` training nodes per class, then disjoint random valid/test sets."""
    y = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        train.extend(rng.choice(idx, size=min(per_class, idx.size), replace=False).tolist())
    train = np.sort(np.asarray(train, dtype=np.int64))
    rest = np.setdiff1d(np.arange(y.size), train)
    rest = rng.permutation(rest)
    valid = np.sort(rest[:n_valid])
    test = np.sort(rest[n_valid : n_valid + n_test])
    return SplitSpec(train, valid, test)


def ratio_split(n: int, train: float, valid: float, seed: int = 0) -> SplitSpec:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    a = int(round(train * n))
    b = a + int(round(valid * n))
    return SplitSpec(np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:]))


# ---------------------------------------------------------------------------
# clustering


@dataclass
class KMeansResult:
    assignment: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int


def _sq_dists(z, centers):
    d = (z * z).sum(1)[:, None] - 2.0 * z @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(z, k, rng):
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]))
    first = rng.integers(n)
    centers[0] = z[first]
    closest = ((z - z[first]) ** 2).sum(1)
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[i] = z[idx]
        closest = np.minimum(closest, ((z - z[idx]) ** 2).sum(1))
    return centers


def kmeans(z, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 300, tol: float = 1e-6) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds; best of ``restarts`` by inertia."""
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    if k > n or k < 1:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centers = _kmeans_pp(z, k, rng)
        prev = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            assign = np.argmin(_sq_dists(z, centers), axis=1)
            counts = np.bincount(assign, minlength=k)
            sums = np.zeros_like(centers)
            np.add.at(sums, assign, z)
            empty = counts == 0
            centers = np.where(empty[:, None], centers, sums / np.maximum(counts, 1)[:, None])
            if empty.any():
                # re-seed empty clusters at the worst-served points
                far = np.argsort(-((z - centers[assign]) ** 2).sum(1))
                centers[np.flatnonzero(empty)] = z[far[: int(empty.sum())]]
            inertia = float(((z - centers[assign]) ** 2).sum())
            if prev - inertia <= tol * max(inertia, 1e-300):
                break
            prev = inertia
        assign = np.argmin(_sq_dists(z, centers), axis=1)
        inertia = float(((z - centers[assign]) ** 2).sum())
        if best is None or inertia < best.inertia:
            best = KMeansResult(assign, centers, inertia, it)
    return best


# ---------------------------------------------------------------------------
# agreement metrics, from a contingency table in exact integer arithmetic


def contingency(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("assignments must have equal length")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1 if ia.size else 0, ib.max() + 1 if ib.size else 0), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _entropy(counts, n) -> float:
    return math.fsum((c / n) * math.log(n / c) for c in counts if c > 0)


def nmi(a, b) -> float:
    """Normalised mutual information with arithmetic-mean normalisation."""
    table = contingency(a, b)
    n = int(table.sum())
    if n == 0:
        return 1.0
    rows = [int(x) for x in table.sum(axis=1)]
    cols = [int(x) for x in table.sum(axis=0)]
    mi = math.fsum(
        (int(c) / n) * math.log((n * int(c)) / (rows[i] * cols[j]))
        for (i, j), c in np.ndenumerate(table)
        if c > 0
    )
    h = _entropy(rows, n) + _entropy(cols, n)
    if h == 0:
        return 1.0
    return 2.0 * mi / h


def _comb2(x: int) -> int:
    return x * (x - 1) // 2


def ari(a, b) -> float:
    """Adjusted Rand index under the permutation (hypergeometric) model."""
    table = contingency(a, b)
    n = int(table.sum())
    index = sum(_comb2(int(c)) for c in table.ravel())
    sum_a = sum(_comb2(int(c)) for c in table.sum(axis=1))
    sum_b = sum(_comb2(int(c)) for c in table.sum(axis=0))
    total = _comb2(n)
    if total == 0:
        return 1.0
    expected = Fraction(sum_a * sum_b, total)
    maximum = Fraction(sum_a + sum_b, 2)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    task: str
    path: str
    seeds: list[int]
    config_digest: str = ""
    checkpoint_digest: str = ""
    accuracy: float | None = None
    accuracy_std: float | None = None
    per_seed_accuracy: list[float] = field(default_factory=list)
    nmi: float | None = None
    ari: float | None = None
    split_sizes: dict | None = None

    def to_json(self) -> dict:
        return asdict(self)


def evaluate_classification(z, labels: LabelVector, splits, probe_kwargs=None) -> tuple[float, float, list[float]]:
    """Mean/std test accuracy over a sequence of splits."""
    probe_kwargs = probe_kwargs or {}
    accs = []
    for split in splits:
        probe = train_probe(z, labels, split, num_classes=labels.num_classes, **probe_kwargs)
        accs.append(accuracy(probe, z, labels, split.test))
    return float(np.mean(accs)), float(np.std(accs)), accs


def evaluate_clustering(z, labels: LabelVector, seed: int = 0, restarts: int = 10) -> tuple[float, float]:
    res = kmeans(z, labels.num_classes, seed=seed, restarts=restarts)
    return nmi(labels.labels, res.assignment), ari(labels.labels, res.assignment)
