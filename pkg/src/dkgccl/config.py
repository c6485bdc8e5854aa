"""Run configuration: a single JSON document with one section per pipeline stage.

Keys inside sections are snake_case. Dataset paths are resolved relative to
the config file. The digest covers every section except ``eval`` so one set
of checkpoints can be evaluated under different protocols.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InputError
from .loss import FEATURE_MAPS, VARIANTS, LossConfig
from .trainer import TrainConfig

DEFAULTS: dict = {
    "dataset": {
        "format": "files",  # files | linqs
        "edges": None,
        "features": None,
        "labels": None,
        "split": None,
        "root": None,
        "name": "cora",
        "row_normalize": False,
    },
    "partition": {
        "m": None,
        "partition_rate": 0.1,
        "seed": 0,
        "normalization": "symmetric",
        "weights": "mean",
        "file": None,
    },
    "encoder": {"d": 64, "d_p": None},
    "loss": {
        "variant": "linear_combination",
        "alpha": 0.5,
        "tau": 0.5,
        "feature_map": "sigmoid",
        "p": 0.1,
        "include_self_community": True,
    },
    "train": {
        "lr": 0.005,
        "epoch": 15,
        "distill_epoch": 300,
        "distill_lr": 0.01,
        "seed": 0,
        "weight_decay": 0.0,
        "d_hidden": None,
    },
    "propagate": {"k_hop": 3, "sigma": "relu"},
    "eval": {
        "task": "classify",
        "seeds": list(range(10)),
        "per_class": 20,
        "valid": 500,
        "test": 1000,
        "probe_epochs": 300,
        "probe_lr": 0.1,
        "probe_weight_decay": 5e-4,
        "restarts": 10,
    },
}

DIGEST_EXCLUDED = ("eval",)


def _merge(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    out = copy.deepcopy(DEFAULTS)
    for section, values in raw.items():
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be an object")
        bad = set(values) - set(DEFAULTS[section])
        if bad:
            raise ConfigError(f"unknown keys in {section!r}: {sorted(bad)}")
        out[section].update(values)
    return out


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass
class RunConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "RunConfig":
        loss_raw = raw.get("loss", {}) if isinstance(raw, dict) else {}
        if isinstance(loss_raw, dict) and loss_raw.get("variant") == "tensor_product" and "alpha" in loss_raw:
            raise ConfigError("alpha is only meaningful for the linear_combination variant")
        data = _merge(raw)
        if data["loss"]["variant"] == "tensor_product":
            data["loss"]["alpha"] = None
        cfg = cls(data, Path(base_dir) if base_dir is not None else Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw, path.parent)

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    def validate(self) -> None:
        d = self.data
        ds = d["dataset"]
        _check(ds["format"] in ("files", "linqs"), f"unknown dataset format {ds['format']!r}")
        if ds["format"] == "files":
            _check(ds["edges"] is not None and ds["features"] is not None, "dataset needs edges and features")
        else:
            _check(ds["root"] is not None, "linqs dataset needs a root directory")
        part = d["partition"]
        _check(part["m"] is None or (isinstance(part["m"], int) and part["m"] >= 1), "partition.m must be >= 1")
        _check(0 < part["partition_rate"] <= 1, "partition_rate must be in (0, 1]")
        _check(part["normalization"] in ("raw", "row", "symmetric"), "bad partition.normalization")
        _check(part["weights"] in ("mean", "unit"), "bad partition.weights")
        enc = d["encoder"]
        _check(isinstance(enc["d"], int) and enc["d"] >= 1, "encoder.d must be a positive integer")
        _check(enc["d_p"] is None or (isinstance(enc["d_p"], int) and enc["d_p"] >= 1), "bad encoder.d_p")
        ls = d["loss"]
        _check(ls["variant"] in VARIANTS, f"unknown loss variant {ls['variant']!r}")
        _check(ls["feature_map"] in FEATURE_MAPS, f"unknown feature map {ls['feature_map']!r}")
        _check(ls["tau"] > 0, "tau must be positive")
        _check(0 <= ls["p"] < 1, "dropout p must be in [0, 1)")
        if ls["alpha"] is not None:
            _check(0 <= ls["alpha"] <= 1, "alpha must be in [0, 1]")
        tr = d["train"]
        _check(tr["lr"] > 0 and tr["distill_lr"] > 0, "learning rates must be positive")
        _check(tr["epoch"] >= 1 and tr["distill_epoch"] >= 1, "epoch counts must be >= 1")
        _check(tr["weight_decay"] >= 0, "weight_decay must be >= 0")
        pr = d["propagate"]
        _check(isinstance(pr["k_hop"], int) and pr["k_hop"] >= 1, "k_hop must be >= 1")
        _check(pr["sigma"] in ("identity", "relu", "prelu"), f"unknown sigma {pr['sigma']!r}")
        ev = d["eval"]
        _check(ev["task"] in ("classify", "cluster"), f"unknown eval task {ev['task']!r}")
        _check(len(ev["seeds"]) >= 1, "eval.seeds must be non-empty")

    def with_overrides(self, seed: int | None = None) -> "RunConfig":
        data = copy.deepcopy(self.data)
        if seed is not None:
            data["train"]["seed"] = int(seed)
        return RunConfig(data, self.base_dir)

    def path(self, key: str) -> Path | None:
        value = self.data["dataset"][key]
        if value is None:
            return None
        p = Path(value)
        p = p if p.is_absolute() else self.base_dir / p
        if not p.exists():
            raise InputError(f"dataset.{key} does not exist: {p}")
        return p

    def canonical(self) -> str:
        body = {k: v for k, v in self.data.items() if k not in DIGEST_EXCLUDED}
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical().encode("utf-8")).digest()

    def hexdigest(self) -> str:
        return self.digest().hex()

    def loss_config(self) -> LossConfig:
        ls = self.data["loss"]
        return LossConfig(
            variant=ls["variant"],
            alpha=0.5 if ls["alpha"] is None else float(ls["alpha"]),
            tau=float(ls["tau"]),
            feature_map=ls["feature_map"],
            include_self_community=bool(ls["include_self_community"]),
        )

    def train_config(self) -> TrainConfig:
        tr, enc = self.data["train"], self.data["encoder"]
        return TrainConfig(
            epochs=int(tr["epoch"]),
            lr=float(tr["lr"]),
            distill_epochs=int(tr["distill_epoch"]),
            distill_lr=float(tr["distill_lr"]),
            seed=int(tr["seed"]),
            loss=self.loss_config(),
            p=float(self.data["loss"]["p"]),
            k_hop=int(self.data["propagate"]["k_hop"]),
            d_g=int(enc["d"]),
            d_p=enc["d_p"],
            d_hidden=tr["d_hidden"],
            weight_decay=float(tr["weight_decay"]),
        )

    def to_json(self) -> dict:
        return copy.deepcopy(self.data)
