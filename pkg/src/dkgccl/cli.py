"""Command-line entry point and the end-to-end pipeline.

Every command takes ``--config`` and writes into ``<out>/<digest[:16]>/``:

    partition.txt, partition_report.json   partition
    encoder.bin, train_log.jsonl           train
    mlp.bin                                distill
    embeddings_gnn.bin, embeddings_mlp.bin embed
    metrics_<task>_<path>.json             eval

Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import bench
from .config import RunConfig
from .datasets import load_linqs, row_normalize
from .distill import final_representation, load_mlp, save_mlp
from .encoder import load_encoder, save_encoder
from .errors import ConfigError, DkgcclError, InputError
from .evaluator import (
    MetricsReport,
    accuracy,
    ari,
    kmeans,
    nmi,
    per_class_split,
    train_probe,
)
from .graph import SplitSpec, load_graph, load_labels, normalized_adjacency, write_matrix
from .partition import (
    assignment_weights,
    coarsen,
    load_partition,
    partition_graph,
    partition_rate_to_m,
    partition_report,
    save_partition,
)
from .trainer import JsonLinesLog, train_stage1, train_stage2

log = logging.getLogger("dkgccl")

ARTIFACTS = {
    "partition": "partition.txt",
    "partition_report": "partition_report.json",
    "encoder": "encoder.bin",
    "mlp": "mlp.bin",
    "log": "train_log.jsonl",
}


def _json_dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class Run:
    """Lazily loaded dataset plus the run directory for one config."""

    def __init__(self, cfg: RunConfig, out="runs"):
        self.cfg = cfg
        self.digest = cfg.digest()
        self.dir = Path(out) / cfg.hexdigest()[:16]
        self._graph = None
        self._labels = None
        self._split = None

    def path(self, key: str) -> Path:
        return self.dir / ARTIFACTS.get(key, key)

    def prepare(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        _json_dump(self.cfg.to_json(), self.dir / "config.json")

    def _load(self):
        ds = self.cfg["dataset"]
        if ds["format"] == "linqs":
            g, labels, _ = load_linqs(self.cfg.path("root"), ds["name"])
        else:
            g = load_graph(self.cfg.path("edges"), self.cfg.path("features"))
            lp = self.cfg.path("labels")
            labels = load_labels(lp) if lp is not None else None
            if labels is not None and len(labels) != g.n:
                raise InputError(f"label count {len(labels)} != node count {g.n}")
        if ds["row_normalize"]:
            g = g.with_features(row_normalize(g.features))
        sp_path = self.cfg.path("split")
        if sp_path is not None:
            self._split = SplitSpec.load(sp_path)
            self._split.validate(g.n)
        self._graph, self._labels = g, labels

    @property
    def graph(self):
        if self._graph is None:
            self._load()
        return self._graph

    @property
    def labels(self):
        if self._graph is None:
            self._load()
        if self._labels is None:
            raise InputError("evaluation requires dataset.labels")
        return self._labels

    # -- stages ------------------------------------------------------------

    def partition(self):
        g, pc = self.graph, self.cfg["partition"]
        if pc["file"] is not None:
            p = load_partition(self.cfg.base_dir / pc["file"], g.n, pc["weights"])
        else:
            m = pc["m"] if pc["m"] is not None else partition_rate_to_m(pc["partition_rate"], g.n)
            if m > g.n:
                raise ConfigError(f"partition.m={m} exceeds node count {g.n}")
            p = assignment_weights(partition_graph(g, m, seed=pc["seed"]), pc["weights"])
        save_partition(p, self.path("partition"))
        report = partition_report(g, p)
        _json_dump(report, self.path("partition_report"))
        return p

    def load_or_partition(self):
        pfile = self.path("partition")
        if pfile.exists():
            return load_partition(pfile, self.graph.n, self.cfg["partition"]["weights"])
        return self.partition()

    def train(self):
        g = self.graph
        p = self.load_or_partition()
        a_p = coarsen(g, p, self.cfg["partition"]["normalization"])
        logfile = self.path("log")
        logfile.unlink(missing_ok=True)
        params, trace = train_stage1(g, p, a_p, self.cfg.train_config(), log=JsonLinesLog(logfile))
        save_encoder(params, self.path("encoder"), self.digest)
        return params, trace

    def _checked_encoder(self):
        if not self.path("encoder").exists():
            raise InputError(f"missing encoder checkpoint {self.path('encoder')}; run `train` first")
        params, digest = load_encoder(self.path("encoder"))
        if digest != self.digest:
            raise ConfigError("encoder checkpoint was produced by a different config")
        return params

    def _checked_mlp(self):
        if not self.path("mlp").exists():
            raise InputError(f"missing MLP checkpoint {self.path('mlp')}; run `distill` first")
        mlp, digest = load_mlp(self.path("mlp"))
        if digest != self.digest:
            raise ConfigError("MLP checkpoint was produced by a different config")
        return mlp

    def distill(self):
        params = self._checked_encoder()
        mlp, trace = train_stage2(self.graph, params.W_G, self.cfg.train_config(), log=JsonLinesLog(self.path("log")))
        save_mlp(mlp, self.path("mlp"), self.digest)
        return mlp, trace

    def embed(self, path: str) -> np.ndarray:
        params = self._checked_encoder()
        pr = self.cfg["propagate"]
        if path == "mlp":
            z = final_representation(self.graph, params.W_G, self._checked_mlp(), activation=pr["sigma"]).Z_star
        elif path == "gnn":
            a_norm = normalized_adjacency(self.graph)
            z = final_representation(self.graph, params.W_G, None, pr["k_hop"], pr["sigma"], a_norm).Z_star
        else:
            raise ConfigError(f"unknown inference path {path!r}")
        write_matrix(self.dir / f"embeddings_{path}.bin", z, self.digest)
        return z

    def evaluate(self, task: str, path: str) -> MetricsReport:
        ev = self.cfg["eval"]
        z = self.embed(path)
        labels = self.labels
        report = MetricsReport(task=task, path=path, seeds=list(ev["seeds"]), config_digest=self.cfg.hexdigest())
        if task == "classify":
            accs, sizes = [], None
            for seed in ev["seeds"]:
                split = self._split or per_class_split(labels, ev["per_class"], ev["valid"], ev["test"], seed)
                probe = train_probe(
                    z, labels, split, epochs=ev["probe_epochs"], lr=ev["probe_lr"],
                    weight_decay=ev["probe_weight_decay"], num_classes=labels.num_classes,
                )
                accs.append(accuracy(probe, z, labels, split.test))
                sizes = {"train": int(split.train.size), "valid": int(split.valid.size), "test": int(split.test.size)}
            report.per_seed_accuracy = accs
            report.accuracy = float(np.mean(accs))
            report.accuracy_std = float(np.std(accs))
            report.split_sizes = sizes
        elif task == "cluster":
            res = kmeans(z, labels.num_classes, seed=ev["seeds"][0], restarts=ev["restarts"])
            report.nmi = nmi(labels.labels, res.assignment)
            report.ari = ari(labels.labels, res.assignment)
        else:
            raise ConfigError(f"unknown eval task {task!r}")
        ck = hashlib.sha256(self.path("encoder").read_bytes())
        if path == "mlp":
            ck.update(self.path("mlp").read_bytes())
        report.checkpoint_digest = ck.hexdigest()
        _json_dump(report.to_json(), self.dir / f"metrics_{task}_{path}.json")
        return report


def run_pipeline(cfg: RunConfig, out="runs") -> Run:
    """Partition, train, distill, embed both paths and evaluate both paths."""
    run = Run(cfg, out)
    run.prepare()
    run.partition()
    run.train()
    run.distill()
    task = cfg["eval"]["task"]
    for path in ("gnn", "mlp"):
        run.evaluate(task, path)
    return run


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dkgccl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override train.seed")
        p.add_argument("--out", default="runs", help="root directory for run folders")
        return p

    common(sub.add_parser("partition", help="partition the graph and write the community file"))
    common(sub.add_parser("train", help="stage 1: contrastive encoder training"))
    common(sub.add_parser("distill", help="stage 2: MLP distillation"))
    p = common(sub.add_parser("embed", help="write final representations"))
    p.add_argument("--path", choices=("gnn", "mlp"), default="mlp")
    p = common(sub.add_parser("eval", help="evaluate frozen representations"))
    p.add_argument("--task", choices=("classify", "cluster"), default=None)
    p.add_argument("--path", choices=("gnn", "mlp"), default="mlp")
    common(sub.add_parser("run", help="all stages end to end"))
    p = common(sub.add_parser("bench", help="timing harness on synthetic SBM graphs"), needs_config=False)
    p.add_argument("--n-grid", type=int, nargs="+", default=[20000, 40000, 80000])
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--mean-degree", type=float, default=12.0)
    p.add_argument("--naive-cap", type=int, default=20000)
    return parser


def _dispatch(args) -> dict:
    if args.command == "bench":
        report = bench(args.n_grid, d=args.d, mean_degree=args.mean_degree, naive_cap=args.naive_cap)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _json_dump(report.to_json(), out / "bench.json")
        return report.to_json()
    cfg = RunConfig.load(args.config).with_overrides(seed=args.seed)
    if args.command == "run":
        run = run_pipeline(cfg, args.out)
        return {"run_dir": str(run.dir), "digest": cfg.hexdigest()}
    run = Run(cfg, args.out)
    run.prepare()
    if args.command == "partition":
        p = run.partition()
        return {"run_dir": str(run.dir), "m": p.m}
    if args.command == "train":
        _, trace = run.train()
        return {"run_dir": str(run.dir), "final_loss": trace[-1]}
    if args.command == "distill":
        _, trace = run.distill()
        return {"run_dir": str(run.dir), "final_loss": trace[-1]}
    if args.command == "embed":
        z = run.embed(args.path)
        return {"run_dir": str(run.dir), "shape": list(z.shape)}
    if args.command == "eval":
        return run.evaluate(args.task or cfg["eval"]["task"], args.path).to_json()
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        result = _dispatch(args)
    except DkgcclError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        # argument errors surfacing from modules are treated as bad input
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 3
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
