"""Regenerate the bundled 200-node SBM fixture under tests/fixtures/sbm200."""
import argparse
import json
from pathlib import Path

import numpy as np

from dkgccl.datasets import sbm_graph
from dkgccl.graph import save_graph, write_matrix

CONFIG = {
    "dataset": {"edges": "edges.txt", "features": "features.csv", "labels": "labels.csv"},
    "partition": {"m": 16, "seed": 0},
    "encoder": {"d": 16},
    "loss": {"variant": "linear_combination", "alpha": 0.6, "tau": 0.5, "p": 0.1},
    "train": {"lr": 0.01, "epoch": 20, "distill_epoch": 100, "seed": 0},
    "propagate": {"k_hop": 2, "sigma": "relu"},
    "eval": {"task": "classify", "seeds": [0, 1, 2], "per_class": 10, "valid": 40, "test": 100, "probe_epochs": 100},
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "sbm200"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g, labels = sbm_graph([50] * 4, 0.16, 0.01, feature_dim=12, signal=0.6, seed=7)
    save_graph(g, out / "edges.txt", out / "features.csv")
    write_matrix(out / "labels.csv", labels.labels[:, None].astype(np.float64))
    (out / "config.json").write_text(json.dumps(CONFIG, indent=2) + "\n")
    print(f"wrote n={g.n}, |E|={g.num_edges} to {out}")


if __name__ == "__main__":
    main()
