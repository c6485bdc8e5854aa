import json
import shutil

import numpy as np
import pytest

import dkgccl.trainer as trainer_mod
from conftest import FIXTURE_DIR
from dkgccl.cli import main, run_pipeline
from dkgccl.config import RunConfig
from dkgccl.errors import ConfigError, InputError
from dkgccl.graph import read_matrix_with_digest

ARTIFACT_KINDS = {
    "partition": ["partition.txt"],
    "checkpoint": ["encoder.bin", "mlp.bin"],
    "embedding": ["embeddings_gnn.bin", "embeddings_mlp.bin"],
    "metrics": ["metrics_classify_gnn.json", "metrics_classify_mlp.json"],
    "log": ["train_log.jsonl"],
}


def fixture_raw():
    return json.loads((FIXTURE_DIR / "config.json").read_text())


def copy_fixture(tmp_path, **section_updates):
    raw = fixture_raw()
    for section, values in section_updates.items():
        raw.setdefault(section, {}).update(values)
    d = tmp_path / "data"
    shutil.copytree(FIXTURE_DIR, d)
    (d / "config.json").write_text(json.dumps(raw))
    return d / "config.json"


# -- config ------------------------------------------------------------------------------


def test_alpha_under_tensor_product_rejected():
    raw = fixture_raw()
    raw["loss"] = {"variant": "tensor_product", "alpha": 0.5}
    with pytest.raises(ConfigError):
        RunConfig.from_dict(raw, FIXTURE_DIR)


def test_tensor_product_without_alpha_accepted():
    raw = fixture_raw()
    raw["loss"] = {"variant": "tensor_product"}
    cfg = RunConfig.from_dict(raw, FIXTURE_DIR)
    assert cfg["loss"]["alpha"] is None


@pytest.mark.parametrize(
    "patch",
    [
        {"train": {"epoch": 0}},
        {"loss": {"tau": 0}},
        {"loss": {"p": 1.0}},
        {"propagate": {"sigma": "tanh"}},
        {"partition": {"normalization": "laplacian"}},
        {"bogus": {}},
        {"train": {"learning_rate": 0.1}},
    ],
)
def test_schema_errors(patch):
    raw = fixture_raw()
    for k, v in patch.items():
        raw.setdefault(k, {}).update(v)
    with pytest.raises(ConfigError):
        RunConfig.from_dict(raw, FIXTURE_DIR)


def test_digest_ignores_eval_but_tracks_training():
    a = RunConfig.from_dict(fixture_raw(), FIXTURE_DIR)
    raw = fixture_raw()
    raw["eval"]["seeds"] = [5]
    assert RunConfig.from_dict(raw, FIXTURE_DIR).hexdigest() == a.hexdigest()
    assert a.with_overrides(seed=9).hexdigest() != a.hexdigest()


def test_missing_dataset_file_is_input_error(tmp_path):
    cfg = RunConfig.from_dict({"dataset": {"edges": "nope.txt", "features": "x.csv"}}, tmp_path)
    with pytest.raises(InputError):
        cfg.path("edges")


# -- pipeline --------------------------------------------------------------------------------


def test_pipeline_writes_all_artifact_kinds(tmp_path):
    run = run_pipeline(RunConfig.load(FIXTURE_DIR / "config.json"), tmp_path / "runs")
    for kind, names in ARTIFACT_KINDS.items():
        for name in names:
            assert (run.dir / name).exists(), (kind, name)
    cfg = RunConfig.load(FIXTURE_DIR / "config.json")
    assert run.dir.name == cfg.hexdigest()[:16]
    _, digest = read_matrix_with_digest(run.dir / "embeddings_mlp.bin")
    assert digest == cfg.digest()
    metrics = json.loads((run.dir / "metrics_classify_gnn.json").read_text())
    assert metrics["config_digest"] == cfg.hexdigest()
    assert 0.0 <= metrics["accuracy"] <= 1.0
    assert metrics["split_sizes"] == {"train": 40, "valid": 40, "test": 100}


def test_rerun_is_byte_identical(tmp_path):
    cfg = RunConfig.load(FIXTURE_DIR / "config.json")
    a = run_pipeline(cfg, tmp_path / "a")
    b = run_pipeline(cfg, tmp_path / "b")
    for names in ARTIFACT_KINDS.values():
        for name in names:
            if name.endswith(".jsonl"):
                continue
            assert (a.dir / name).read_bytes() == (b.dir / name).read_bytes(), name


def test_cli_stagewise_and_cluster(tmp_path, capsys):
    cfg = str(FIXTURE_DIR / "config.json")
    out = str(tmp_path / "runs")
    for cmd in (["partition"], ["train"], ["distill"], ["embed", "--path", "gnn"], ["embed", "--path", "mlp"]):
        assert main([*cmd, "--config", cfg, "--out", out]) == 0
    assert main(["eval", "--config", cfg, "--out", out, "--task", "cluster", "--path", "gnn"]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert 0.0 <= report["nmi"] <= 1.0 and -1.0 <= report["ari"] <= 1.0
    report_file = json.loads((tmp_path / "runs").glob("*/partition_report.json").__next__().read_text())
    assert set(report_file) == {"m", "edge_cut", "sizes"} and report_file["m"] == 16


def test_eval_refuses_mismatched_checkpoint(tmp_path, capsys):
    cfg = str(FIXTURE_DIR / "config.json")
    out = tmp_path / "runs"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    base = RunConfig.load(cfg)
    other = base.with_overrides(seed=1)
    other_dir = out / other.hexdigest()[:16]
    other_dir.mkdir()
    for name in ("encoder.bin", "mlp.bin"):
        shutil.copy(out / base.hexdigest()[:16] / name, other_dir / name)
    code = main(["eval", "--config", cfg, "--out", str(out), "--seed", "1"])
    assert code == 2
    assert "different config" in capsys.readouterr().err


def test_exit_codes(tmp_path, capsys):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    assert main(["train", "--config", str(bad_json), "--out", str(tmp_path)]) == 2
    tp_alpha = copy_fixture(tmp_path / "a", loss={"variant": "tensor_product", "alpha": 0.3})
    assert main(["run", "--config", str(tp_alpha), "--out", str(tmp_path)]) == 2
    missing = copy_fixture(tmp_path / "b", dataset={"edges": "missing.txt"})
    assert main(["partition", "--config", str(missing), "--out", str(tmp_path)]) == 3
    bad_edges = copy_fixture(tmp_path / "c")
    (bad_edges.parent / "edges.txt").write_text("0 999\n")
    assert main(["partition", "--config", str(bad_edges), "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert all(json.loads(line)["error"] for line in err)


def test_numerical_error_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise trainer_mod.NumericalError("non-finite gradient in dW_G")

    monkeypatch.setattr(trainer_mod, "loss_and_grad", boom)
    assert main(["train", "--config", str(FIXTURE_DIR / "config.json"), "--out", str(tmp_path)]) == 4


def test_external_partition_file(tmp_path):
    cfgp = copy_fixture(tmp_path, partition={"file": "communities.txt"})
    ids = np.arange(200) // 25 * 10  # 8 communities with sparse ids
    (cfgp.parent / "communities.txt").write_text("".join(f"{i}\n" for i in ids))
    assert main(["partition", "--config", str(cfgp), "--out", str(tmp_path / "runs")]) == 0
    report = json.loads(next((tmp_path / "runs").glob("*/partition_report.json")).read_text())
    assert report["m"] == 8


def test_bench_command(tmp_path):
    code = main(["bench", "--out", str(tmp_path), "--n-grid", "500", "1000", "--d", "8", "--naive-cap", "1000"])
    assert code == 0
    rep = json.loads((tmp_path / "bench.json").read_text())
    assert len(rep["loss_fast_s"]) == 2 and all(t > 0 for t in rep["loss_naive_s"])
