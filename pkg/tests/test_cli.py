import csv
import json

import numpy as np
import pytest

from rlensemble.cli import main
from rlensemble.controller import PolicyModel
from rlensemble.forecasters import build_panel, load_model
from rlensemble.config import load_series, read_config

SMALL_FORECASTERS = [
    {"kind": "ar-least-squares", "lag_order": 3, "name": "linear"},
    {"kind": "feedforward-net", "lag_order": 3, "hyperparams": {"hidden": [4, 4], "epochs": 20}, "name": "ann"},
    {"kind": "recurrent-net", "lag_order": 3, "hyperparams": {"hidden": 2, "epochs": 5}, "name": "rnn"},
    {"kind": "bagged-trees", "lag_order": 3, "hyperparams": {"n_trees": 2, "max_depth": 3}, "name": "forest"},
]


def write_config(path, **extra):
    d = {
        "data": {"synth": {"kind": "cats-like", "seed": 0}},
        "split": {"kind": "cats"},
        "forecasters": SMALL_FORECASTERS,
        "rl": {"episodes": 10},
        "seeds": [0],
        "output_dir": str(path.parent / "out"),
    }
    d.update(extra)
    path.write_text(json.dumps(d), encoding="utf-8")
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "cfg.json")
    assert main(["train", "--config", str(cfg), "--out", str(root / "art")]) == 0
    return root, cfg, root / "art"


def test_train_writes_artifacts(trained):
    _, _, art = trained
    assert sorted(p.name for p in (art / "models").iterdir()) == ["ann.json", "forest.json", "linear.json", "rnn.json"]
    assert (art / "policy.json").exists()
    rows = read_csv(art / "episodes.csv")
    assert rows[0][:6] == ["episode", "step", "time_index", "raw_state", "bucket", "reward"]
    # episodes cycle over the five training blocks; the first loses lag_order steps
    assert len(rows) == 1 + 2 * 977 + 8 * 980
    manifest = json.loads((art / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["seed"] == [0]
    assert "policy.json" in manifest["outputs"] and manifest["config"]["rl"]["episodes"] == 10


def test_forecast_rl_gives_one_prediction_per_test_sample(trained):
    root, cfg, art = trained
    out = root / "fc_rl"
    before = (art / "policy.json").read_bytes()
    assert main(["forecast", "--config", str(cfg), "--artifacts", str(art), "--out", str(out)]) == 0
    rows = read_csv(out / "predictions.csv")[1:]
    assert len(rows) == 100
    assert [int(r[0]) for r in rows[:2]] == [981, 982]
    assert (out / "policy_updated.json").exists()
    assert (art / "policy.json").read_bytes() == before


def test_forecast_uniform_is_panel_average(trained):
    root, cfg, art = trained
    out = root / "fc_uni"
    assert main(["forecast", "--config", str(cfg), "--artifacts", str(art), "--out", str(out), "--strategy", "uniform"]) == 0
    rows = read_csv(out / "predictions.csv")[1:]
    conf = read_config(cfg)
    series, plan = load_series(conf.data, conf.split)
    models = [load_model(art / "models" / f"{d['name']}.json") for d in conf.forecasters]
    panel = build_panel(models, series, plan.test_indices)
    got = np.array([float(r[1]) for r in rows])
    assert np.allclose(got, panel.predictions.mean(axis=0), rtol=1e-14, atol=0)


def test_forecast_zero_rates_keep_policy(trained, tmp_path):
    root, _, art = trained
    cfg = write_config(tmp_path / "cfg.json", rl={"episodes": 10, "actor_lr": 0.0, "critic_lr": 0.0})
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["forecast", "--config", str(cfg), "--artifacts", str(tmp_path / "a"), "--out", str(tmp_path / "f")]) == 0
    before = PolicyModel.load(tmp_path / "a" / "policy.json").to_dict()
    after = PolicyModel.load(tmp_path / "f" / "policy_updated.json").to_dict()
    assert before == after


def test_forecast_static_and_online_nn(trained):
    root, cfg, art = trained
    for strategy in ("static", "online-nn", "single:linear"):
        out = root / f"fc_{strategy.replace(':', '_')}"
        assert main(["forecast", "--config", str(cfg), "--artifacts", str(art), "--out", str(out), "--strategy", strategy]) == 0
        assert len(read_csv(out / "predictions.csv")) == 101


def test_forecast_missing_artifact_is_io_error(trained, tmp_path, capsys):
    _, cfg, art = trained
    code = main(["forecast", "--config", str(cfg), "--artifacts", str(tmp_path / "nothing"), "--out", str(tmp_path / "o")])
    assert code == 4
    assert "linear.json" in capsys.readouterr().err


def test_invalid_bucket_count_fails_before_training(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", rl={"n_buckets": 0})
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o" / "models").exists()


def test_config_errors(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 4
    (tmp_path / "bad.json").write_text("{not json", encoding="utf-8")
    assert main(["train", "--config", str(tmp_path / "bad.json")]) == 2
    cfg = write_config(tmp_path / "cfg.json", surprise=1)
    assert main(["train", "--config", str(cfg)]) == 2
    cfg = write_config(tmp_path / "cfg2.json")
    assert main(["train", "--config", str(cfg), "--seed", "-1"]) == 2


def test_rerun_from_manifest_is_bit_identical(trained, tmp_path):
    _, _, art = trained
    manifest = art / "manifest.json"
    assert main(["train", "--config", str(manifest), "--out", str(tmp_path / "again")]) == 0
    for rel in ("policy.json", "episodes.csv", "models/rnn.json", "models/forest.json"):
        assert (tmp_path / "again" / rel).read_bytes() == (art / rel).read_bytes()


def test_compare_writes_report(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.json",
        data={"synth": {"kind": "regime-benchmark", "length": 400, "seed": 1}, "mask_test": False},
        split={"kind": "blocks", "period": 100, "test_length": 10},
        forecasters=SMALL_FORECASTERS[:1] + SMALL_FORECASTERS[3:],
        seeds=[0, 1],
        band_size=150,
    )
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    out = tmp_path / "c"
    report = json.loads((out / "report.json").read_text())
    assert report["strategies"]["rl"]["n"] == 2
    assert len(read_csv(out / "reward_curve.csv")) == 1 + 10
    bands = read_csv(out / "bands.csv")[1:]
    assert sum(r[0] == "0" for r in bands) == 3  # ceil(400 / 150)
    for name in ("report.txt", "predictions.csv", "reward_curve.svg", "predictions.svg", "timings.json", "manifest.json"):
        assert (out / name).exists()


def test_compare_proxy_feedback_is_labelled(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.json",
        data={"synth": {"kind": "regime-benchmark", "length": 400, "seed": 1}, "mask_test": False},
        split={"kind": "blocks", "period": 100, "test_length": 10},
        forecasters=SMALL_FORECASTERS[:1] + SMALL_FORECASTERS[3:],
        strategies=["rl", "uniform"],
    )
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "c"), "--feedback", "proxy"]) == 0
    report = json.loads((tmp_path / "c" / "report.json").read_text())
    assert report["strategies"]["rl"]["label"] == "rl (proxy-feedback)"


def test_synth_writes_series_and_truth(tmp_path):
    assert main(["synth", "--seed", "2", "--out", str(tmp_path / "s")]) == 0
    rows = read_csv(tmp_path / "s" / "series.csv")
    assert rows[0] == ["index", "value"] and len(rows) == 2001
