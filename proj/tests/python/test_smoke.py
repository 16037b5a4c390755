import json
import math

import pytest

import selfcf

SMALL = {"train.max_epochs": 2, "model.dim": 8, "data.synthetic.users": 40, "data.synthetic.items": 24}


def test_version_and_defaults():
    assert selfcf.__version__ == "0.1.0"
    cfg = selfcf.default_config()
    assert cfg["model"]["framework"] == "selfcf_ed"
    assert cfg["eval"]["ks"] == [20, 50]


def test_resolve_and_hash():
    tree = selfcf.resolve_config(overrides={"perturbation.tau": 0.3}, seed=9)
    assert tree["seed"] == 9
    moved = dict(tree, out="elsewhere")
    assert selfcf.config_hash(tree) == selfcf.config_hash(moved)
    with pytest.raises(selfcf.ConfigError):
        selfcf.resolve_config(overrides={"model.framework": "selfcf_ep", "model.backbone": "mf"})
    with pytest.raises(selfcf.Error):
        selfcf.resolve_config(overrides={"model.nope": 1})


def test_metrics():
    assert selfcf.top_k([0.1, 0.9, 0.9, -1.0], 3) == [1, 2, 0]
    assert selfcf.recall_at_k([3, 1, 2], [1, 5], 2) == 0.5
    assert selfcf.ndcg_at_k([3, 1, 2], [1], 3) == pytest.approx(1.0 / math.log2(3.0))
    assert selfcf.count_parameters(6040, 3706) == 627904


def test_train_evaluate_roundtrip(tmp_path):
    rep = selfcf.train(tmp_path / "run", overrides=SMALL, seed=4)
    assert rep["seed"] == 4
    assert 0.0 <= rep["metrics"]["recall@20"] <= 1.0
    on_disk = json.loads((tmp_path / "run" / "report.json").read_text())
    assert on_disk["metrics"] == rep["metrics"]
    ev = selfcf.evaluate(tmp_path / "run", overrides=SMALL, seed=4)
    assert ev["metrics"] == rep["metrics"]


def test_sweep_and_ablate(tmp_path):
    rows = selfcf.sweep("layers", [1, 2], tmp_path / "sw", overrides=SMALL)
    assert {r["axis"] for r in rows} == {"model.layers"}
    assert len(rows) == 8
    ab = selfcf.ablate(tmp_path / "ab", overrides=dict(SMALL, **{"train.max_epochs": 0}))
    assert ab[0]["variant"] == "baseline"
    assert len(ab) == 7
