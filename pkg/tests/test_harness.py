import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from poisonlab.errors import ConfigurationError
from poisonlab.harness import cli
from poisonlab.harness.config import OUTPUT_ENV, config_from_dict, load_config
from poisonlab.harness.runner import Cell, Context, report, run_cell, run_experiment, sweep
from poisonlab.ldp import perturb_dataset

SMALL = {
    "seed": 5,
    "seeds": 2,
    "dataset": {"n": 20, "history": 90, "monitor": 48},
    "attack": {"modes": ["dipa", "drpa", "ropa"], "ratios": [0.0, 0.2], "targets": ["temperature"]},
    "detector": {"ell": 6, "B": 100, "calibration_replicas": 3},
    "miner": {"samples": 3},
    "classifier": {"trees": 8},
    "identification": {"ell": 6},
    "sweep": {"epsilons": [1.0, 2.0], "window_lengths": [2, 6], "ratio": 0.2},
}


def small(tmp_path, **over):
    d = json.loads(json.dumps(SMALL))
    for k, v in over.items():
        d[k] = {**d.get(k, {}), **v} if isinstance(v, dict) else v
    d["output_dir"] = str(tmp_path / "out")
    return config_from_dict(d)


def write_yaml(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data), encoding="utf-8")
    return p


# ---------------------------------------------------------------- config

def test_seed_is_mandatory():
    with pytest.raises(ConfigurationError, match="seed"):
        config_from_dict({"dataset": {}})


@pytest.mark.parametrize("bad", [
    {"seed": 1, "bogus": 1},
    {"seed": 1, "attack": {"ratios": [0.6]}},
    {"seed": 1, "attack": {"modes": ["nope"]}},
    {"seed": 1, "detector": {"ell": 2}},
    {"seed": 1, "dataset": {"colour": "red"}},
    {"seed": -1},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigurationError):
        config_from_dict(bad)


def test_default_ratio_grid():
    cfg = config_from_dict({"seed": 0})
    assert cfg.attack.ratios[0] == 0.0 and cfg.attack.ratios[-1] == 0.5 and len(cfg.attack.ratios) == 51
    assert cfg.ldp.epsilon == 1.0 and cfg.ldp.delta == 0.95


def test_unknown_target_attribute(tmp_path):
    cfg = small(tmp_path, attack={"targets": ["nowhere"]})
    with pytest.raises(ConfigurationError):
        run_experiment(cfg)


def test_env_overrides_output_dir(tmp_path, monkeypatch):
    p = write_yaml(tmp_path, {"seed": 1, "output_dir": "elsewhere"})
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert load_config(p).output_dir == str(tmp_path / "env")
    monkeypatch.delenv(OUTPUT_ENV)
    assert load_config(p).output_dir == "elsewhere"


def test_malformed_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("seed: [1\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_config(p)


# ---------------------------------------------------------------- runs

@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    art = run_experiment(small(tmp))
    return tmp, art


def test_run_writes_one_artifact_per_cell(run_dir):
    tmp, art = run_dir
    assert not art.failures
    assert len(art.cells) == 3 * 2 * 2
    assert len(list((tmp / "out" / "cells").glob("*.json"))) == 12
    assert (tmp / "out" / "timing.json").exists()


def test_null_cells_identify_all_clean(run_dir):
    _, art = run_dir
    for doc in art.cells:
        if doc["cell"]["ratio"] == 0.0:
            assert doc["identification"]["predicted"] == []
            assert doc["identification"]["f2"] == 1.0
            assert doc["attack"]["poisoned"] == []


def test_rerun_is_byte_identical(run_dir, tmp_path):
    tmp, art = run_dir
    again = run_experiment(small(tmp_path))
    first = {p.name: p.read_bytes() for p in art.paths}
    second = {p.name: p.read_bytes() for p in again.paths}
    assert first == second


def test_clean_cell_matches_direct_detection(tmp_path):
    cfg = small(tmp_path)
    ctx = Context(cfg, 0, 1.0)
    doc = run_cell(ctx, Cell("drpa", 0.0, 0, 0, 1.0, 6))
    clean = perturb_dataset(ctx.monitor, ctx.ldp, np.random.default_rng(ctx.noise_seed))
    direct = Context(cfg, 0, 1.0).detector().score(clean).to_dict()
    assert json.dumps(doc["detection"]["report"], sort_keys=True) == json.dumps(direct, sort_keys=True)


def test_failed_cells_are_recorded(tmp_path):
    cfg = small(tmp_path, dataset={"monitor": 5}, seeds=1, attack={"modes": ["dipa"], "ratios": [0.2]})
    art = run_experiment(cfg)
    assert len(art.failures) == 1 and not art.cells
    assert art.failures[0]["cell"]["mode"] == "dipa" and "error" in art.failures[0]


# ---------------------------------------------------------------- sweeps and reports

def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_ratio_sweep_row_count(tmp_path):
    cfg = small(tmp_path, seeds=1)
    _, path = sweep(cfg, "attack_ratio")
    rows = read_rows(path)
    assert rows[0][:5] == ["x", "metric", "mode", "attribute", "seed"]
    assert len(rows) - 1 == len(cfg.attack.ratios) * len(cfg.attack.modes) * cfg.seeds * 3


def test_epsilon_sweep_reproducible(tmp_path):
    cfg = small(tmp_path, seeds=1, attack={"modes": ["drpa"]})
    _, a = sweep(cfg, "epsilon")
    first = a.read_bytes()
    _, b = sweep(cfg, "epsilon")
    assert first == b.read_bytes()
    assert {r[0] for r in read_rows(a)[1:]} == {"1.0", "2.0"}


def test_unknown_sweep_dimension(tmp_path):
    with pytest.raises(ConfigurationError):
        sweep(small(tmp_path), "temperature")


def test_report_json_and_text_agree(run_dir):
    tmp, _ = run_dir
    out = tmp / "out"
    summary = report(out)
    text = (out / "report.txt").read_text(encoding="utf-8").splitlines()
    js = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert js == json.loads(json.dumps(summary))
    assert len(text) == 1 + len(js["rows"])
    for line, row in zip(text[1:], js["rows"]):
        fields = line.split("\t")
        assert fields[0] == row["mode"] and float(fields[2]) == row["ratio"]
        m, s = fields[5].split("±")
        assert (float(m), float(s)) == tuple(row["estimated_ratio"])


def test_report_of_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert cli.main(["report", str(tmp_path / "empty")]) == 0
    assert report(tmp_path / "empty") == {"rows": []}


# ---------------------------------------------------------------- CLI

def test_cli_run_and_exit_codes(tmp_path, monkeypatch):
    data = json.loads(json.dumps(SMALL))
    data.update(seeds=1, attack={"modes": ["dipa"], "ratios": [0.2], "targets": ["temperature"]})
    good = write_yaml(tmp_path, data)
    assert cli.main(["run", str(good), "--output-dir", str(tmp_path / "a")]) == 0
    assert len(list((tmp_path / "a" / "cells").glob("*.json"))) == 1

    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "b"))
    assert cli.main(["run", str(good)]) == 0
    assert (tmp_path / "b" / "run.json").exists()

    bad = write_yaml(tmp_path, {"dataset": {}}, "bad.yaml")
    assert cli.main(["run", str(bad)]) == 1
    assert cli.main(["sweep", str(good), "--dim", "nope"]) == 1
    assert cli.main(["frobnicate"]) == 1

    data["dataset"] = {**data["dataset"], "monitor": 5}
    short = write_yaml(tmp_path, data, "short.yaml")
    assert cli.main(["run", str(short), "--output-dir", str(tmp_path / "c")]) == 2


def test_detection_only_cells_skip_identification(tmp_path):
    cfg = small(tmp_path, seeds=1, attack={"modes": ["ropa"], "ratios": [0.2]}, identification={"attribute": "none"})
    art = run_experiment(cfg)
    assert art.cells and all(c["identification"] == {"attribute": None, "skipped": True} for c in art.cells)
    row = report(cfg.output_dir)["rows"][0]
    assert row["identification_f2"] is None and row["estimated_ratio"] is None
    assert row["true_ratio"][0] == pytest.approx(0.2)
    assert "\t-\t" in (Path(cfg.output_dir) / "report.txt").read_text(encoding="utf-8")


def test_window_cells_share_features_but_match_fresh_runs(tmp_path):
    cfg = small(tmp_path)
    shared = Context(cfg, 0, 1.0)
    first = run_cell(shared, Cell("dipa", 0.2, 0, 0, 1.0, 6))
    again = run_cell(shared, Cell("dipa", 0.2, 0, 0, 1.0, 4))
    fresh = run_cell(Context(cfg, 0, 1.0), Cell("dipa", 0.2, 0, 0, 1.0, 4))
    assert len(shared.features) == 1
    assert json.dumps(again, sort_keys=True) == json.dumps(fresh, sort_keys=True)
    assert first["identification"]["attribute"] == "temperature"
