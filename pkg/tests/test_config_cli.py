import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hawkes_cascade import bounds
from hawkes_cascade.cli import apply_overrides, main, run
from hawkes_cascade.config import config_hash, load_config, parse_config, serialize
from hawkes_cascade.errors import ConfigError
from hawkes_cascade.reports import read_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

PAPER_DOC = {
    "model": {"populations": [
        {"eta": 3, "nu": 1.0, "n_neurons": 50, "rate": {"kind": "exp_sigmoid", "scale": 10, "threshold": 20}},
        {"eta": 2, "nu": 1.0, "n_neurons": 50, "rate": {"kind": "exp_sigmoid", "scale": 1, "threshold": 20}},
    ]},
    "run": {"mode": "sde", "delta": 0.1, "n_steps": 50},
}


def with_run(**run):
    doc = json.loads(json.dumps(PAPER_DOC))
    doc["run"] = run
    return doc


def write_doc(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


# ----------------------------------------------------------------- parsing


def test_defaults_resolved():
    doc = {"model": {"populations": [
        {"eta": 1, "nu": 1.0, "rate": {"kind": "constant", "value": 1.0}},
        {"eta": 2, "nu": 2.0, "rate": {"kind": "constant", "value": 2.0}},
    ]}, "run": {"mode": "bounds"}}
    cfg = parse_config(doc)
    assert [q.c for q in cfg.model.populations] == [-1, 1]
    assert cfg.run.seed == 0 and cfg.run.x0 is None
    assert [q.p for q in cfg.model.populations] == [0.5, 0.5]
    m = cfg.model.build()
    assert m.kappa == 5 and m.total_neurons == 100


def test_round_trip_identical():
    cfg = parse_config(PAPER_DOC)
    text = serialize(cfg)
    again = parse_config(text)
    assert serialize(again) == text
    assert config_hash(again) == config_hash(cfg)


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d["model"]["populations"][0].update(p=0.3) or d["model"]["populations"][1].update(p=0.6), "model"),
    (lambda d: d["model"]["populations"][0].update(nu=0.0), "model.populations.0.nu"),
    (lambda d: d["model"]["populations"][1]["rate"].update(scale=-1.0), "model.populations.1.rate"),
    (lambda d: d["run"].update(bogus=1), "run.bogus"),
    (lambda d: d["run"].update(x0=[0.0, 1.0]), "x0"),
    (lambda d: d["run"].pop("delta"), "run"),
    (lambda d: d["run"].update(mode="teleport"), "run.mode"),
])
def test_invalid_documents_name_the_key(mutate, where):
    doc = json.loads(json.dumps(PAPER_DOC))
    mutate(doc)
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        parse_config(doc)


def test_malformed_json():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("{not json")


def test_seed_precedence(monkeypatch):
    cfg = parse_config(with_run(mode="sde", delta=0.1, n_steps=5, seed=3))
    monkeypatch.delenv("SEED_OVERRIDE", raising=False)
    assert apply_overrides(cfg).run.seed == 3
    monkeypatch.setenv("SEED_OVERRIDE", "11")
    assert apply_overrides(cfg).run.seed == 11
    assert apply_overrides(cfg, seed=5).run.seed == 5
    monkeypatch.setenv("SEED_OVERRIDE", "x")
    with pytest.raises(ConfigError):
        apply_overrides(cfg)


# ----------------------------------------------------------------- running


def test_ode_run_row_count(tmp_path):
    cfg = parse_config(with_run(mode="ode", scheme="ode_strang", delta=0.01, n_steps=10_000,
                                out=str(tmp_path / "ode")))
    code, files = run(cfg)
    assert code == 0
    header, rows = read_csv(tmp_path / "ode" / "trajectory.csv")
    assert header[0] == "t" and len(header) == 1 + 7
    assert len(rows) == 10_001
    assert (tmp_path / "ode" / "trajectory.gp").exists()
    report = json.loads((tmp_path / "ode" / "run_report.json").read_text())
    assert report["config"] == json.loads(serialize(cfg))
    assert {"numpy", "scipy", "numba", "python"} <= set(report["versions"])


def test_bounds_csv_matches_library(tmp_path):
    cfg = apply_overrides(load_config(CONFIGS / "bounds_fig1.json"), out=str(tmp_path / "b"))
    run(cfg)
    header, rows = read_csv(tmp_path / "b" / "bounds.csv")
    assert header == ["t", "component", "lower", "upper", "order", "flavor"]
    m = cfg.model.build()
    times = np.arange(11.0)
    seen = 0
    for row in rows:
        if row[4] != "first" or row[5] != "continuous":
            continue
        k, j = map(int, row[1].split(","))
        lo, hi = bounds.first_moment_bounds(m, m.zeros(), k, j, times)
        i = int(float(row[0]))
        assert float(row[2]) == lo[i] and float(row[3]) == hi[i]
        seen += 1
    assert seen == 11 * 7


def test_csv_header_comments(tmp_path):
    cfg = parse_config(with_run(mode="sde", delta=0.1, n_steps=20, seed=4, out=str(tmp_path)))
    run(cfg)
    first = (tmp_path / "trajectory.csv").read_text().splitlines()[:2]
    assert first[0] == f"# config_hash={config_hash(cfg)}"
    assert first[1] == "# seed=4"


def test_same_seed_bit_identical(tmp_path):
    for name in ("a", "b"):
        run(parse_config(with_run(mode="pdmp", t_max=5.0, seed=9, out=str(tmp_path / name))))
    for f in ("spikes.csv", "events.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_sde_seed_changes_output(tmp_path):
    for name, seed in (("a", 1), ("b", 2)):
        run(parse_config(with_run(mode="sde", delta=0.1, n_steps=30, seed=seed, out=str(tmp_path / name))))
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "b" / "trajectory.csv").read_bytes()


# ----------------------------------------------------------------- entry point


def test_main_exit_codes(tmp_path, capsys):
    good = write_doc(tmp_path, with_run(mode="sde", delta=0.1, n_steps=10, out=str(tmp_path / "o")))
    assert main(["simulate-sde", "--config", str(good)]) == 0
    assert main(["bounds", "--config", str(good)]) == 2
    bad = write_doc(tmp_path, with_run(mode="sde", delta=-1.0, n_steps=10), "bad.json")
    assert main(["simulate-sde", "--config", str(bad)]) == 2
    assert "run.delta" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    boom = write_doc(tmp_path, with_run(mode="sde", scheme="em", delta=10.0, n_steps=80, noise_scale=0.0,
                                        x0=[1e306] * 7, out=str(tmp_path / "x")), "boom.json")
    assert main(["run", "--config", str(boom)]) == 3
    few = write_doc(tmp_path, with_run(mode="density", scheme="strang", delta=0.1, t_long=5.0,
                                       out=str(tmp_path / "d")), "few.json")
    assert main(["density", "--config", str(few)]) == 4


def test_cli_seed_flag_and_module_entry(tmp_path):
    cfg = write_doc(tmp_path, with_run(mode="sde", delta=0.1, n_steps=10, seed=1, out=str(tmp_path / "o")))
    proc = subprocess.run([sys.executable, "-m", "hawkes_cascade", "simulate-sde", "--config", str(cfg),
                           "--seed", "42", "--out", str(tmp_path / "p")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    report = json.loads((tmp_path / "p" / "run_report.json").read_text())
    assert report["seed"] == 42


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.json")):
        load_config(path)
