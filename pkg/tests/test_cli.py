import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fairdecide.biasgen import BiasConfig, generate, read_feature_csv
from fairdecide.cli import main
from fairdecide.core import ScoredPopulation, read_population_csv, write_population_csv


@pytest.fixture
def dataset(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 3000, "seed": 4, "beta_h_R": 2.0}))
    out = tmp_path / "d.csv"
    assert main(["generate", "--config", str(cfg), "--out", str(out), "--hidden", str(tmp_path / "h.csv")]) == 0
    return out


@pytest.fixture
def population(tmp_path):
    rng = np.random.default_rng(0)
    n = 400
    p = np.r_[rng.beta(2, 3, n), rng.beta(3, 2, n)]
    pop = ScoredPopulation(p, np.r_[np.zeros(n, int), np.ones(n, int)], (rng.random(2 * n) < p).astype(int))
    path = tmp_path / "pop.csv"
    write_population_csv(pop, path)
    return path


def test_generate_then_audit(dataset, capsys):
    manifest = json.loads(dataset.with_name("d.csv.manifest.json").read_text())
    assert manifest["subcommand"] == "generate"
    assert manifest["seed"] == 4 and manifest["config"]["beta_h_R"] == 2.0
    assert set(manifest["outputs"]) == {str(dataset), str(dataset.with_name("h.csv"))}
    assert main(["audit", "--data", str(dataset)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert set(rep["rates"]) == {"0", "1"}
    assert rep["differences"]["acceptance_rate"] > 0


def test_optimize_on_generated_data(dataset, tmp_path):
    out = tmp_path / "res.json"
    dec = tmp_path / "dec.csv"
    rc = main(["optimize", "--data", str(dataset), "--constraint", "ppv", "--alpha", "7", "--beta", "-3",
               "--out", str(out), "--decisions-out", str(dec)])
    assert rc == 0
    res = json.loads(out.read_text())
    assert res["residual"] <= res["eps"] + 1e-9
    assert json.loads(out.with_name("res.json.manifest.json").read_text())["subcommand"] == "optimize"
    with open(dec, newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 3000


def test_audit_with_decisions(population, tmp_path, capsys):
    dec = tmp_path / "dec.csv"
    assert main(["optimize", "--data", str(population), "--constraint", "sp", "--alpha", "1", "--beta", "-1",
                 "--decisions-out", str(dec)]) == 0
    capsys.readouterr()
    assert main(["audit", "--data", str(population), "--decisions", str(dec)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert abs(rep["differences"]["acceptance_rate"]) <= 0.005 + 1e-12


def test_pareto(population, tmp_path, capsys):
    out = tmp_path / "front.csv"
    assert main(["pareto", "--data", str(population), "--alpha", "1", "--beta", "-1",
                 "--weights", "0", "0", "1", "1", "--bins", "10", "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["candidates"] == 22 ** 2
    assert len(out.read_text().splitlines()) == info["points"] + 1


def test_sufftest(population, capsys):
    assert main(["sufftest", "--data", str(population), "--bins", "5"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert len(res["bins"]) == 5 and res["corrected_level"] == pytest.approx(0.01)


def test_adsim_and_loopsim(tmp_path):
    out = tmp_path / "ads"
    assert main(["adsim", "--scenario", "A", "--sweep", "0.2,0.5", "--repeats", "2", "--n", "100",
                 "--out", str(out)]) == 0
    assert (out / "cost_pct.csv").exists() and (out / "manifest.json").exists()
    loop = tmp_path / "loop"
    assert main(["loopsim", "--loop", "sampling", "--steps", "200", "--out", str(loop)]) == 0
    assert (loop / "sampling.csv").exists()


def test_custom_adsim(tmp_path):
    cfg = tmp_path / "ad.json"
    cfg.write_text(json.dumps({"alpha": 0.2, "beta": {"m": 0.03, "w": 0.1}, "sweep_param": "k_w",
                               "constraints": ["sp"]}))
    out = tmp_path / "ads"
    assert main(["adsim", "--scenario", "custom", "--config", str(cfg), "--sweep", "0.05,0.01",
                 "--repeats", "2", "--n", "100", "--out", str(out)]) == 0
    with open(out / "cost_pct.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["sweep_value"] for r in rows} == {"0.05", "0.01"}


def test_rerun_is_bit_identical(tmp_path):
    digests = []
    for k in range(2):
        out = tmp_path / f"d{k}.csv"
        assert main(["generate", "--seed", "9", "--n", "500", "--out", str(out)]) == 0
        digests.append(list(json.loads(out.with_name(f"d{k}.csv.manifest.json").read_text())["outputs"].values()))
    assert digests[0] == digests[1]


def test_dataset_round_trip(tmp_path):
    d = generate(BiasConfig(n=500, seed=2))
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    d.write_csv(first)
    back = read_feature_csv(first)
    with open(second, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "A", "R", "Q", "label"])
        for row in zip(back["id"], back["A"], back["R"], back["Q"], back["label"]):
            w.writerow([row[0], row[1], f"{row[2]:.6g}", row[3], row[4]])
    assert first.read_bytes() == second.read_bytes()


def test_population_round_trip(population, tmp_path):
    again = tmp_path / "again.csv"
    write_population_csv(read_population_csv(population), again)
    assert population.read_bytes() == again.read_bytes()


def test_missing_required_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["optimize", "--data", "x.csv"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_exits_2():
    proc = subprocess.run([sys.executable, "-m", "fairdecide", "loopsim", "--loop", "feature", "--bogus"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr


def test_io_failure_exits_1(tmp_path, capsys):
    assert main(["audit", "--data", str(tmp_path / "missing.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_bad_config_exits_1(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 10, "nonsense": 1}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.csv")]) == 1
    assert "nonsense" in capsys.readouterr().err


def test_infeasible_exits_1(tmp_path, capsys):
    path = tmp_path / "p.csv"
    write_population_csv(ScoredPopulation([0.2, 0.9], [0, 1]), path)
    assert main(["optimize", "--data", str(path), "--constraint", "ppv", "--alpha", "1", "--beta", "-1",
                 "--capacity", "5"]) == 1
    assert "error" in capsys.readouterr().err
