import csv
import json

import numpy as np
import pytest

from xmodel.cli import main
from xmodel.ingest import load_panel, save_auctions, save_exogenous, save_panel

from conftest import TOY_DEMAND, TOY_SUPPLY_A, constant_panel


@pytest.fixture(scope="module")
def toy_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("toy") / "panel.npz"
    save_panel(constant_panel(TOY_SUPPLY_A, TOY_DEMAND, 80), path)
    return path


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--days", "100", "--supply-classes", "3", "--demand-classes", "3", "--seed", "4", "--out", str(out)]) == 0
    return out


def read_forecast(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_writes_panel_and_truth(synth_dir):
    assert (synth_dir / "panel.npz").exists() and (synth_dir / "truth.npz").exists()
    summary = json.loads((synth_dir / "summary.json").read_text())
    assert summary["synthetic"] is True
    cfg = json.loads((synth_dir / "config.json").read_text())
    assert cfg["seed"] == 4 and cfg["command"] == "synth"
    assert load_panel(synth_dir / "panel.npz").n_days == 100


def test_synth_requires_seed(tmp_path):
    assert run("synth", "--days", 70, "--out", tmp_path) == 2


def test_ingest_csv_and_corrupt_row(tmp_path, capsys, small_synth):
    panel = small_synth.slice_days(0, 3)
    save_auctions(panel, tmp_path / "a.csv")
    save_exogenous(panel, tmp_path / "e.csv")
    assert run("ingest", tmp_path / "a.csv", "--exogenous", tmp_path / "e.csv", "--out", tmp_path / "o") == 0
    back = load_panel(tmp_path / "o" / "panel.npz")
    np.testing.assert_array_equal(back.series("price"), panel.series("price"))
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["days"] == 3 and summary["auctions"] == 72
    assert sum(summary["supply_distinct_prices"]["histogram"]["counts"]) == 72

    lines = (tmp_path / "a.csv").read_text().splitlines()
    lines[4] = lines[4].split(",")[0] + ",1,S,abc,1.0"
    (tmp_path / "bad.csv").write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert run("ingest", tmp_path / "bad.csv", "--out", tmp_path / "o2") == 2
    assert "line 5" in capsys.readouterr().err


def test_ingest_missing_file(tmp_path):
    assert run("ingest", tmp_path / "nope.csv", "--out", tmp_path) == 2


def test_fit_is_byte_identical(tmp_path, synth_dir):
    args = ["fit", "--panel", synth_dir / "panel.npz", "--target", 99, "--window-days", 80, "--v-star", 700]
    assert run(*args, "--out", tmp_path / "a", "--threads", 1) == 0
    assert run(*args, "--out", tmp_path / "b", "--threads", 3) == 0
    assert (tmp_path / "a" / "models.npz").read_bytes() == (tmp_path / "b" / "models.npz").read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    k = summary["supply_classes"] + summary["demand_classes"]
    assert summary["models"] == 24 * k
    with open(tmp_path / "a" / "fit_report.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 24 * k
    assert (tmp_path / "a" / "partition.csv").read_text().startswith("side,index,bound\n")


def test_fit_window_too_short(tmp_path, synth_dir):
    assert run("fit", "--panel", synth_dir / "panel.npz", "--target", 50, "--window-days", 40, "--out", tmp_path) == 3
    assert run("fit", "--panel", synth_dir / "panel.npz", "--target", 30, "--window-days", 40, "--out", tmp_path) == 3


def test_forecast_toy_fixture(tmp_path, toy_file):
    base = ["forecast", "--panel", toy_file, "--target", 79, "--window-days", 75, "--v-star", 400]
    assert run(*base, "--B", 0, "--out", tmp_path / "p") == 0
    rows = read_forecast(tmp_path / "p" / "forecast.csv")
    assert len(rows) == 24
    assert all(r["point_price"] == "1.60" for r in rows)
    assert all(r["q0.5"] == "" for r in rows)  # point-only report
    assert run(*base, "--B", 50, "--seed", 9, "--out", tmp_path / "q") == 0
    rows = read_forecast(tmp_path / "q" / "forecast.csv")
    assert all(r["q0.05"] == "1.60" and r["q0.95"] == "1.60" for r in rows)


def test_forecast_seed_required_only_with_draws(tmp_path, toy_file):
    base = ["forecast", "--panel", toy_file, "--target", 79, "--window-days", 75, "--v-star", 400]
    assert run(*base, "--B", 10, "--out", tmp_path) == 2
    assert run(*base, "--B", 0, "--out", tmp_path) == 0


def test_forecast_fixed_seed_identical(tmp_path, synth_dir):
    base = ["forecast", "--panel", synth_dir / "panel.npz", "--target", 99, "--window-days", 80, "--v-star", 700, "--B", 100]
    assert run(*base, "--seed", 1, "--out", tmp_path / "a") == 0
    assert run(*base, "--seed", 1, "--out", tmp_path / "b") == 0
    assert run(*base, "--seed", 2, "--out", tmp_path / "c") == 0
    a, b, c = ((tmp_path / x / "forecast.csv").read_text() for x in "abc")
    assert a == b and a != c
    assert (tmp_path / "a" / "curves.csv").read_bytes() == (tmp_path / "b" / "curves.csv").read_bytes()


def test_forecast_from_saved_models(tmp_path, synth_dir):
    common = ["--panel", synth_dir / "panel.npz", "--target", 99, "--window-days", 80, "--v-star", 700]
    assert run("fit", *common, "--out", tmp_path / "fit") == 0
    assert run("forecast", *common, "--B", 0, "--out", tmp_path / "a") == 0
    assert run("forecast", *common, "--B", 0, "--models", tmp_path / "fit" / "models.npz", "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "forecast.csv").read_text() == (tmp_path / "b" / "forecast.csv").read_text()
    bad = ["forecast", "--panel", synth_dir / "panel.npz", "--target", 98, "--window-days", 80, "--v-star", 700]
    assert run(*bad, "--B", 0, "--models", tmp_path / "fit" / "models.npz", "--out", tmp_path / "c") == 2


def test_forecast_missing_planned_data(tmp_path, small_synth):
    wind = small_synth.series("wind").copy()
    wind[-1, 5] = np.nan
    path = tmp_path / "p.npz"
    save_panel(small_synth.with_exogenous(wind=wind), path)
    assert run("forecast", "--panel", path, "--target", small_synth.n_days - 1, "--window-days", 80,
               "--v-star", 700, "--B", 0, "--out", tmp_path / "o") == 4
    assert run("forecast", "--panel", path, "--target", small_synth.n_days + 3, "--window-days", 80,
               "--B", 0, "--out", tmp_path / "o") in (2, 4)


def test_evaluate_oracle_and_persistent(tmp_path, synth_dir):
    assert run("evaluate", "--panel", synth_dir / "panel.npz", "--start", 90, "--stop", 100,
               "--models", "persistent,oracle,ar24", "--out", tmp_path, "--seed", 0, "--window-days", 80) == 0
    with open(tmp_path / "scores.csv") as fh:
        rows = {r["model"]: r for r in csv.DictReader(fh)}
    assert rows["oracle"]["mae"] == "0.0000" and rows["oracle"]["rmse"] == "0.0000"
    assert rows["persistent"]["mae_pct"] == "100.0"
    assert (tmp_path / "coverage_persistent.csv").exists()
    assert (tmp_path / "scores_hourly.csv").exists()


def test_evaluate_bad_model_name(tmp_path, synth_dir):
    assert run("evaluate", "--panel", synth_dir / "panel.npz", "--models", "nope", "--seed", 0, "--out", tmp_path) == 2


def test_config_file_and_flag_precedence(tmp_path, toy_file):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"panel": str(toy_file), "target": 79, "window_days": 75, "v_star": 400, "B": 0, "seed": 3}))
    assert run("--config", cfg, "forecast", "--seed", 5, "--out", tmp_path / "o") == 0
    echoed = json.loads((tmp_path / "o" / "config.json").read_text())
    assert echoed["seed"] == 5 and echoed["window_days"] == 75
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("forecast", "--config", cfg, "--out", tmp_path / "o") == 2
