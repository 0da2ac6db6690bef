import csv
import json
import math
from dataclasses import replace

import pytest

from sparsenav.citygen import ConfigError, MapParams
from sparsenav.cli import main
from sparsenav.estimator import NoiseConfig
from sparsenav.harness import (LOST, REACHED, TIMEOUT, TRIAL_FIELDS, ScenarioConfig, StudyGrid,
                               TrialRecord, config_from_dict, load_config, percentile,
                               range_at_success, read_trials_csv, run_landmark_study,
                               run_range_study, run_route, run_trial, success_by_range, summarize,
                               trial_seed, write_study, write_trials_csv)
from sparsenav.navigator import HYBRID, LANDMARK_TO_LANDMARK


def rec(outcome, man=1000.0, euc=800.0, **kw):
    return TrialRecord(1, outcome, man, euc, 10.0, 0, 3, **kw)


# --- configuration -----------------------------------------------------------------------

def test_config_from_dict_sections():
    cfg = config_from_dict({"seed": 5, "landmark_density": 1.5,
                            "map": {"area_km2": 9.0, "block_range": [60, 200]},
                            "noise": {"compass_2sigma_deg": 20},
                            "strategy": {"kind": "hybrid"},
                            "study": {"densities": [1]}})
    assert cfg.seed == 5 and cfg.map.block_range == (60, 200)
    assert cfg.noise.compass_2sigma == pytest.approx(math.radians(20))
    assert cfg.strategy.kind == HYBRID


def test_config_no_compass():
    assert config_from_dict({"noise": {"compass_2sigma_deg": None}}).noise.compass_sigma is None


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"map": {"area": 3}},
    {"detection_rate": 1.5},
    {"landmark_density": -1},
    {"strategy": {"kind": "wander"}},
    {"scene_mode": "psychic"},
    {"area_range_km2": [0.5, 10]},
])
def test_config_rejects(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_load_config_round_trip(tmp_path):
    cfg = ScenarioConfig(seed=9, landmark_density=2.0)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg


# --- trials ---------------------------------------------------------------------------------

def test_trial_deterministic():
    cfg = ScenarioConfig(seed=21, landmark_density=2.0, strategy=replace(
        ScenarioConfig().strategy, kind=LANDMARK_TO_LANDMARK))
    assert run_trial(cfg) == run_trial(cfg)
    assert run_trial(cfg, cell=1) == run_trial(cfg, cell=1)


def test_zero_noise_reaches_goal():
    cfg = ScenarioConfig(seed=3, noise=NoiseConfig.zero(), landmark_density=5.0)
    r = run_trial(cfg)
    assert r.outcome == REACHED
    assert r.final_axis_m == pytest.approx(0.0, abs=1e-9)
    assert r.manhattan_m >= r.euclidean_m - cfg.strategy.goal_radius


def test_no_compass_gets_lost_quickly():
    outs = [run_trial(ScenarioConfig(seed=s, noise=NoiseConfig(compass_2sigma=None)))
            for s in range(10)]
    lost = [r for r in outs if r.outcome == LOST]
    assert len(lost) >= 5
    assert all(50 < r.manhattan_m < 1500 for r in lost)
    assert all(r.final_axis_m > 100 for r in lost)


def test_trace_collects_steps(tmp_path):
    trace = {}
    r = run_trial(ScenarioConfig(seed=3), trace=trace)
    assert len(trace["steps"]) == r.steps
    assert len(trace["decisions"]) == r.decisions
    step = trace["steps"][-1]
    assert {"mean", "cov_upper", "major_axis_m", "lost", "truth"} <= set(step)


def test_timeout_budget():
    r = run_trial(ScenarioConfig(seed=3, timeout_steps=50))
    assert r.outcome == TIMEOUT and r.steps == 50


def test_trial_seed_stable():
    assert trial_seed(0, 0) == trial_seed(0, 0)
    assert len({trial_seed(0, t) for t in range(100)}) == 100
    assert 0 <= trial_seed(2 ** 40, 7) < 2 ** 63


def test_route_lengths_match():
    cfg = ScenarioConfig(seed=2, map=MapParams(area_km2=64.0), noise=NoiseConfig(
        compass_2sigma=math.radians(20)))
    straight = run_route(cfg, turns=False, length=2000.0)
    staircase = run_route(cfg, turns=True, length=2000.0, leg=300.0)
    for r in (straight, staircase):
        assert r.manhattan_m == pytest.approx(2000.0, abs=2.0)
    # legs end at the first node past 300 m, so blocks stretch them a little
    assert straight.turns == 0 and staircase.turns >= 3


# --- statistics -------------------------------------------------------------------------------

def test_success_rate_eight_of_ten():
    recs = [rec(REACHED)] * 8 + [rec(LOST)] * 2
    assert summarize(recs)["success_rate"] == 0.8


def test_percentile_median():
    assert percentile([3, 1, 2], 50) == 2
    assert percentile([], 50) is None


def test_summarize_empty():
    s = summarize([])
    assert s["n"] == 0 and s["reached"] == 0
    assert s["success_rate"] is None and s["mean_manhattan_m"] is None


def test_summarize_order_independent():
    recs = [rec(REACHED, man=0.1 * k, trial=k) for k in range(50)]
    assert summarize(recs) == summarize(list(reversed(recs)))


def test_range_buckets():
    recs = ([rec(REACHED, euc=200.0)] * 10 + [rec(REACHED, euc=700.0)] * 8
            + [rec(LOST, euc=700.0)] * 2 + [rec(LOST, euc=1200.0)] * 10)
    b = success_by_range(recs, 500.0)
    assert [x["n"] for x in b] == [10, 10, 10]
    assert [x["success_rate"] for x in b] == [1.0, 0.8, 0.0]
    assert range_at_success(recs, 0.8, 500.0, 10) == 1000.0
    assert range_at_success(recs, 0.9, 500.0, 10) == 500.0
    assert range_at_success(recs, 0.8, 500.0, 11) == 0.0


# --- studies ---------------------------------------------------------------------------------

SMALL = ScenarioConfig(seed=4, map=MapParams(area_km2=2.0))


def test_range_study_zero_trials():
    t = run_range_study(SMALL, n=0)
    assert t.records == [] and all(c["n"] == 0 for c in t.cells)


def test_range_study_cells():
    grid = StudyGrid(compass_cases_deg=(None, 30.0))
    t = run_range_study(replace(SMALL, max_distance_m=3000.0), n=4, grid=grid)
    assert [c["compass_2sigma_deg"] for c in t.cells] == ["none", "30"]
    assert len(t.records) == 8
    assert all(r.outcome in (LOST, TIMEOUT) for r in t.records)
    assert all(r.manhattan_m <= 3000.0 + 2.0 for r in t.records)
    # the same worlds feed every cell
    assert [r.seed for r in t.cell_records(0)] == [r.seed for r in t.cell_records(1)]


def test_landmark_study_and_files(tmp_path):
    grid = StudyGrid(strategies=(LANDMARK_TO_LANDMARK,), densities=(1.0, 2.0), rates=(1.0,))
    t = run_landmark_study(SMALL, n=3, grid=grid)
    assert len(t) == 2 and len(t.records) == 6
    write_study(tmp_path, t)
    with open(tmp_path / "trials.csv") as fh:
        assert next(csv.reader(fh)) == list(TRIAL_FIELDS)
    assert read_trials_csv(tmp_path / "trials.csv") == [
        replace(r, trial=i, cell=0, goals_reached=0, steps=0, turns=0)
        for i, r in enumerate(t.records)]
    for name in ("study.csv", "trial_index.csv", "success_by_range.csv", "meta.json"):
        assert (tmp_path / name).exists()


def test_trials_csv_header_exact(tmp_path):
    write_trials_csv(tmp_path / "t.csv", [rec(REACHED)])
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == \
        "seed,outcome,manhattan_m,euclidean_m,final_axis_m,landmark_updates,decisions"


# --- command line -----------------------------------------------------------------------------

def test_cli_commands(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"map": {"area_km2": 2.0}, "landmark_density": 1.0,
                               "study": {"strategies": ["hybrid"], "densities": [1.0],
                                         "rates": [0.6], "compass_cases_deg": [30]}}))
    out = tmp_path / "out"
    assert main(["gen-map", "--config", str(cfg), "--seed", "1", "--out", str(out)]) == 0
    assert (out / "map.json").exists()
    assert main(["run-trial", "--config", str(cfg), "--seed", "1", "--out", str(out),
                 "--trace"]) == 0
    assert (out / "trace.jsonl").exists() and (out / "decisions.jsonl").exists()
    lm = tmp_path / "lm"
    assert main(["landmark-study", "--config", str(cfg), "--trials", "2", "--out", str(lm)]) == 0
    assert len((lm / "trials.csv").read_text().splitlines()) == 3
    rs = tmp_path / "rs"
    assert main(["range-study", "--config", str(cfg), "--trials", "2", "--out", str(rs)]) == 0
    assert main(["summarize", "--input", str(lm), "--out", str(lm)]) == 0
    assert json.loads((lm / "summary.json").read_text())["n"] == 2
    sc = tmp_path / "sc"
    assert main(["scene-replay", "--trials", "5", "--seed", "2", "--out", str(sc)]) == 0
    assert (sc / "scene_study.csv").exists()
    capsys.readouterr()


def test_cli_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"nonsense": True}))
    assert main(["run-trial", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
