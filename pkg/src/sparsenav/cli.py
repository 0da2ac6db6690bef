"""Command line entry point: ``sparsenav <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .citygen import ConfigError, SamplingExhausted, generate_map, place_landmarks, save_map
from .harness import (ScenarioConfig, StudyGrid, load_config, load_study_grid, read_trials_csv,
                      run_landmark_study, run_range_study, run_trial, summarize, write_study,
                      write_trials_csv)
from .scenestim import read_jsonl, replay, run_approach_study, write_jsonl


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg.validate()


def _grid(args) -> StudyGrid:
    return load_study_grid(args.config) if args.config else StudyGrid()


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_map(args) -> int:
    cfg = _config(args)
    net = generate_map(cfg.map, cfg.seed)
    lms = place_landmarks(net, cfg.landmark_density, cfg.seed)
    path = _out(args) / "map.json"
    save_map(path, net, lms)
    print(json.dumps({"map": str(path), "nodes": len(net.nodes), "edges": len(net.edges),
                      "landmarks": len(lms)}))
    return 0


def cmd_run_trial(args) -> int:
    cfg = _config(args)
    trace = {} if args.trace else None
    rec = run_trial(cfg, cell=args.cell, trace=trace)
    out = _out(args)
    write_trials_csv(out / "trials.csv", [rec])
    if trace is not None:
        write_jsonl(out / "trace.jsonl", trace.get("steps", []))
        write_jsonl(out / "decisions.jsonl", trace.get("decisions", []))
    print(json.dumps({k: getattr(rec, k) for k in ("seed", "outcome", "manhattan_m",
                                                   "euclidean_m", "final_axis_m",
                                                   "landmark_updates", "decisions")}))
    return 0


def _study(args, fn) -> int:
    cfg = _config(args)
    table = fn(cfg, n=args.trials, grid=_grid(args), parallel=args.parallel)
    write_study(_out(args), table)
    if args.trace and table.records:
        # traced rerun of the first trial of every cell, for inspection
        tdir = _out(args) / "traces"
        tdir.mkdir(exist_ok=True)
        for i, ccfg in enumerate(table.cell_configs):
            trace = {}
            run_trial(replace(ccfg, seed=table.records[0].seed), cell=i, trace=trace)
            write_jsonl(tdir / f"cell{i}_steps.jsonl", trace.get("steps", []))
            write_jsonl(tdir / f"cell{i}_decisions.jsonl", trace.get("decisions", []))
    for c in table.cells:
        print(json.dumps({k: c[k] for k in list(table.keys) + ["n", "success_rate",
                                                                "mean_manhattan_m"]}))
    return 0


def cmd_range_study(args) -> int:
    return _study(args, run_range_study)


def cmd_landmark_study(args) -> int:
    return _study(args, run_landmark_study)


def cmd_scene_replay(args) -> int:
    out = _out(args)
    if args.input:
        rows = replay(read_jsonl(args.input))
        write_jsonl(out / "beliefs.jsonl", rows)
        print(json.dumps(rows[-1] if rows else {}))
        return 0
    rows = []
    study = run_approach_study(args.trials, seed=args.seed or 0, rows_out=rows)
    with open(out / "approaches.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["approach"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    summary = {"n_intersections": study.n_intersections, "n_plain": study.n_plain,
               "detected_before": study.detected_before,
               "false_activation": study.false_activation,
               "mean_detection_m": study.mean_detection_m}
    with open(out / "scene_study.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(summary))
        w.writerow([repr(v) if isinstance(v, float) else v for v in summary.values()])
    print(json.dumps(summary))
    return 0


def cmd_summarize(args) -> int:
    src = Path(args.input)
    if src.is_dir():
        src = src / "trials.csv"
    stats = summarize(read_trials_csv(src))
    text = json.dumps(stats, indent=2)
    if args.out:
        (_out(args) / "summary.json").write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsenav",
                                description="Map-light urban navigation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="out", trials=False, parallel=False, trace=False):
        sp.add_argument("--config", help="scenario JSON")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", default=out_default, help="output directory")
        if trials:
            sp.add_argument("--trials", type=int, default=100)
        if parallel:
            sp.add_argument("--parallel", type=int, default=1, help="worker processes")
        if trace:
            sp.add_argument("--trace", action="store_true", help="emit JSONL traces")

    common(sub.add_parser("gen-map", help="generate a city map as JSON"))
    sp = sub.add_parser("run-trial", help="simulate one trial")
    common(sp, trace=True)
    sp.add_argument("--cell", type=int, default=0, help="noise stream index")
    common(sub.add_parser("range-study", help="lost distance per compass case"),
           trials=True, parallel=True, trace=True)
    common(sub.add_parser("landmark-study", help="strategy x density x rate grid"),
           trials=True, parallel=True, trace=True)
    sp = sub.add_parser("scene-replay", help="replay a cue log or run the approach study")
    common(sp, trials=True)
    sp.add_argument("--input", help="cue stream JSONL; omit to simulate approaches")
    sp = sub.add_parser("summarize", help="statistics over a trials.csv")
    sp.add_argument("--input", required=True, help="trials.csv or a study directory")
    sp.add_argument("--out", help="write summary.json here")
    return p


COMMANDS = {"gen-map": cmd_gen_map, "run-trial": cmd_run_trial,
            "range-study": cmd_range_study, "landmark-study": cmd_landmark_study,
            "scene-replay": cmd_scene_replay, "summarize": cmd_summarize}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SamplingExhausted, OSError, ValueError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"sparsenav: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
