"""Final ellipse size after scripted straight versus staircase routes of equal length."""

import argparse
import csv
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy import stats

from sparsenav.harness import load_config, run_route, trial_seed

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config", default="configs/turn_study.json")
p.add_argument("--trials", type=int, default=100)
p.add_argument("--length", type=float, default=5000.0)
p.add_argument("--leg", type=float, default=300.0)
p.add_argument("--out", default="out/turn_study")
args = p.parse_args()

cfg = load_config(args.config)
rows = []
for i in range(args.trials):
    s = run_route(replace(cfg, seed=trial_seed(cfg.seed, i)), False, length=args.length)
    t = run_route(replace(cfg, seed=trial_seed(cfg.seed, 1000 + i)), True, length=args.length,
                  leg=args.leg)
    rows += [("straight", s.seed, s.turns, s.final_axis_m), ("turns", t.seed, t.turns,
                                                             t.final_axis_m)]
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
with open(out / "routes.csv", "w", newline="") as fh:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["route", "seed", "turns", "final_axis_m"])
    w.writerows([r[:3] + (repr(r[3]),) for r in rows])
a = np.array([r[3] for r in rows if r[0] == "straight"])
b = np.array([r[3] for r in rows if r[0] == "turns"])
res = stats.ttest_ind(a, b, equal_var=False, alternative="greater")
print(f"straight: mean axis {a.mean():.1f} m; turns: {b.mean():.1f} m "
      f"(min {min(r[2] for r in rows if r[0] == 'turns')} turns); one-sided p={res.pvalue:.3g}")
