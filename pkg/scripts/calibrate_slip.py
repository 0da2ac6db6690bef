"""Tune the wheel-slip fraction so compass-free dead reckoning is lost after ~300 m.

Bisects on slip_sigma using the mean lost distance of the no-compass range
cell. Prints each probe and the final value to freeze in NoiseConfig.
"""

import argparse
import math
from dataclasses import replace

from sparsenav.harness import StudyGrid, load_config, run_range_study

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config", default="configs/range_study.json")
p.add_argument("--trials", type=int, default=200)
p.add_argument("--target", type=float, default=300.0, help="mean lost distance, m")
p.add_argument("--lo", type=float, default=0.005)
p.add_argument("--hi", type=float, default=0.03)
p.add_argument("--iters", type=int, default=8)
p.add_argument("--parallel", type=int, default=1)
args = p.parse_args()

base = load_config(args.config)
grid = StudyGrid(compass_cases_deg=(None,))


def mean_lost(slip):
    cfg = replace(base, noise=replace(base.noise, slip_sigma=slip))
    cell = run_range_study(cfg, n=args.trials, grid=grid, parallel=args.parallel).cells[0]
    return cell["mean_manhattan_m"]


lo, hi = args.lo, args.hi
for _ in range(args.iters):
    # distance falls as slip grows; bisect in log space
    mid = math.sqrt(lo * hi)
    m = mean_lost(mid)
    print(f"slip_sigma={mid:.5f}  mean lost distance={m:.1f} m")
    if m > args.target:
        lo = mid
    else:
        hi = mid
print(f"use slip_sigma ~ {math.sqrt(lo * hi):.4f}")
