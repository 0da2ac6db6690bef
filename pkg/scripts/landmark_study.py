"""Success rate and 80%-success range over strategy x landmark density x detection rate."""

import argparse
import time

from sparsenav.harness import load_config, load_study_grid, run_landmark_study, write_study

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config", default="configs/landmark_study.json")
p.add_argument("--trials", type=int, default=300)
p.add_argument("--out", default="out/landmark_study")
p.add_argument("--parallel", type=int, default=1)
args = p.parse_args()

t0 = time.perf_counter()
table = run_landmark_study(load_config(args.config), n=args.trials,
                           grid=load_study_grid(args.config), parallel=args.parallel)
write_study(args.out, table)
print(f"{'strategy':>22} {'dens':>5} {'rate':>5} {'success':>8} {'range80 km':>11} {'mean km':>8}")
for c in table.cells:
    print(f"{c['strategy']:>22} {c['density_per_km2']:5.2f} {c['detection_rate']:5.2f} "
          f"{c['success_rate']:8.3f} {c['range80_m'] / 1000:11.1f} "
          f"{c['mean_manhattan_m'] / 1000:8.2f}")
print(f"{time.perf_counter() - t0:.0f} s, tables in {args.out}")
