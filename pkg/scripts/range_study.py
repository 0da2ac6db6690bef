"""Distance travelled before the 2-sigma ellipse passes the lost threshold, per compass case."""

import argparse
import time

from sparsenav.harness import load_config, load_study_grid, run_range_study, write_study

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config", default="configs/range_study.json")
p.add_argument("--trials", type=int, default=200)
p.add_argument("--out", default="out/range_study")
p.add_argument("--parallel", type=int, default=1)
args = p.parse_args()

t0 = time.perf_counter()
table = run_range_study(load_config(args.config), n=args.trials,
                        grid=load_study_grid(args.config), parallel=args.parallel)
write_study(args.out, table)
print(f"{'compass':>8} {'mean km':>9} {'lost frac':>10} {'lost-only km':>13}")
for c in table.cells:
    lost_only = c["mean_lost_only_m"]
    print(f"{c['compass_2sigma_deg']:>8} {c['mean_manhattan_m'] / 1000:9.2f} "
          f"{c['lost_fraction']:10.3f} "
          f"{'-' if lost_only is None else f'{lost_only / 1000:.2f}':>13}")
print(f"{time.perf_counter() - t0:.0f} s, tables in {args.out}")
