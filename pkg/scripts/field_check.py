"""Sparse-landmark spot check: success rate at a fixed long start-goal range."""

import argparse
from dataclasses import replace

from sparsenav.harness import load_config, run_trial, summarize, trial_seed, write_trials_csv

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config", default="configs/field_check.json")
p.add_argument("--trials", type=int, default=200)
p.add_argument("--strategy", help="override the configured strategy")
p.add_argument("--out", default="out/field_check.csv")
args = p.parse_args()

cfg = load_config(args.config)
if args.strategy:
    cfg = replace(cfg, strategy=replace(cfg.strategy, kind=args.strategy))
recs = [run_trial(replace(cfg, seed=trial_seed(cfg.seed, i))) for i in range(args.trials)]
write_trials_csv(args.out, recs)
s = summarize(recs)
print(f"{cfg.strategy.kind}: success {s['success_rate']:.3f} over {s['n']} trials "
      f"(lost {s['lost']}, timeout {s['timeout']}), "
      f"mean range {s['mean_euclidean_m'] / 1000:.2f} km, "
      f"mean landmark fixes {s['mean_landmark_updates']:.2f}")
