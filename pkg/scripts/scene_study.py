"""Simulated intersection approaches through the scene estimator."""

import argparse
import json

from sparsenav.scenestim import run_approach_study

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--trials", type=int, default=500)
p.add_argument("--seed", type=int, default=10)
p.add_argument("--rate", type=float, help="one detection rate for every cue (default: precisions)")
p.add_argument("--min-classes", type=int, default=2)
args = p.parse_args()

s = run_approach_study(args.trials, seed=args.seed, min_classes=args.min_classes,
                       rates=args.rate)
print(json.dumps(s.__dict__, indent=2))
