"""Calibrate the frozen constants of the acceptance suite on a calibration seed.

Prints the tightness intervals (envelope of the per-scale central 90% bands,
widened by ``--margin``) and the tail constant ``C`` for the binary law.
Reuses pickled records from ``reference_sweep.py`` when given.

    python3 scripts/calibrate.py --seed 1 --binary runs/binary-1.pkl --stable runs/stable-1.pkl
"""

import argparse
import os
import pickle
import sys

import numpy as np

from kestenlab.branching import build_survival_table
from kestenlab.reference import BINARY, STABLE, run_reference
from kestenlab.sweeps import process_batch

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
from test_acceptance import tightness_samples  # noqa: E402


def records_for(name, seed, path, trees):
    if path and os.path.exists(path):
        with open(path, "rb") as fh:
            return pickle.load(fh)
    return run_reference(name, seed, trees)


def envelope(per_scale, margin):
    lo = min(float(np.quantile(x, 0.05)) for x in per_scale)
    hi = max(float(np.quantile(x, 0.95)) for x in per_scale)
    return lo / margin, hi * margin


def tail_constant(seed, n=64, replicas=100, batch=1000, beta=0.9):
    p = build_survival_table(BINARY, n)[n]
    z = np.concatenate([p * process_batch(BINARY, n, batch, seed, r).z[:, n] for r in range(replicas)])
    lam = 2.0 ** np.arange(0, 8)
    return float(np.max(np.array([(z > v).mean() for v in lam]) * lam**beta))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--margin", type=float, default=1.25)
    p.add_argument("--binary", default=None, help="pickled binary-law records")
    p.add_argument("--stable", default=None, help="pickled stable-law records")
    args = p.parse_args()
    print("TIGHTNESS = {")
    for name, law, path in (("binary", BINARY, args.binary), ("stable", STABLE, args.stable)):
        samples = tightness_samples(name, law, records_for(name, args.seed, path, args.trees))
        parts = ", ".join(f'"{k}": ({lo:.3g}, {hi:.3g})' for k, (lo, hi) in
                          ((k, envelope(v, args.margin)) for k, v in samples.items()))
        print(f'    "{name}": {{{parts}}},')
    print("}")
    C = tail_constant(args.seed)
    print(f"TAIL_C = {C * args.margin:.3g}  # fitted {C:.4f} times margin {args.margin}")


if __name__ == "__main__":
    main()
