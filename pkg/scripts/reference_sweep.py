"""Run one reference tree sweep, pickle the per-tree records and print the summaries.

    python3 scripts/reference_sweep.py binary --seed 1 --trees 200 --out runs/binary-1.pkl
"""

import argparse
import logging
import pickle
import time

import numpy as np

from kestenlab.experiments import exit_summary, offdiag_summary, path_summary, spectral_summary
from kestenlab.reference import SCALES, law_of, run_reference


def summarize(name, records):
    law, s = law_of(name), SCALES[name]
    out = {"trees": len(records), "censored": sum(bool(r.censored) for r in records)}
    fit, fit_exact, ratio, ratio_exact, bound_ok = exit_summary(law, s["exit"], records)
    out["exit_slope"] = fit.slope
    out["exact_exit_slope"] = fit_exact.slope
    out["exit_bound_ok"] = f"{int(bound_ok.sum())}/{bound_ok.size}"
    out["tau_over_h"] = ratio
    out["exact_over_h"] = ratio_exact
    fit, scaled, sources = spectral_summary(law, s["returns"], records)
    out["return_slope"] = fit.slope
    out["return_sources"] = dict(sources)
    out["scaled_returns"] = scaled
    fit_d, fit_r, scaled_pos = path_summary(law, s["path"], records)
    out["displacement_slope"] = fit_d.slope
    out["range_slope"] = fit_r.slope
    out["scaled_position"] = scaled_pos
    if s["backbone_m"]:
        off = offdiag_summary(law, s["backbone_m"], s["backbone_r"], records)
        out["offdiag"] = {k: off[k] for k in ("I_m", "monotone", "flat_ratio", "decay_ratio")}
    return out


def band(samples):
    return [(round(float(np.quantile(x, 0.05)), 4), round(float(np.quantile(x, 0.95)), 4)) for x in samples]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("name", choices=sorted(SCALES))
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--out", default=None)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    start = time.monotonic()
    records = run_reference(args.name, args.seed, args.trees)
    if args.out:
        with open(args.out, "wb") as fh:
            pickle.dump(records, fh)
    out = summarize(args.name, records)
    for key, val in out.items():
        if key in ("tau_over_h", "exact_over_h", "scaled_returns", "scaled_position"):
            val = band(val)
        print(f"{key}: {val}")
    print(f"wall clock: {time.monotonic() - start:.0f} s")


if __name__ == "__main__":
    main()
