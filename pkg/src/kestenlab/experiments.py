"""Registry of experiments.

Each experiment turns one replica index into CSV rows plus a payload, and
summarizes the payloads of all replicas into aggregates and named checks.
Replicas only depend on ``(config, replica index)``.

Exponent fits regress the mean of ``log y`` on ``log x`` over the configured
scales, dropping the smallest scale unless ``drop_smallest = false``.
"""

from __future__ import annotations

import functools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import seeds
from .analysis import ScalingFunctions, fit_loglog, tail_index, theoretical_exponents
from .branching import (
    attraction_statistic,
    build_survival_table,
    sample_survivor_counts,
    survival_asymptotic_ratio,
    u_function,
)
from .config import ExperimentConfig
from .electric import check_J
from .offspring import OffspringLaw
from .sweeps import (
    TreeSweep,
    process_batch,
    resistance_replica,
    tree_replica,
    volume_from_sizes,
)
from .tree import KestenTree, VertexBudgetError, grow_forest, size_biased_shape_law

BASE_COLUMNS = ("row_id", "seed", "replica", "scale", "item")


@dataclass
class Check:
    name: str
    value: float
    target: str
    passed: bool


@dataclass
class Outcome:
    rows: list
    payload: object = None
    censored: int = 0


@dataclass
class Experiment:
    name: str
    tests: str
    columns: tuple
    defaults: dict
    replica: Callable[[ExperimentConfig, OffspringLaw, int], Outcome]
    summarize: Callable[[ExperimentConfig, OffspringLaw, list], tuple]


REGISTRY: dict[str, Experiment] = {}


def register(name, tests, columns, defaults):
    def wrap(fn_pair):
        replica, summarize = fn_pair()
        REGISTRY[name] = Experiment(name, tests, tuple(columns), defaults, replica, summarize)
        return fn_pair

    return wrap


@functools.lru_cache(maxsize=8)
def scaling_for(law: OffspringLaw, N: int = 1 << 17) -> ScalingFunctions:
    return ScalingFunctions(build_survival_table(law, N))


# -- shared statistics ---------------------------------------------------


def log_mean_fit(scales, samples_by_scale, drop_smallest=True):
    """Slope of ``mean(log y)`` against ``log x``; samples are filtered to positive finite values."""
    pts = []
    for x, ys in zip(scales, samples_by_scale):
        ys = np.asarray(ys, dtype=float)
        ys = ys[np.isfinite(ys) & (ys > 0)]
        if len(ys):
            pts.append((x, math.exp(np.mean(np.log(ys)))))
    if drop_smallest and len(pts) > 3:
        pts = pts[1:]
    return fit_loglog(pts)


def central_band(samples_by_scale, lo=0.05, hi=0.95):
    """Per-scale ``(q_lo, q_hi)`` of the samples."""
    out = []
    for ys in samples_by_scale:
        ys = np.asarray(ys, dtype=float)
        ys = ys[np.isfinite(ys)]
        out.append((float(np.quantile(ys, lo)), float(np.quantile(ys, hi))) if len(ys) else (math.nan, math.nan))
    return out


def slope_check(name, fit, target, tol):
    return Check(name, fit.slope, f"{target:.4f} +/- {tol}", abs(fit.slope - target) <= tol)


def _drop(cfg):
    return cfg.param("drop_smallest", True, bool)


def _batch_rows(cfg, replica, scale, items, **cols):
    n = len(items)
    return [
        {"row_id": row_id(cfg, replica, scale, int(items[i])), "replica": replica, "scale": scale, "item": int(items[i]),
         **{k: _py(v[i]) for k, v in cols.items()}}
        for i in range(n)
    ]


def _py(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def row_id(cfg: ExperimentConfig, replica: int, scale, item: int) -> str:
    return f"{cfg.experiment}:{cfg.master_seed}:{replica}:{scale}:{item}"


def parse_row_id(text: str):
    parts = text.split(":")
    if len(parts) != 5:
        raise ValueError(f"row id must look like experiment:seed:replica:scale:item, got {text!r}")
    name, seed, replica, scale, item = parts
    scale_v = float(scale)
    return name, int(seed), int(replica), int(scale_v) if scale_v.is_integer() else scale_v, int(item)


# -- survival-decay ------------------------------------------------------


@register(
    "survival-decay", "decay of the survival probability p_n",
    ["p_n", "ratio"],
    {"experiment.law": "stable:alpha=1.5,c=2/3", "scales.values": "1000 10000 100000 1000000", "params.tol": "0.02"},
)
def _survival_decay():
    def replica(cfg, law, r):
        table = build_survival_table(law, max(cfg.scales))
        rows = []
        for n in cfg.scales:
            rows.append({"row_id": row_id(cfg, r, n, 0), "replica": r, "scale": n, "item": 0,
                         "p_n": float(table[n]), "ratio": survival_asymptotic_ratio(table, n)})
        return Outcome(rows, rows)

    def summarize(cfg, law, payloads):
        rows = payloads[0]
        tol = cfg.param("tol", 0.02, float)
        last = rows[-1]
        summary = {"ratio": {str(r["scale"]): r["ratio"] for r in rows}}
        checks = [Check(f"ratio at n={last['scale']}", last["ratio"], f"1 +/- {tol}", abs(last["ratio"] - 1) <= tol)]
        return summary, checks

    return replica, summarize


# -- sizebias-validation ---------------------------------------------------


def _shape_key(shape) -> str:
    return "-".join(map(str, shape))


@register(
    "sizebias-validation", "spine construction reproduces the size-biased shape law",
    ["shape", "count"],
    {"experiment.law": "finite:0=0.5,2=0.5", "scales.values": "2", "seeds.replicas": "100",
     "params.batch": "10000", "params.tv_max": "0.01"},
)
def _sizebias():
    def replica(cfg, law, r):
        R = cfg.scales[0]
        forest = grow_forest(law, R, cfg.param("batch", 10000, int), seeds.generator(cfg.master_seed, r, seeds.TREE))
        counts = Counter(_shape_key(s) for s in forest.shapes())
        rows = [{"row_id": row_id(cfg, r, R, i), "replica": r, "scale": R, "item": i, "shape": k, "count": c}
                for i, (k, c) in enumerate(sorted(counts.items()))]
        return Outcome(rows, counts)

    def summarize(cfg, law, payloads):
        total = Counter()
        for c in payloads:
            total.update(c)
        n = sum(total.values())
        exact = {_shape_key(k): p for k, p in size_biased_shape_law(law, cfg.scales[0]).items()}
        tv = 0.5 * sum(abs(total.get(k, 0) / n - exact.get(k, 0.0)) for k in set(total) | set(exact))
        tv_max = cfg.param("tv_max", 0.01, float)
        summary = {"trees": n, "tv": tv, "empirical": {k: v / n for k, v in sorted(total.items())}, "exact": exact}
        return summary, [Check("total variation", tv, f"< {tv_max}", tv < tv_max)]

    return replica, summarize


# -- tail-z / tail-y -------------------------------------------------------


def _tail_pair(kind):
    def replica(cfg, law, r):
        n = cfg.scales[0]
        batch = process_batch(law, n, cfg.param("batch", 1000, int), cfg.master_seed, r)
        ok = ~batch.censored
        p = build_survival_table(law, n)[n]
        z = batch.z[ok]
        raw = z[:, n] if kind == "z" else z.sum(axis=1)
        scaled = p * raw if kind == "z" else p * raw / n
        items = np.flatnonzero(ok)
        rows = _batch_rows(cfg, r, n, items, value=raw, scaled=scaled)
        return Outcome(rows, scaled, censored=int(batch.censored.sum()))

    def summarize(cfg, law, payloads):
        x = np.concatenate(payloads)
        top = cfg.param("top_fraction", 0.05, float)
        summary = {"samples": len(x)}
        checks = []
        if law.alpha < 2:
            hill = tail_index(x, top)
            lo, hi = cfg.param("bracket_lo", 0.35, float), cfg.param("bracket_hi", 1.2, float)
            summary["hill_index"] = hill
            summary["bracket"] = [law.alpha - 1, (law.alpha - 1) / (2 - law.alpha)]
            checks.append(Check("hill index", hill, f"in [{lo}, {hi}]", lo <= hill <= hi))
        else:
            beta = cfg.param("beta", 0.9, float)
            C = cfg.param("C", math.inf, float)
            lam = 2.0 ** np.arange(0, 8)
            surv = np.array([(x > v).mean() for v in lam])
            fitted = float(np.max(surv * lam**beta))
            summary.update({"lambda": lam.tolist(), "survival": surv.tolist(), "fitted_C": fitted})
            checks.append(Check(f"P(scaled > lam) <= C lam^-{beta}", fitted, f"<= {C}", fitted <= C))
        return summary, checks

    return replica, summarize


_TAIL_DEFAULTS = {"experiment.law": "stable:alpha=1.5,c=2/3", "scales.values": "64", "seeds.replicas": "100",
                  "params.batch": "1000"}
register("tail-z", "tail of p_n Z*_n", ["value", "scaled"], _TAIL_DEFAULTS)(lambda: _tail_pair("z"))
register("tail-y", "tail of p_n Y*_n / n", ["value", "scaled"], _TAIL_DEFAULTS)(lambda: _tail_pair("y"))


# -- survivor-count --------------------------------------------------------


@register(
    "survivor-count", "survivor count M_n^{2n} equals 1 + Bin(Z*_n - 1, p_n) in law",
    ["m_tree", "m_process"],
    {"experiment.law": "finite:0=0.5,2=0.5", "scales.values": "8", "seeds.replicas": "100",
     "params.batch": "1000", "params.ks_max": "0.02"},
)
def _survivor():
    def replica(cfg, law, r):
        n = cfg.scales[0]
        batch = cfg.param("batch", 1000, int)
        forest = grow_forest(law, 2 * n, batch, seeds.generator(cfg.master_seed, r, seeds.TREE))
        m_tree = forest.count_survivors(n, 2 * n)
        table = build_survival_table(law, n)
        m_proc = sample_survivor_counts(law, table, n, batch, seeds.generator(cfg.master_seed, r, seeds.PROCESS))
        if len(m_proc) < batch:
            m_proc = np.concatenate([m_proc, np.full(batch - len(m_proc), -1)])
        rows = _batch_rows(cfg, r, n, np.arange(batch), m_tree=m_tree, m_process=m_proc)
        return Outcome(rows, (m_tree, m_proc[m_proc > 0]))

    def summarize(cfg, law, payloads):
        a = np.concatenate([p[0] for p in payloads])
        b = np.concatenate([p[1] for p in payloads])
        ks = float(stats.ks_2samp(a, b).statistic)
        ks_max = cfg.param("ks_max", 0.02, float)
        summary = {"samples": [len(a), len(b)], "ks": ks, "mean_tree": float(a.mean()), "mean_process": float(b.mean())}
        return summary, [Check("KS distance", ks, f"< {ks_max}", ks < ks_max)]

    return replica, summarize


# -- u-function ------------------------------------------------------------


@register(
    "u-function", "functional equation U(f(s)) = U(s) + 1",
    ["s", "U_s", "U_fs", "residual"],
    {"experiment.law": "finite:0=0.5,2=0.5", "scales.values": "0 1 2 3 4 5 6 7 8 9", "params.tol": "1e-6"},
)
def _ufun():
    def replica(cfg, law, r):
        s = np.array(cfg.scales, dtype=float) / 10.0
        fs = np.array([law.pgf(x) for x in s])
        us, ufs = u_function(law, s), u_function(law, fs)
        res = ufs - us - 1.0
        rows = _batch_rows(cfg, r, 0, np.arange(len(s)), s=s, U_s=us, U_fs=ufs, residual=res)
        for row, k in zip(rows, cfg.scales):
            row["scale"] = k
            row["row_id"] = row_id(cfg, r, k, row["item"])
        return Outcome(rows, res)

    def summarize(cfg, law, payloads):
        worst = float(np.max(np.abs(payloads[0])))
        tol = cfg.param("tol", 1e-6, float)
        return {"max_residual": worst}, [Check("max |U(f(s)) - U(s) - 1|", worst, f"< {tol}", worst < tol)]

    return replica, summarize


# -- volume-growth -----------------------------------------------------------


@register(
    "volume-growth", "volume growth V(R) and the bounds Y*_R <= V(R) <= 2 Y*_{R+1}",
    ["volume", "y_R", "y_R1", "v_R", "bounds_ok"],
    {"experiment.law": "finite:0=0.5,2=0.5", "scales.values": " ".join(str(2**k) for k in range(4, 13)),
     "seeds.replicas": "100", "params.batch": "20", "params.source": "process", "params.tol": "0.1"},
)
def _volume():
    def replica(cfg, law, r):
        S = scaling_for(law)
        Rs = cfg.scales
        if cfg.param("source", "process") == "tree":
            tree = KestenTree(law, rng=seeds.generator(cfg.master_seed, r, seeds.TREE), vertex_cap=cfg.vertex_cap)
            try:
                tree.grow_to_radius(Rs[-1] + 1)
            except VertexBudgetError:
                return Outcome([], [], censored=1)
            sizes = np.diff(tree.gen_start)[None, :]
            vols = [np.array([tree.ball_stats(R).volume]) for R in Rs]
            cens = 0
        else:
            batch = process_batch(law, Rs[-1] + 1, cfg.param("batch", 20, int), cfg.master_seed, r)
            sizes = batch.z[~batch.censored]
            vols = [volume_from_sizes(sizes, R) for R in Rs]
            cens = int(batch.censored.sum())
        y = np.cumsum(sizes, axis=1)
        rows, payload = [], []
        for R, V in zip(Rs, vols):
            ok = (y[:, R] <= V) & (V <= 2 * y[:, R + 1])
            rows += _batch_rows(cfg, r, R, np.arange(len(V)), volume=V, y_R=y[:, R], y_R1=y[:, R + 1],
                                v_R=np.full(len(V), S.v(R)), bounds_ok=ok.astype(int))
            payload.append((V, ok))
        return Outcome(rows, payload, censored=cens)

    def summarize(cfg, law, payloads):
        S = scaling_for(law)
        payloads = [p for p in payloads if p]
        vols = [np.concatenate([p[i][0] for p in payloads]) for i in range(len(cfg.scales))]
        ok = np.concatenate([p[i][1] for p in payloads for i in range(len(cfg.scales))])
        fit = log_mean_fit(cfg.scales, vols, _drop(cfg))
        target = theoretical_exponents(law.alpha).volume
        tol = cfg.param("tol", 0.1, float)
        summary = {"slope": fit.slope, "stderr": fit.stderr, "target": target,
                   "median_V_over_v": [float(np.median(v) / S.v(R)) for v, R in zip(vols, cfg.scales)],
                   "bounds_pass": int(ok.sum()), "bounds_total": int(ok.size)}
        checks = [slope_check("volume slope", fit, target, tol),
                  Check("Y*_R <= V(R) <= 2Y*_{R+1}", float(ok.mean()), "== 1", bool(ok.all()))]
        return summary, checks

    return replica, summarize


# -- resistance-check --------------------------------------------------------


@register(
    "resistance-check", "R_eff(root, B(2R)^c) >= R / M_R^{2R} and J(lambda) rates",
    ["resistance", "survivors", "lower_bound", "ok", "lam", "vol_lower", "vol_upper", "res_lower"],
    {"experiment.law": "finite:0=0.5,2=0.5", "scales.values": "16 32 64 128", "seeds.replicas": "1000",
     "params.j_radius": "64", "params.lambdas": "2 4 8 16 32 64", "params.j_rate_min": "0.9"},
)
def _resistance():
    def replica(cfg, law, r):
        try:
            res = resistance_replica(law, cfg.master_seed, r, cfg.scales, cfg.vertex_cap)
        except VertexBudgetError:
            return Outcome([], None, censored=1)
        rows = []
        for R, d in res.items():
            lb = R / d["survivors"]
            rows.append({"row_id": row_id(cfg, r, R, 0), "replica": r, "scale": R, "item": 0,
                         "resistance": d["resistance"], "survivors": d["survivors"], "lower_bound": lb,
                         "ok": int(d["resistance"] >= lb)})
        jR = cfg.param("j_radius", 64, int)
        lams = cfg.param("lambdas", [2, 4, 8, 16, 32, 64], list)
        tree = KestenTree(law, rng=seeds.generator(cfg.master_seed, r, seeds.TREE), vertex_cap=cfg.vertex_cap)
        tree.grow_to_radius(jR + 1)
        S = scaling_for(law)
        flags = []
        for i, lam in enumerate(lams):
            j = check_J(tree, S, jR, lam)
            flags.append(j.all)
            rows.append({"row_id": row_id(cfg, r, jR, i + 1), "replica": r, "scale": jR, "item": i + 1, "lam": lam,
                         "vol_lower": int(j.vol_lower), "vol_upper": int(j.vol_upper), "res_lower": int(j.res_lower)})
        return Outcome(rows, ([row["ok"] for row in rows if "ok" in row], flags))

    def summarize(cfg, law, payloads):
        payloads = [p for p in payloads if p is not None]
        ok = np.concatenate([p[0] for p in payloads])
        flags = np.array([p[1] for p in payloads], dtype=float)
        rates = flags.mean(axis=0)
        lams = cfg.param("lambdas", [2, 4, 8, 16, 32, 64], list)
        rate_min = cfg.param("j_rate_min", 0.9, float)
        summary = {"inequality_pass": int(ok.sum()), "inequality_total": int(ok.size),
                   "J_lambda": lams, "J_pass_rate": rates.tolist()}
        checks = [
            Check("R_eff >= R/M", float(ok.mean()), "== 1", bool(ok.all())),
            Check("J pass rate monotone in lambda", float(np.min(np.diff(rates))) if len(rates) > 1 else 0.0,
                  ">= 0", bool(np.all(np.diff(rates) >= 0))),
            Check(f"J pass rate at lambda={lams[-1]}", float(rates[-1]), f">= {rate_min}", rates[-1] >= rate_min),
        ]
        return summary, checks

    return replica, summarize


# -- tree sweeps: exit-time, spectral-dimension, displacement, range-growth, offdiag-backbone --


def _sweep(cfg, law, **kw) -> TreeSweep:
    return TreeSweep(law, cfg.master_seed, vertex_cap=cfg.vertex_cap, walk_cap=cfg.walk_cap, **kw)


def exit_summary(law, radii, records, drop_smallest=True):
    """Slopes and tightness samples of tau_R / h(R) and E tau_R / h(R)."""
    S = scaling_for(law)
    good = [r for r in records if not r.censored and r.exit_times is not None]
    tau = [np.concatenate([r.exit_times[:, i] for r in good]) for i in range(len(radii))]
    exact = [np.array([r.exact_exit[R] for r in good]) for R in radii]
    fit = log_mean_fit(radii, tau, drop_smallest)
    fit_exact = log_mean_fit(radii, exact, drop_smallest)
    ratio = [t / S.h(R) for t, R in zip(tau, radii)]
    ratio_exact = [e / S.h(R) for e, R in zip(exact, radii)]
    bound_ok = np.array([r.exact_exit[R] <= (R + 1) * r.volume[R] for r in good for R in radii])
    return fit, fit_exact, ratio, ratio_exact, bound_ok


@register(
    "exit-time", "exit times tau_R against h(R), and E tau_R <= (R+1) V(R)",
    ["tau", "backbone_hit", "exact_exit", "volume", "tau_over_h"],
    {"experiment.law": "finite:0=0.5,2=0.5", "scales.values": "8 16 32 64 128", "seeds.replicas": "200",
     "params.walks": "20", "params.tol": "0.2"},
)
def _exit():
    def replica(cfg, law, r):
        S = scaling_for(law)
        rec = tree_replica(_sweep(cfg, law, exit_radii=cfg.scales, exit_walks=cfg.param("walks", 20, int)), r)
        if rec.censored:
            return Outcome([], rec, censored=1)
        rows = []
        for i, R in enumerate(cfg.scales):
            rows.append({"row_id": row_id(cfg, r, R, -1), "replica": r, "scale": R, "item": -1,
                         "exact_exit": rec.exact_exit[R], "volume": rec.volume[R]})
            rows += _batch_rows(cfg, r, R, np.arange(len(rec.exit_times)), tau=rec.exit_times[:, i],
                                backbone_hit=rec.backbone_hits[:, i], tau_over_h=rec.exit_times[:, i] / S.h(R))
        return Outcome(rows, rec)

    def summarize(cfg, law, payloads):
        fit, fit_exact, ratio, ratio_exact, bound_ok = exit_summary(law, cfg.scales, payloads, _drop(cfg))
        target = theoretical_exponents(law.alpha).exit
        tol = cfg.param("tol", 0.2, float)
        summary = {"slope": fit.slope, "stderr": fit.stderr, "slope_exact_mean": fit_exact.slope, "target": target,
                   "tau_over_h_band": central_band(ratio), "exact_over_h_band": central_band(ratio_exact),
                   "bound_pass": int(bound_ok.sum()), "bound_total": int(bound_ok.size)}
        checks = [slope_check("exit-time slope", fit, target, tol),
                  Check("E tau_R <= (R+1) V(R)", float(bound_ok.mean()), "== 1", bool(bound_ok.all()))]
        return summary, checks

    return replica, summarize


def spectral_summary(law, ms, records, drop_smallest=True):
    S = scaling_for(law)
    good = [r for r in records if not r.censored and r.returns is not None]
    p = [np.array([r.returns[i] for r in good]) for i in range(len(ms))]
    fit = log_mean_fit(ms, p, drop_smallest)
    scaled = [x * S.v(S.I(m)) for x, m in zip(p, ms)]
    return fit, scaled, Counter(r.return_source for r in good)


@register(
    "spectral-dimension", "return probability p_2m(root, root) decay",
    ["p_2m", "error_bound", "source", "scaled"],
    {"experiment.law": "finite:0=0.5,2=0.5", "scales.values": "64 128 256 512 1024", "seeds.replicas": "200",
     "params.rel_tol": "1e-6", "params.mc_walks": "2000", "params.tol": "0.07"},
)
def _spectral():
    def replica(cfg, law, r):
        S = scaling_for(law)
        rec = tree_replica(_sweep(cfg, law, return_m=cfg.scales, return_rel_tol=cfg.param("rel_tol", 1e-6, float),
                                  mc_walks=cfg.param("mc_walks", 2000, int)), r)
        if rec.censored:
            return Outcome([], rec, censored=1)
        rows = [{"row_id": row_id(cfg, r, m, 0), "replica": r, "scale": m, "item": 0, "p_2m": float(rec.returns[i]),
                 "error_bound": float(rec.return_error[i]), "source": rec.return_source,
                 "scaled": float(rec.returns[i] * S.v(S.I(m)))} for i, m in enumerate(cfg.scales)]
        return Outcome(rows, rec)

    def summarize(cfg, law, payloads):
        fit, scaled, sources = spectral_summary(law, cfg.scales, payloads, _drop(cfg))
        ds = theoretical_exponents(law.alpha).spectral
        tol = cfg.param("tol", 0.07, float)
        summary = {"slope": fit.slope, "stderr": fit.stderr, "target": -ds / 2, "spectral_dimension": -2 * fit.slope,
                   "scaled_band": central_band(scaled), "sources": dict(sources)}
        return summary, [slope_check("return-probability slope", fit, -ds / 2, tol)]

    return replica, summarize


def path_summary(law, ms, records, drop_smallest=True):
    S = scaling_for(law)
    good = [r for r in records if not r.censored and r.max_displacement is not None]
    cols = lambda attr: [np.concatenate([getattr(r, attr)[:, i] for r in good]) for i in range(len(ms))]
    disp, depth, rng_v = cols("max_displacement"), cols("position_depth"), cols("range_vertices")
    fit_d = log_mean_fit(ms, disp, drop_smallest)
    fit_r = log_mean_fit(ms, rng_v, drop_smallest)
    scaled_pos = [(1 + d) / S.I(m) for d, m in zip(depth, ms)]
    return fit_d, fit_r, scaled_pos


def _path_rows(cfg, r, rec, S):
    rows = []
    for i, m in enumerate(cfg.scales):
        rows += _batch_rows(cfg, r, m, np.arange(len(rec.max_displacement)), max_displacement=rec.max_displacement[:, i],
                            depth=rec.position_depth[:, i], range_vertices=rec.range_vertices[:, i],
                            range_measure=rec.range_measure[:, i],
                            scaled_position=(1 + rec.position_depth[:, i]) / S.I(m))
    return rows


def _path_pair(which):
    def replica(cfg, law, r):
        rec = tree_replica(_sweep(cfg, law, checkpoints=cfg.scales, path_walks=cfg.param("walks", 20, int)), r)
        if rec.censored:
            return Outcome([], rec, censored=1)
        return Outcome(_path_rows(cfg, r, rec, scaling_for(law)), rec)

    def summarize(cfg, law, payloads):
        fit_d, fit_r, scaled_pos = path_summary(law, cfg.scales, payloads, _drop(cfg))
        ex = theoretical_exponents(law.alpha)
        tol = cfg.param("tol", 0.05, float)
        if which == "displacement":
            summary = {"slope": fit_d.slope, "stderr": fit_d.stderr, "target": ex.displacement,
                       "scaled_position_band": central_band(scaled_pos)}
            return summary, [slope_check("displacement slope", fit_d, ex.displacement, tol)]
        summary = {"slope": fit_r.slope, "stderr": fit_r.stderr, "target": ex.range}
        return summary, [slope_check("range slope", fit_r, ex.range, tol)]

    return replica, summarize


_PATH_COLUMNS = ["max_displacement", "depth", "range_vertices", "range_measure", "scaled_position"]
_PATH_DEFAULTS = {"experiment.law": "finite:0=0.5,2=0.5", "scales.values": " ".join(str(2**k) for k in range(8, 15)),
                  "seeds.replicas": "200", "params.walks": "20", "params.tol": "0.05"}
register("displacement", "maximal displacement growth", _PATH_COLUMNS, _PATH_DEFAULTS)(lambda: _path_pair("displacement"))
register("range-growth", "range size growth", _PATH_COLUMNS, _PATH_DEFAULTS)(lambda: _path_pair("range"))


def offdiag_summary(law, m, r_list, records):
    S = scaling_for(law)
    good = [r for r in records if not r.censored and r.backbone_profile is not None]
    prof = np.array([r.backbone_profile for r in good])
    mean = prof.mean(axis=0)
    se = prof.std(axis=0, ddof=1) / math.sqrt(len(prof))
    I = S.I(m)
    r_arr = np.asarray(r_list, dtype=float)
    inc = np.diff(mean) - 3 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    near = mean[r_arr <= 0.2 * I]
    far = mean[r_arr >= 4 * I]
    return {
        "I_m": I,
        "mean": mean.tolist(),
        "stderr": se.tolist(),
        "monotone": bool(np.all(inc <= 0)),
        "flat_ratio": float(near.max() / near.min()) if len(near) else math.nan,
        "decay_ratio": float(mean[0] / far.max()) if len(far) and far.max() > 0 else math.inf,
    }


@register(
    "offdiag-backbone", "profile r -> p_2m(root, b_2r) along the backbone",
    ["p"],
    {"experiment.law": "finite:0=0.5,2=0.5", "scales.values": " ".join(str(r) for r in range(0, 41)),
     "seeds.replicas": "200", "params.m": "256"},
)
def _offdiag():
    def replica(cfg, law, r):
        m = cfg.param("m", 256, int)
        rec = tree_replica(_sweep(cfg, law, backbone_m=m, backbone_r=cfg.scales), r)
        if rec.censored:
            return Outcome([], rec, censored=1)
        rows = [{"row_id": row_id(cfg, r, k, 0), "replica": r, "scale": k, "item": 0, "p": float(v)}
                for k, v in zip(cfg.scales, rec.backbone_profile)]
        return Outcome(rows, rec)

    def summarize(cfg, law, payloads):
        s = offdiag_summary(law, cfg.param("m", 256, int), cfg.scales, payloads)
        checks = [
            Check("nonincreasing up to 3 sigma", float(s["monotone"]), "== 1", s["monotone"]),
            Check("flat for r <= 0.2 I(m)", s["flat_ratio"], "<= 2", s["flat_ratio"] <= 2),
            Check("decay at r >= 4 I(m)", s["decay_ratio"], ">= 10", s["decay_ratio"] >= 10),
        ]
        return s, checks

    return replica, summarize


# -- fluctuation-scan ----------------------------------------------------------


def fluctuation_values(law, z, radii):
    S = scaling_for(law)
    ratios = np.stack([volume_from_sizes(z, R) / S.v(R) for R in radii], axis=1)
    return ratios.max(axis=1), np.asarray(radii)[ratios.argmax(axis=1)]


@register(
    "fluctuation-scan", "max over dyadic R of V(R)/v(R)",
    ["max_ratio", "argmax_R"],
    {"experiment.law": "stable:alpha=1.5,c=2/3", "scales.values": " ".join(str(2**k) for k in range(4, 11)),
     "seeds.replicas": "100", "params.batch": "10"},
)
def _fluct():
    def replica(cfg, law, r):
        batch = process_batch(law, cfg.scales[-1] + 1, cfg.param("batch", 10, int), cfg.master_seed, r)
        z = batch.z[~batch.censored]
        mx, arg = fluctuation_values(law, z, cfg.scales)
        rows = _batch_rows(cfg, r, cfg.scales[-1], np.flatnonzero(~batch.censored), max_ratio=mx, argmax_R=arg)
        return Outcome(rows, mx, censored=int(batch.censored.sum()))

    def summarize(cfg, law, payloads):
        x = np.concatenate(payloads)
        hill = tail_index(x, cfg.param("top_fraction", 0.05, float))
        lo, hi = cfg.param("bracket_lo", 0.35, float), cfg.param("bracket_hi", 1.2, float)
        return {"samples": len(x), "hill_index": hill}, [Check("hill index", hill, f"in [{lo}, {hi}]", lo <= hill <= hi)]

    return replica, summarize


# -- attraction ----------------------------------------------------------------


@register(
    "attraction", "centered sums normalized by n^(1/alpha)",
    ["statistic"],
    {"experiment.law": "stable:alpha=1.5,c=2/3", "scales.values": "10000", "seeds.replicas": "10",
     "params.batch": "10000"},
)
def _attraction():
    def replica(cfg, law, r):
        n = cfg.scales[0]
        x = attraction_statistic(law, n, seeds.generator(cfg.master_seed, r, seeds.PROCESS), size=cfg.param("batch", 10000, int))
        return Outcome(_batch_rows(cfg, r, n, np.arange(len(x)), statistic=x), x)

    def summarize(cfg, law, payloads):
        x = np.concatenate(payloads)
        if law.alpha < 2:
            hill = tail_index(x[x > 0], cfg.param("top_fraction", 0.05, float))
            tol = cfg.param("tol", 0.15, float)
            return {"hill_index": hill}, [Check("positive-tail index", hill, f"{law.alpha} +/- {tol}", abs(hill - law.alpha) <= tol)]
        ratio = float(x.var() / law.variance)
        tol = cfg.param("tol", 0.05, float)
        return {"variance_ratio": ratio}, [Check("variance / Var(Z)", ratio, f"1 +/- {tol}", abs(ratio - 1) <= tol)]

    return replica, summarize
