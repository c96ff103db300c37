"""Run a registered experiment over its replicas and write CSV plus summary.json.

Replicas are dealt round-robin to worker processes; results are reassembled
in replica order, so the CSV bytes do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from .config import ExperimentConfig
from .experiments import BASE_COLUMNS, REGISTRY, Check, Outcome

log = logging.getLogger(__name__)


@dataclass
class Report:
    experiment: str
    tests: str
    run_id: str
    law: str
    master_seed: int
    replicas: int
    replicas_done: int
    censored: int
    scales: list
    wall_clock_s: float
    summary: dict
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        d = asdict(self)
        d["checks"] = [asdict(c) for c in self.checks]
        d["passed"] = self.passed
        return d


def _run_replicas(cfg_dict: dict, replicas: list, time_cap: float) -> list:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    exp = REGISTRY[cfg.experiment]
    law = cfg.law_object()
    start = time.monotonic()
    out = []
    for r in replicas:
        if time_cap and time.monotonic() - start > time_cap:
            log.warning("time cap reached before replica %d", r)
            break
        out.append((r, exp.replica(cfg, law, r)))
    return out


def run_replica(cfg: ExperimentConfig, replica: int) -> Outcome:
    exp = REGISTRY[cfg.experiment]
    return exp.replica(cfg, cfg.law_object(), replica)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> tuple[Report, list]:
    if cfg.experiment not in REGISTRY:
        raise KeyError(cfg.experiment)
    exp = REGISTRY[cfg.experiment]
    law = cfg.law_object()
    start = time.monotonic()
    idx = list(range(cfg.replicas))
    if threads <= 1:
        results = _run_replicas(cfg.to_dict(), idx, cfg.time_cap)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_replicas, cfg.to_dict(), idx[k::threads], cfg.time_cap) for k in range(threads)]
            results = [item for f in futures for item in f.result()]
    results.sort(key=lambda t: t[0])
    rows = [row for _, o in results for row in o.rows]
    for row in rows:
        row["seed"] = cfg.master_seed
    censored = sum(o.censored for _, o in results)
    summary, checks = exp.summarize(cfg, law, [o.payload for _, o in results])
    report = Report(
        experiment=cfg.experiment, tests=exp.tests, run_id=cfg.run_id(), law=cfg.law, master_seed=cfg.master_seed,
        replicas=cfg.replicas, replicas_done=len(results), censored=censored, scales=list(cfg.scales),
        wall_clock_s=round(time.monotonic() - start, 3), summary=_jsonable(summary), checks=checks,
    )
    if len(results) < cfg.replicas:
        report.checks.append(Check("all replicas completed", len(results), f"== {cfg.replicas}", False))
    return report, rows


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def csv_text(cfg: ExperimentConfig, rows: list) -> str:
    exp = REGISTRY[cfg.experiment]
    columns = list(BASE_COLUMNS) + list(exp.columns)
    buf = io.StringIO()
    buf.write(f"# experiment: {cfg.experiment} ({exp.tests})\n")
    buf.write(f"# law: {cfg.law}\n")
    buf.write(f"# master_seed: {cfg.master_seed}\n")
    buf.write(f"# run_id: {cfg.run_id()}\n")
    buf.write(f"# config: {json.dumps(cfg.to_dict(), sort_keys=True)}\n")
    buf.write("# row_id = experiment:seed:replica:scale:item; item -1 marks per-tree rows\n")
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_outputs(cfg: ExperimentConfig, report: Report, rows: list, out_dir: str | None = None) -> tuple[str, str]:
    out_dir = out_dir or os.path.join(cfg.out, cfg.experiment)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{cfg.experiment}.csv")
    json_path = os.path.join(out_dir, "summary.json")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(cfg, rows))
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
