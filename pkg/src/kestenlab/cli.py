"""``lab`` command line: run, list, replay, dump."""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys

from . import runner
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import REGISTRY, parse_row_id
from .offspring import parse_law
from .tree import KestenTree


def _defaults_for(name: str) -> dict:
    if name not in REGISTRY:
        raise KeyError(name)
    return {"experiment.name": name, **REGISTRY[name].defaults}


def _registry_listing() -> str:
    width = max(map(len, REGISTRY))
    return "\n".join(f"  {name:<{width}}  {exp.tests}" for name, exp in REGISTRY.items())


def _resolve(config: str, overrides) -> ExperimentConfig:
    if os.path.exists(config):
        # peek at the experiment name so registry defaults can sit underneath the file
        parser = configparser.ConfigParser(interpolation=None)
        parser.read(config, encoding="utf-8")
        name = parser.get("experiment", "name", fallback=None)
        for item in overrides:
            if item.split("=", 1)[0].strip() in ("name", "experiment.name"):
                name = item.split("=", 1)[1].strip()
        if name is None:
            raise ConfigError(f"{config}: [experiment] name missing")
        if name not in REGISTRY:
            raise KeyError(name)
        return load_config(config, overrides, _defaults_for(name))
    return load_config(None, overrides, _defaults_for(config))


def cmd_run(args) -> int:
    try:
        cfg = _resolve(args.config, args.set)
    except KeyError as exc:
        print(f"unknown experiment {exc.args[0]!r}; registry:\n{_registry_listing()}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    report, rows = runner.run_experiment(cfg, threads=args.threads)
    csv_path, json_path = runner.write_outputs(cfg, report, rows, args.out)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g} (target {c.target})")
    print(f"wrote {csv_path} and {json_path}")
    if not cfg.assertions:
        return 0
    return 0 if report.passed else 1


def cmd_list(args) -> int:
    print(_registry_listing())
    return 0


def _find_row(row_id: str, root: str):
    for dirpath, _, files in os.walk(root):
        for f in sorted(files):
            if not f.endswith(".csv"):
                continue
            path = os.path.join(dirpath, f)
            config = None
            with open(path, encoding="utf-8") as fh:
                lines = [ln for ln in fh]
            for ln in lines:
                if ln.startswith("# config: "):
                    config = json.loads(ln[len("# config: "):])
            body = [ln for ln in lines if not ln.startswith("#")]
            for row in csv.DictReader(body):
                if row.get("row_id") == row_id:
                    return config, row
    return None, None


def cmd_replay(args) -> int:
    logging.basicConfig(level=logging.DEBUG, format="%(name)s: %(message)s")
    try:
        name, seed, replica, scale, item = parse_row_id(args.row_id)
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return 2
    config, stored = _find_row(args.row_id, args.out or "runs")
    if config is not None:
        cfg = ExperimentConfig.from_dict(config)
    else:
        try:
            cfg = load_config(None, args.set, _defaults_for(name), environ={})
        except KeyError:
            print(f"unknown experiment {name!r}; registry:\n{_registry_listing()}", file=sys.stderr)
            return 2
        cfg.master_seed = seed
    outcome = runner.run_replica(cfg, replica)
    rows = [r for r in outcome.rows if str(r["scale"]) == str(scale) and r["item"] == item]
    if not rows:
        print(f"replica {replica} produced no row for scale={scale}, item={item}", file=sys.stderr)
        return 1
    row = {**rows[0], "seed": cfg.master_seed}
    for k, v in row.items():
        print(f"{k} = {v}")
    if stored is not None:
        same = all(str(runner._fmt(row.get(k, ""))) == v for k, v in stored.items() if v != "")
        print("matches stored row" if same else "MISMATCH with stored row")
        return 0 if same else 1
    return 0


def cmd_dump(args) -> int:
    tree = KestenTree(parse_law(args.law), seed=args.seed)
    tree.grow_to_radius(args.radius)
    tree.dump(sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="Kesten tree and random walk experiments")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment (config file or registry name)")
    r.add_argument("config")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--out", default=None, help="output directory (default <output.dir>/<experiment>)")
    r.add_argument("--threads", type=int, default=1)
    r.set_defaults(func=cmd_run)
    sub.add_parser("list", help="list registered experiments").set_defaults(func=cmd_list)
    rp = sub.add_parser("replay", help="rerun the realization behind one CSV row")
    rp.add_argument("row_id")
    rp.add_argument("--out", default=None, help="directory searched for the CSV holding the row (default runs)")
    rp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    rp.set_defaults(func=cmd_replay)
    d = sub.add_parser("dump", help="print a grown tree as 'id parent depth spine degree'")
    d.add_argument("--law", default="finite:0=0.5,2=0.5")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--radius", type=int, default=4)
    d.set_defaults(func=cmd_dump)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "replay":
        logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
