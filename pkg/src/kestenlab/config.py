"""Experiment configuration: sectioned key=value files plus command-line overrides.

Example::

    [experiment]
    name = exit-time
    law = finite:0=0.5,2=0.5

    [seeds]
    master_seed = 7
    replicas = 200

    [scales]
    values = 8, 16, 32, 64, 128

    [params]
    walks = 20

Keys of ``[params]`` are experiment specific. ``--set key=value`` accepts
either ``section.key`` or a bare key; bare keys that are not core fields go
to ``[params]``, except ``seed`` and ``scales``, which name
``master_seed`` and ``[scales] values``. The ``LAB_SEED`` environment variable overrides
``master_seed``.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

from .offspring import OffspringLaw, parse_law

_CORE = {
    "experiment.name": "experiment",
    "experiment.law": "law",
    "seeds.master_seed": "master_seed",
    "seeds.replicas": "replicas",
    "scales.values": "scales",
    "budgets.vertex_cap": "vertex_cap",
    "budgets.walk_cap": "walk_cap",
    "budgets.time_cap": "time_cap",
    "output.dir": "out",
    "output.assertions": "assertions",
}
_BARE = {k.split(".", 1)[1]: k for k in _CORE}
_BARE["seed"] = "seeds.master_seed"
_BARE["scales"] = "scales.values"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    law: str = ""
    master_seed: int = 0
    replicas: int = 1
    scales: list = field(default_factory=list)
    vertex_cap: int = 20_000_000
    walk_cap: int = 10**9
    time_cap: float = 0.0
    out: str = "runs"
    assertions: bool = True
    params: dict = field(default_factory=dict)

    def law_object(self) -> OffspringLaw:
        return parse_law(self.law)

    def param(self, key: str, default=None, kind=None):
        if key not in self.params:
            return default
        raw = self.params[key]
        kind = kind or (type(default) if default is not None else str)
        try:
            if kind is bool:
                return _parse_bool(raw)
            if kind is list:
                return _parse_list(raw)
            return kind(raw)
        except ValueError as exc:
            raise ConfigError(f"[params] {key} = {raw!r}: {exc}") from exc

    def run_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        return cls(**d)


def _parse_bool(raw: str) -> bool:
    low = str(raw).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_list(raw) -> list:
    if isinstance(raw, list):
        return raw
    vals = []
    for tok in str(raw).replace(",", " ").split():
        vals.append(int(float(tok)) if float(tok).is_integer() else float(tok))
    return vals


def _apply(cfg: ExperimentConfig, dotted: str, raw: str, where: str):
    if dotted in _CORE:
        name = _CORE[dotted]
        current = getattr(cfg, name)
        try:
            if name == "scales":
                value = _parse_list(raw)
            elif isinstance(current, bool):
                value = _parse_bool(raw)
            elif isinstance(current, int):
                value = int(float(raw))
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = str(raw).strip()
        except ValueError as exc:
            raise ConfigError(f"{where}: {dotted} = {raw!r}: {exc}") from exc
        setattr(cfg, name, value)
    elif dotted.startswith("params."):
        cfg.params[dotted.split(".", 1)[1]] = str(raw).strip()
    else:
        raise ConfigError(f"{where}: unknown key {dotted!r}")


def load_config(path: str | None, overrides=(), defaults: dict | None = None, environ=None) -> ExperimentConfig:
    """Build a config from registry defaults, then the file, then ``--set`` overrides, then LAB_SEED."""
    environ = os.environ if environ is None else environ
    cfg = ExperimentConfig(experiment="")
    for dotted, raw in (defaults or {}).items():
        _apply(cfg, dotted, raw, "defaults")
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.readlines()
            parser.read_string("".join(lines), source=path)
        except (configparser.Error, OSError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply(cfg, f"{section}.{key}", raw, f"{path}:{_line_of(lines, section, key)}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        dotted = key if "." in key else _BARE.get(key, f"params.{key}")
        _apply(cfg, dotted, raw, f"--set {key}")
    if "LAB_SEED" in environ:
        _apply(cfg, "seeds.master_seed", environ["LAB_SEED"], "LAB_SEED")
    validate(cfg)
    return cfg


def _line_of(lines, section, key) -> int:
    in_section = False
    for i, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("["):
            in_section = s.strip("[]").strip() == section
        elif in_section and s.split("=", 1)[0].strip().lower() == key:
            return i
    return 0


def validate(cfg: ExperimentConfig):
    if not cfg.experiment:
        raise ConfigError("experiment name missing")
    if cfg.replicas < 1:
        raise ConfigError("replicas must be >= 1")
    if not cfg.scales:
        raise ConfigError("scales must be nonempty")
    if any(b <= a for a, b in zip(cfg.scales, cfg.scales[1:])):
        raise ConfigError(f"scales must be increasing: {cfg.scales}")
    if cfg.law:
        try:
            parse_law(cfg.law)
        except ValueError as exc:
            raise ConfigError(f"law {cfg.law!r}: {exc}") from exc
