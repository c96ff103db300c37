"""Scaling functions, exponent fits and tail-index estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .branching import SurvivalTable


class HorizonError(ValueError):
    pass


class DegenerateFitError(ValueError):
    pass


class InsufficientSamplesError(ValueError):
    pass


class ScalingFunctions:
    """``v(x) = x / p_x`` at integers, linear in between; ``h(x) = x v(x)``; ``I = h^{-1}``.

    Since ``v`` is linear on each ``[k, k+1]``, ``h`` is quadratic there and
    ``I`` is found by locating the cell and solving that quadratic exactly.
    """

    def __init__(self, table: SurvivalTable):
        self.table = table
        k = np.arange(table.N + 1, dtype=float)
        self._v = k / table.p
        self._h = k * self._v

    @property
    def horizon(self) -> int:
        return self.table.N

    def _cell(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > self.horizon):
            raise HorizonError(f"argument outside [0, {self.horizon}]")
        k = np.minimum(np.floor(x).astype(np.int64), self.horizon - 1)
        return x, k

    def v(self, x):
        x, k = self._cell(x)
        out = self._v[k] + (x - k) * (self._v[k + 1] - self._v[k])
        return float(out) if out.ndim == 0 else out

    def h(self, x):
        out = np.asarray(x, dtype=float) * self.v(x)
        return float(out) if out.ndim == 0 else out

    def I(self, m):
        m = np.asarray(m, dtype=float)
        if np.any(m < 0) or np.any(m > self._h[-1]):
            raise HorizonError(f"argument outside [0, h({self.horizon})]")
        k = np.clip(np.searchsorted(self._h, m, side="right") - 1, 0, self.horizon - 1)
        # on [k, k+1]: h(x) = a x^2 + b x with a = v(k+1) - v(k), b = v(k) - k a
        a = self._v[k + 1] - self._v[k]
        b = self._v[k] - k * a
        disc = np.sqrt(b * b + 4.0 * a * m)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(b >= 0, 2.0 * m / (b + disc), (disc - b) / (2.0 * a))
        x = np.where(m == 0, 0.0, x)
        return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class Exponents:
    exit: float
    spectral: float
    displacement: float
    volume: float
    range: float


def theoretical_exponents(alpha: float) -> Exponents:
    if not 1.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (1, 2]")
    return Exponents(
        exit=(2 * alpha - 1) / (alpha - 1),
        spectral=2 * alpha / (2 * alpha - 1),
        displacement=(alpha - 1) / (2 * alpha - 1),
        volume=alpha / (alpha - 1),
        range=alpha / (2 * alpha - 1),
    )


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    points: list = field(default_factory=list)

    def contains(self, target: float, tol: float) -> bool:
        return abs(self.slope - target) <= tol


def fit_loglog(points) -> ExponentFit:
    """Least squares line through ``(log x, log y)``."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise DegenerateFitError("need at least 3 points")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("log-log fit needs positive data")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    if np.ptp(lx) == 0:
        raise DegenerateFitError("all x values are equal")
    res = stats.linregress(lx, ly)
    return ExponentFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        stderr=float(res.stderr),
        r_squared=float(res.rvalue**2),
        points=list(zip(lx.tolist(), ly.tolist())),
    )


def tail_index(samples, top_fraction: float = 0.05, min_samples: int = 1000) -> float:
    """Hill estimate of the survival exponent from the upper ``top_fraction`` order statistics.

    Returns ``inf`` when the top order statistics are all equal (no tail).
    """
    x = np.asarray(samples, dtype=float)
    if len(x) < min_samples:
        raise InsufficientSamplesError(f"{len(x)} samples, need {min_samples}")
    if not 0.0 < top_fraction <= 0.5:
        raise ValueError("top_fraction must lie in (0, 0.5]")
    if np.any(x <= 0):
        raise ValueError("tail index needs positive samples")
    k = max(int(top_fraction * len(x)), 1)
    top = np.sort(x)[::-1][: k + 1]
    mean_log = float(np.mean(np.log(top[:k] / top[k])))
    return math.inf if mean_log == 0.0 else 1.0 / mean_log
