"""Generating-function analytics and process-level simulation of Z*_n, Y*_n.

Nothing here builds a tree: the conditioned generation sizes are simulated
directly from the spine decomposition, and the survivor count uses the
binomial thinning identity for generation-n individuals with descendants
in generation 2n.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .offspring import CanonicalStable, GeometricCritical, OffspringLaw

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 10**6
DEFAULT_POPULATION_CAP = 10**12


class PrecisionError(ArithmeticError):
    """The survival iteration stopped being strictly decreasing."""

    def __init__(self, msg, max_horizon):
        super().__init__(msg)
        self.max_horizon = max_horizon


class UnsupportedFamilyError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SurvivalTable:
    """``p[n] = P(Z_n > 0) = 1 - f_n(0)`` for ``n = 0..N``."""

    law: OffspringLaw
    p: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.p) - 1

    def __getitem__(self, n):
        return self.p[n]


@njit(cache=True)
def _iterate_stable(alpha, c, N, out):
    p = 1.0
    out[0] = p
    for n in range(N):
        p = p - c * p**alpha
        out[n + 1] = p
        if not (0.0 < p < out[n]):
            return n + 1
    return N + 1


@njit(cache=True)
def _iterate_finite(pmf, N, out):
    # 1 - f(1 - p) = sum_k pmf[k] * (1 - (1 - p)^k), each term via expm1/log1p
    p = 1.0
    out[0] = p
    K = len(pmf)
    for n in range(N):
        lp = math.log1p(-p) if p < 1.0 else -math.inf
        s = 0.0
        comp = 0.0
        for k in range(1, K):
            term = pmf[k] * (-math.expm1(k * lp)) if p < 1.0 else pmf[k]
            y = term - comp
            t = s + y
            comp = (t - s) - y
            s = t
        p = s
        out[n + 1] = p
        if not (0.0 < p < out[n]):
            return n + 1
    return N + 1


@functools.lru_cache(maxsize=32)
def build_survival_table(law: OffspringLaw, N: int = DEFAULT_HORIZON) -> SurvivalTable:
    """Exact iterates of the extinction recursion, tracked as ``p`` (not ``1 - p``)."""
    if N < 1:
        raise ValueError("horizon must be >= 1")
    out = np.empty(N + 1)
    if isinstance(law, CanonicalStable):
        reached = _iterate_stable(law.alpha, law.c, N, out)
    elif isinstance(law, GeometricCritical):
        out[:] = 1.0 / (np.arange(N + 1) + 1.0)
        reached = N + 1
    elif law.max_support is not None:
        reached = _iterate_finite(law.pmf_array(law.max_support), N, out)
    else:
        raise UnsupportedFamilyError(f"no survival iteration for {law!r}")
    if reached <= N:
        raise PrecisionError(
            f"survival iteration for {law!r} lost monotonicity at n={reached}", max_horizon=reached - 1
        )
    out.flags.writeable = False
    return SurvivalTable(law, out)


def survival_asymptotic_ratio(table: SurvivalTable, n: int) -> float:
    """``p_n`` divided by its stable-law asymptote ``(c (alpha-1) n)^(-1/(alpha-1))``."""
    law = table.law
    if not isinstance(law, CanonicalStable):
        raise UnsupportedFamilyError("asymptotic ratio needs a CanonicalStable law")
    a, c = law.alpha, law.c
    return float(table.p[n] * (c * (a - 1.0) * n) ** (1.0 / (a - 1.0)))


@njit(cache=True)
def _orbit_stable(alpha, c, q, marks, out):
    row = 0
    for n in range(1, marks[-1] + 1):
        for i in range(len(q)):
            q[i] = q[i] - c * q[i] ** alpha
        if n == marks[row]:
            out[row, :] = q
            row += 1


@njit(cache=True)
def _orbit_finite(pmf, q, marks, out):
    row = 0
    K = len(pmf)
    for n in range(1, marks[-1] + 1):
        for i in range(len(q)):
            lp = math.log1p(-q[i]) if q[i] < 1.0 else -math.inf
            s = 0.0
            for k in range(1, K):
                s += pmf[k] * (-math.expm1(k * lp)) if q[i] < 1.0 else pmf[k]
            q[i] = s
        if n == marks[row]:
            out[row, :] = q
            row += 1


def _orbit(law: OffspringLaw, q0: np.ndarray, marks: np.ndarray) -> np.ndarray:
    """``1 - f_n(1 - q0)`` at each ``n`` in the increasing array ``marks``."""
    q = np.array(q0, dtype=float)
    out = np.empty((len(marks), len(q)))
    if isinstance(law, CanonicalStable):
        _orbit_stable(law.alpha, law.c, q, marks, out)
    elif law.max_support is not None and not isinstance(law, GeometricCritical):
        _orbit_finite(law.pmf_array(law.max_support), q, marks, out)
    else:
        row = 0
        for n in range(1, marks[-1] + 1):
            q = law.extinction_step(q)
            if n == marks[row]:
                out[row] = q
                row += 1
    return out


def u_function(law: OffspringLaw, s, tol: float = 1e-7, max_iter: int = 1 << 21, order: int = 3):
    """Generating function U of the stationary measure, ``U(f(s)) = U(s) + 1``.

    The defining ratio ``(f_n(s) - f_n(0)) / (f_n(0) - f_{n-1}(0))`` only
    converges like 1/n, so the ratios at n = 16, 32, 64, ... are combined by
    Richardson extrapolation. Stops once two successive extrapolated values
    agree to ``tol``; roundoff limits the attainable accuracy to about 1e-8.
    Accepts a scalar or an array of ``s``.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0) or np.any(s_arr >= 1):
        raise ValueError("U is defined on [0, 1)")
    ns = 16 * 2 ** np.arange(int(math.log2(max_iter / 16)) + 1)
    marks = np.sort(np.concatenate([ns - 1, ns]))
    orbit = _orbit(law, np.concatenate([[1.0], 1.0 - s_arr]), marks)
    rows: list[list[np.ndarray]] = []
    best = None
    small = 0
    for j in range(len(ns)):
        prev, cur = orbit[2 * j], orbit[2 * j + 1]
        raw = (cur[0] - cur[1:]) / (prev[0] - cur[0])
        row = [raw]
        if rows:
            for k in range(1, min(order, len(rows)) + 1):
                f = 2.0**k
                row.append((f * row[k - 1] - rows[-1][k - 1]) / (f - 1.0))
        rows.append(row)
        estimate = row[-1]
        if best is not None:
            small = small + 1 if np.max(np.abs(estimate - best)) < tol else 0
            if small >= 2:
                log.debug("U converged at n=%d", ns[j])
                return float(estimate[0]) if np.ndim(s) == 0 else estimate
        best = estimate
    raise ConvergenceError(f"U did not converge to {tol} within {max_iter} iterations")


@dataclass
class ConditionedPath:
    """One realization of the conditioned generation sizes."""

    z: np.ndarray
    y: np.ndarray
    spine_offspring: np.ndarray
    censored: bool = False


def simulate_conditioned_paths(
    law: OffspringLaw,
    n: int,
    size: int,
    rng: np.random.Generator,
    cap: int = DEFAULT_POPULATION_CAP,
    method: str = "multinomial",
):
    """Vectorized ``size`` independent paths of ``Z*_0..Z*_n``.

    ``Z*_{m+1} = Zhat_m + sum_{i < Z*_m} Z_i`` with one size-biased spine draw
    and ordinary draws for the other individuals. Returns ``(z, spine,
    censored)``; censored rows (population above ``cap``) hold -1 from the
    generation where the cap was crossed.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    z = np.zeros((size, n + 1), dtype=np.int64)
    spine = np.zeros((size, n), dtype=np.int64)
    z[:, 0] = 1
    alive = np.ones(size, dtype=bool)
    for m in range(n):
        cur = z[:, m]
        hat = law.sample_size_biased(rng, size)
        others = np.where(alive, cur - 1, 0)
        if method == "multinomial":
            rest = law.sample_sum(others, rng)
        elif method == "direct":
            rest = np.array([_direct_sum(law, int(k), rng, cap) for k in others], dtype=np.int64)
        else:
            raise ValueError(f"unknown method {method!r}")
        nxt = hat.astype(float) + rest
        over = alive & (nxt > cap)
        spine[:, m] = hat
        z[:, m + 1] = np.where(alive, hat + rest, -1)
        if over.any():
            log.info("%d paths censored at generation %d (cap %d)", int(over.sum()), m + 1, cap)
            z[over, m + 1] = -1
            alive &= ~over
    censored = ~alive
    return z, spine, censored


def _direct_sum(law, k, rng, cap, chunk=1 << 20):
    # one draw per individual; stops early once the cap is certainly exceeded
    total = 0
    while k > 0 and total <= cap:
        m = min(k, chunk)
        total += int(law.sample(rng, m).sum())
        k -= m
    return total


def simulate_conditioned_path(law: OffspringLaw, n: int, rng: np.random.Generator, cap: int = DEFAULT_POPULATION_CAP):
    z, spine, censored = simulate_conditioned_paths(law, n, 1, rng, cap)
    z = z[0]
    if censored[0]:
        raise OverflowError(f"conditioned path exceeded population cap {cap}")
    return ConditionedPath(z=z, y=np.cumsum(z), spine_offspring=spine[0], censored=False)


def sample_survivor_counts(law: OffspringLaw, table: SurvivalTable, n: int, size: int, rng: np.random.Generator):
    """``M_n^{2n} = 1 + Bin(Z*_n - 1, p_n)`` for ``size`` independent draws.

    Censored paths are dropped (and logged), never imputed.
    """
    if table.N < n:
        raise ValueError(f"survival table horizon {table.N} < {n}")
    z, _, censored = simulate_conditioned_paths(law, n, size, rng)
    if censored.any():
        log.warning("dropping %d censored paths", int(censored.sum()))
    zn = z[~censored, n]
    return 1 + rng.binomial(zn - 1, table.p[n])


def sample_survivor_count(law, table, n, rng):
    return int(sample_survivor_counts(law, table, n, 1, rng)[0])


def attraction_statistic(law: OffspringLaw, n: int, rng: np.random.Generator, size=None):
    """``(S_n - n) / n**(1/alpha)`` with ``S_n`` a sum of n ordinary draws."""
    reps = 1 if size is None else size
    total = law.sample_sum(np.full(reps, n, dtype=np.int64), rng)
    out = (total - n) / n ** (1.0 / law.alpha)
    return float(out[0]) if size is None else out
