"""Critical offspring laws in the domain of attraction of an alpha-stable law.

Every law exposes its pmf, its probability generating function, exact
survival functions ``P(Z > k)`` for the ordinary and size-biased laws, and
exact inverse-CDF samplers built on those survival functions.
"""

from __future__ import annotations

import logging
import math
import threading
import warnings
from fractions import Fraction

import numpy as np
from scipy.special import gamma as gamma_fn
from numba import njit
from scipy.special import poch

log = logging.getLogger(__name__)

_HEAD_START = 64
_HEAD_CAP = 1 << 20
_K_LIMIT = 1 << 62
_GUIDE_STEP = 1.0 / 512.0
_BELOW_ONE = np.nextafter(1.0, 0.0)


@njit(cache=True)
def _guided_search(table, guide, v, out):
    # smallest k with table[k] <= v; guide[j] = that index for v = exp(-j * step)
    n = len(table)
    G = len(guide)
    for i in range(len(v)):
        x = v[i]
        j = int(min(-math.log(x) / _GUIDE_STEP, G)) if x < 1.0 else 0
        if j + 1 >= G:
            lo = guide[G - 1]
            hi = n
        else:
            lo = guide[j]
            hi = guide[j + 1]
        while lo < hi:
            mid = (lo + hi) >> 1
            if table[mid] <= x:
                hi = mid
            else:
                lo = mid + 1
        out[i] = lo


@njit(cache=True)
def _tail_sums(table, guide, u, tail_mass, n_tail, out, far_owner, far_v):
    # adds to out[i] the n_tail[i] draws of Z | Z > head; draws past the table are deferred
    idx = np.empty(1, dtype=np.int64)
    v = np.empty(1)
    pos = 0
    n_far = 0
    for i in range(len(n_tail)):
        acc = 0
        for _ in range(n_tail[i]):
            v[0] = (1.0 - u[pos]) * tail_mass
            pos += 1
            _guided_search(table, guide, v, idx)
            if idx[0] >= len(table):
                far_owner[n_far] = i
                far_v[n_far] = v[0]
                n_far += 1
            else:
                acc += idx[0]
        out[i] += acc
    return n_far


def _build_guide(table):
    floor = max(float(table[-1]), 1e-300)
    G = int(-math.log(floor) / _GUIDE_STEP) + 2
    levels = np.exp(-_GUIDE_STEP * np.arange(G))
    return np.searchsorted(-table, -levels, side="left").astype(np.int64)


class OffspringLaw:
    """Base class. Subclasses fill in the family-specific pieces.

    Cached survival tables are built lazily and extended under a lock, so
    one instance may be shared by several sampling threads.
    """

    alpha: float = 2.0
    max_support: int | None = None

    def __init__(self):
        self._lock = threading.Lock()
        self._tables: dict = {}

    # -- family hooks -------------------------------------------------

    def pmf(self, k: int) -> float:
        raise NotImplementedError

    def _head_survival(self, K: int, size_biased: bool) -> np.ndarray:
        """Survival values ``S(0..K)`` (or the size-biased analogue)."""
        raise NotImplementedError

    def _log_tail_survival(self, k: int, size_biased: bool) -> float:
        """``log S(k)`` for arbitrarily large ``k`` (infinite-support laws)."""
        raise NotImplementedError

    def extinction_step(self, p):
        """``1 - f(1 - p)`` evaluated without cancellation; ``p`` may be an array."""
        w = self.pmf_array(self.max_support)[1:]
        ks = np.arange(1, len(w) + 1)
        with np.errstate(divide="ignore"):
            lp = np.log1p(-np.asarray(p, dtype=float))
        out = (w * -np.expm1(np.multiply.outer(lp, ks))).sum(axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def key(self) -> tuple:
        raise NotImplementedError

    # -- generic API --------------------------------------------------

    def __eq__(self, other):
        return isinstance(other, OffspringLaw) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"{type(self).__name__}{self.key[1:]}"

    def pmf_array(self, K: int) -> np.ndarray:
        return np.array([self.pmf(k) for k in range(K + 1)])

    def pgf(self, s: float) -> float:
        _check_unit(s)
        if self.max_support is None:
            raise NotImplementedError
        return float(np.polynomial.polynomial.polyval(s, self.pmf_array(self.max_support)))

    def survival(self, k: int, size_biased: bool = False) -> float:
        """``P(Z > k)``; with ``size_biased`` the same for ``k * pmf(k)``."""
        if k < 0:
            return 1.0
        if self.max_support is not None and k >= self.max_support:
            return 0.0
        table = self._table(size_biased, min_len=min(k + 1, _HEAD_CAP))
        if k < len(table):
            return float(table[k])
        return math.exp(self._log_tail_survival(k, size_biased))

    @property
    def variance(self) -> float:
        if self.max_support is None:
            return math.inf
        ks = np.arange(self.max_support + 1)
        return float(np.sum(ks * ks * self.pmf_array(self.max_support)) - 1.0)

    def sample(self, rng: np.random.Generator, size=None):
        """Exact inverse-CDF draws of Z (smallest k with CDF(k) >= u)."""
        return self._draw(rng, size, size_biased=False)

    def sample_size_biased(self, rng: np.random.Generator, size=None):
        """Exact draws from ``P(k) = k * pmf(k)``; always >= 1."""
        return self._draw(rng, size, size_biased=True)

    def invert(self, v, size_biased: bool = False) -> np.ndarray:
        """Smallest ``k`` with survival ``S(k) <= v`` for each ``v`` in (0, 1].

        With ``v = 1 - u`` this is the inverse CDF at ``u``.
        """
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if np.any(v <= 0.0):
            raise ValueError("survival level must be positive")
        if v.size == 0:
            return np.zeros(0, dtype=np.int64)
        # v = 1 (u = 0) must still land on a value carrying mass
        v = np.minimum(v, _BELOW_ONE)
        table = self._table(size_biased, float(v.min()))
        idx = np.empty(len(v), dtype=np.int64)
        _guided_search(table, self._tables[("guide", size_biased)], v, idx)
        beyond = np.flatnonzero(idx >= len(table))
        for i in beyond:
            idx[i] = self._tail_invert(float(v[i]), size_biased, len(table))
        if size_biased:
            np.maximum(idx, 1, out=idx)
        return idx

    def sample_sum(self, n, rng: np.random.Generator, head: int = 8, tail_budget: int = 1 << 12):
        """Sum of ``n`` independent draws of Z, for an int or int array ``n``.

        Counts of the values ``0..H`` come from one multinomial draw and the
        values above ``H`` are then drawn exactly from the conditional tail.
        ``H = head`` for ordinary ``n``; entries whose expected number of tail
        draws exceeds ``tail_budget`` get their own, larger ``H``. No
        approximation is involved.
        """
        scalar = np.ndim(n) == 0
        n = np.atleast_1d(np.asarray(n, dtype=np.int64))
        if np.any(n < 0):
            raise ValueError("negative number of draws")
        if self.max_support is not None:
            return self._sum_with_head(n, rng, self.max_support, scalar)
        total = np.zeros(len(n), dtype=np.int64)
        big = n * self.survival(head) > tail_budget
        small = ~big
        if small.any():
            total[small] = self._sum_with_head(n[small], rng, head, False)
        if big.any():
            table = self._table(False, min_len=_HEAD_CAP)
            idx = np.flatnonzero(big)
            # smallest H keeping the expected tail count within budget, rounded up to a power of two
            H = np.searchsorted(self._tables[("neg", False)], -tail_budget / n[idx], side="left")
            H = np.minimum(2 ** np.ceil(np.log2(np.maximum(H, head))).astype(np.int64), len(table) - 1)
            for h in np.unique(H):
                sel = idx[H == h]
                total[sel] = self._sum_with_head(n[sel], rng, int(h), False)
        return int(total[0]) if scalar else total

    def _sum_with_head(self, n, rng, head, scalar):
        pvals = self._pmf_head(head)
        tail_mass = self.survival(head)
        if tail_mass > 0.0:
            pvals = np.append(pvals, tail_mass)
        pvals = pvals / math.fsum(pvals)
        counts = rng.multinomial(n, pvals)
        total = counts[:, : head + 1] @ np.arange(head + 1, dtype=np.int64)
        if tail_mass > 0.0:
            n_tail = counts[:, head + 1]
            k = int(n_tail.sum())
            if k:
                table = self._table(False, need=tail_mass * 1e-6)
                far_owner = np.empty(k, dtype=np.int64)
                far_v = np.empty(k)
                n_far = _tail_sums(
                    table, self._tables[("guide", False)], rng.random(k), tail_mass, n_tail, total, far_owner, far_v
                )
                for i, v in zip(far_owner[:n_far], far_v[:n_far]):
                    total[i] += self._tail_invert(float(v), False, len(table))
                if np.any(total > _K_LIMIT) or np.any(total < 0):
                    raise OverflowError("offspring sum exceeds the int64 range")
        return int(total[0]) if scalar else total

    def _pmf_head(self, K: int) -> np.ndarray:
        cached = self._tables.get("pmf")
        if cached is None or len(cached) <= K:
            cached = self.pmf_array(max(K, 2 * (len(cached) - 1) if cached is not None else K))
            self._tables["pmf"] = cached
        return cached[: K + 1]

    # -- internals ----------------------------------------------------

    def _draw(self, rng, size, size_biased):
        u = rng.random(size)
        k = self.invert(1.0 - np.asarray(u), size_biased)
        if size is None:
            return int(k[0])
        return k.reshape(np.shape(u))

    def _table(self, size_biased: bool, need: float | None = None, min_len: int = 0) -> np.ndarray:
        def short(t):
            if t is None:
                return True
            if self.max_support is not None:
                return False
            if need is not None and t[-1] > need and len(t) < _HEAD_CAP:
                return True
            return len(t) < min_len

        table = self._tables.get(size_biased)
        if not short(table):
            return table
        with self._lock:
            table = self._tables.get(size_biased)
            K = _HEAD_START if table is None else len(table) - 1
            if self.max_support is not None:
                K = self.max_support
            while short(table):
                if table is not None:
                    K = 2 * K
                table = self._head_survival(K, size_biased)
                if self.max_support is not None:
                    break
            if table[0] > 1.0 + 1e-12 or np.any(np.diff(table) > 1e-15) or np.any(table < 0):
                raise ArithmeticError(f"survival table of {self!r} is not monotone")
            table = np.minimum.accumulate(np.minimum(table, 1.0))
            self._tables[("neg", size_biased)] = -table
            self._tables[("guide", size_biased)] = _build_guide(table)
            self._tables[size_biased] = table
            log.debug("survival table for %r (size_biased=%s) has %d entries", self, size_biased, len(table))
        return table

    def _tail_invert(self, v: float, size_biased: bool, k0: int) -> int:
        logv = math.log(v)
        lo, hi = k0 - 1, k0
        while self._log_tail_survival(hi, size_biased) > logv:
            lo, hi = hi, 2 * hi
            if hi > _K_LIMIT:
                raise OverflowError("sampled offspring count exceeds the int64 range")
        # invariant: S(lo) > v >= S(hi)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self._log_tail_survival(mid, size_biased) > logv:
                lo = mid
            else:
                hi = mid
        return hi


def _check_unit(s):
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"pgf argument {s} outside [0, 1]")


class CanonicalStable(OffspringLaw):
    """Law with generating function ``f(s) = s + c (1 - s)**alpha``.

    pmf(0) = c, pmf(1) = 1 - c*alpha and pmf(k+1) = pmf(k) (k - alpha)/(k + 1)
    for k >= 2. The default ``c = 1/alpha`` makes pmf(1) vanish; with
    ``alpha = 2`` that is the law {0: 1/2, 2: 1/2}.
    """

    def __init__(self, alpha: float, c: float | None = None):
        super().__init__()
        alpha = float(alpha)
        if not 1.0 < alpha <= 2.0:
            raise ValueError(f"alpha must lie in (1, 2], got {alpha}")
        c = 1.0 / alpha if c is None else float(c)
        if not 0.0 < c <= 1.0 / alpha * (1 + 1e-15):
            raise ValueError(f"c must lie in (0, 1/alpha], got {c}")
        self.alpha = alpha
        self.c = min(c, 1.0 / alpha)
        self.max_support = 2 if alpha == 2.0 else None

    @property
    def key(self):
        return ("stable", self.alpha, self.c)

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        a, c = self.alpha, self.c
        if k == 0:
            return c
        if k == 1:
            return max(0.0, 1.0 - c * a)
        p = c * a * (a - 1.0) / 2.0
        for j in range(2, k):
            p *= (j - a) / (j + 1)
        return p

    def pmf_array(self, K: int) -> np.ndarray:
        a, c = self.alpha, self.c
        out = np.zeros(K + 1)
        out[0] = c
        if K >= 1:
            out[1] = max(0.0, 1.0 - c * a)
        if K >= 2:
            out[2] = c * a * (a - 1.0) / 2.0
            j = np.arange(2, K)
            out[3:] = out[2] * np.cumprod((j - a) / (j + 1))
        if np.any(out < 0):
            raise ArithmeticError("negative canonical stable coefficient")
        return out

    def pgf(self, s: float) -> float:
        _check_unit(s)
        return s + self.c * (1.0 - s) ** self.alpha

    def extinction_step(self, p: float) -> float:
        return p - self.c * p**self.alpha

    def _head_survival(self, K, size_biased):
        a, c = self.alpha, self.c
        out = np.zeros(K + 1)
        out[0] = 1.0 if size_biased else 1.0 - c
        if K >= 1:
            # c a can round to just above 1 when c = 1/alpha
            out[1] = min(c * a if size_biased else c * (a - 1.0), out[0])
        if K >= 2:
            j = np.arange(1, K)
            ratio = (j + 1 - a) / j if size_biased else (j + 1 - a) / (j + 1)
            out[2:] = out[1] * np.cumprod(ratio)
        return out

    def _log_tail_survival(self, k, size_biased):
        a, c = self.alpha, self.c
        if a == 2.0:
            return -math.inf
        if size_biased:
            # c a Gamma(k+1-a) / (Gamma(2-a) Gamma(k))
            return math.log(c * a / gamma_fn(2.0 - a)) - math.log(poch(k + 1.0 - a, a - 1.0))
        b = a - 1.0
        return math.log(c * b / gamma_fn(1.0 - b)) - math.log(poch(k - b, 1.0 + b))


class FiniteSupport(OffspringLaw):
    """Arbitrary critical law on finitely many values."""

    def __init__(self, pmf: dict[int, float]):
        super().__init__()
        if not pmf:
            raise ValueError("empty pmf")
        K = max(pmf)
        probs = np.zeros(K + 1)
        for k, p in pmf.items():
            if k < 0 or p < 0:
                raise ValueError(f"bad pmf entry {k}: {p}")
            probs[int(k)] += float(p)
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {math.fsum(probs)}, not 1")
        if abs(math.fsum(probs * np.arange(K + 1)) - 1.0) > 1e-12:
            raise ValueError("offspring law is not critical (mean != 1)")
        if K >= 1 and probs[1] == 1.0:
            raise ValueError("degenerate law P(Z=1) = 1")
        self._probs = probs
        self.max_support = K

    @property
    def key(self):
        return ("finite", tuple((k, float(p)) for k, p in enumerate(self._probs) if p > 0))

    def pmf(self, k):
        return float(self._probs[k]) if 0 <= k <= self.max_support else 0.0

    def pmf_array(self, K):
        out = np.zeros(K + 1)
        m = min(K, self.max_support)
        out[: m + 1] = self._probs[: m + 1]
        return out

    def _head_survival(self, K, size_biased):
        w = self._probs * np.arange(len(self._probs)) if size_biased else self._probs
        return np.array([math.fsum(w[k + 1 :]) for k in range(K + 1)])


class BinomialCritical(FiniteSupport):
    """Binomial(N, 1/N) offspring."""

    def __init__(self, N: int):
        if N < 2:
            raise ValueError("BinomialCritical needs N >= 2")
        from scipy.stats import binom

        self.N = int(N)
        super().__init__(dict(enumerate(binom.pmf(np.arange(N + 1), N, 1.0 / N))))

    @property
    def key(self):
        return ("binomial", self.N)

    def pgf(self, s):
        _check_unit(s)
        return (1.0 - (1.0 - s) / self.N) ** self.N

    def extinction_step(self, p):
        return -np.expm1(self.N * np.log1p(-np.asarray(p) / self.N))


class GeometricCritical(OffspringLaw):
    """pmf(k) = 2**-(k+1), the critical geometric law."""

    def __init__(self):
        super().__init__()

    @property
    def key(self):
        return ("geometric",)

    def pmf(self, k):
        return 0.5 ** (k + 1) if k >= 0 else 0.0

    def pmf_array(self, K):
        return 0.5 ** (np.arange(K + 1) + 1.0)

    def pgf(self, s):
        _check_unit(s)
        return 1.0 / (2.0 - s)

    def extinction_step(self, p):
        return p / (1.0 + p)

    @property
    def variance(self):
        return 2.0

    def _head_survival(self, K, size_biased):
        k = np.arange(K + 1)
        s = 0.5 ** (k + 1.0)
        return (k + 2) * s if size_biased else s

    def _log_tail_survival(self, k, size_biased):
        base = -(k + 1) * math.log(2.0)
        return base + math.log(k + 2) if size_biased else base


def parse_law(text: str) -> OffspringLaw:
    """Build a law from a string such as ``stable:alpha=1.5,c=2/3``.

    Grammar::

        law      := family [":" params]
        family   := "stable" | "finite" | "binomial" | "geometric"
        params   := key "=" number ("," key "=" number)*
        number   := decimal | integer "/" integer

    ``stable`` takes ``alpha`` and optional ``c`` (default ``1/alpha``);
    ``finite`` takes ``k=prob`` pairs; ``binomial`` takes ``N``.
    """
    family, _, rest = text.strip().partition(":")
    params = {}
    for item in filter(None, (x.strip() for x in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"law parameter {item!r} is not key=value")
        params[key.strip()] = Fraction(value.strip())
    family = family.strip().lower()
    if family == "stable":
        alpha = float(params.pop("alpha"))
        c = params.pop("c", None)
        if c is not None:
            c = float(c)
            if c * alpha > 1.0 and c * alpha - 1.0 < 1e-3:
                warnings.warn(f"c={c} rounded to 1/alpha={1 / alpha}", stacklevel=2)
                c = 1.0 / alpha
        law = CanonicalStable(alpha, c)
    elif family == "finite":
        law = FiniteSupport({int(k): float(v) for k, v in params.items()})
        params = {}
    elif family == "binomial":
        law = BinomialCritical(int(params.pop("N")))
    elif family == "geometric":
        law = GeometricCritical()
    else:
        raise ValueError(f"unknown offspring family {family!r}")
    if params:
        raise ValueError(f"unused law parameters {sorted(params)}")
    return law


def law_to_string(law: OffspringLaw) -> str:
    kind = law.key[0]
    if kind == "stable":
        return f"stable:alpha={law.alpha!r},c={law.c!r}"
    if kind == "binomial":
        return f"binomial:N={law.N}"
    if kind == "geometric":
        return "geometric"
    return "finite:" + ",".join(f"{k}={p!r}" for k, p in law.key[1])
