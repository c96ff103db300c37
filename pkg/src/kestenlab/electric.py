"""Exact electrical quantities on a grown ball of T*.

Both computations are single sweeps from the deepest generation up to the
root. Children of a generation-d vertex are found by bincounting the next
generation on ``parent``, so no recursion is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import ScalingFunctions
from .tree import KestenTree


@dataclass
class ResistanceResult:
    R: int
    resistance: float
    reachable: bool


@dataclass
class JCheck:
    vol_lower: bool
    vol_upper: bool
    res_lower: bool

    @property
    def all(self) -> bool:
        return self.vol_lower and self.vol_upper and self.res_lower


def _to_parents(tree: KestenTree, d: int, values: np.ndarray) -> np.ndarray:
    # sum values over depth-(d+1) vertices into their depth-d parents
    gs = tree.gen_start
    lo, hi = gs[d], gs[d + 1]
    parents = tree.parent[gs[d + 1] : gs[d + 2]] - lo
    return np.bincount(parents, weights=values, minlength=hi - lo)


def resistance_to_shell(tree: KestenTree, R: int) -> ResistanceResult:
    """Unit-resistor effective resistance between the root and ``{depth = R}``."""
    if R < 1:
        raise ValueError("R must be >= 1")
    tree._require(R)
    gs = tree.gen_start
    # conductance from each vertex down to the shell, 0 for pruned subtrees
    cond = np.full(gs[R + 1] - gs[R], np.inf)
    for d in range(R - 1, -1, -1):
        with np.errstate(divide="ignore"):
            edge = 1.0 / (1.0 + 1.0 / cond)
        cond = _to_parents(tree, d, edge)
    c = float(cond[0])
    if c <= 0.0:
        raise AssertionError("shell unreachable from the root")
    return ResistanceResult(R=R, resistance=1.0 / c, reachable=True)


def expected_exit_time(tree: KestenTree, R: int) -> float:
    """``E_root[tau_R]``, the expected hitting time of depth R.

    Eliminates children into parents: every vertex satisfies
    ``E_v = a_v + b_v E_parent(v)`` with ``a = b = 0`` on the shell.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    tree._require(R)
    gs = tree.gen_start
    a = np.zeros(gs[R + 1] - gs[R])
    b = np.zeros_like(a)
    for d in range(R - 1, -1, -1):
        lo, hi = gs[d], gs[d + 1]
        deg = tree.n_children[lo:hi].astype(float) + (1.0 if d > 0 else 0.0)
        denom = deg - _to_parents(tree, d, b)
        a = (deg + _to_parents(tree, d, a)) / denom
        b = 1.0 / denom
    return float(a[0])


def check_J(tree: KestenTree, scaling: ScalingFunctions, R: int, lam: float) -> JCheck:
    """The volume and resistance conditions at scale R with slack ``lam``."""
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    vol = tree.ball_stats(R).volume
    vR = scaling.v(R)
    res = resistance_to_shell(tree, R + 1).resistance
    return JCheck(vol_lower=vol >= vR / lam, vol_upper=vol <= lam * vR, res_lower=res >= R / lam)
