"""Simple random walk on a lazily grown T*: Monte Carlo and exact evolution.

The Monte Carlo engine is a resumable numba kernel. It consumes uniforms
from a buffer filled by a numpy Generator and suspends when the buffer runs
dry or when the walk stands on a vertex whose children have not been drawn
yet. The driver then refills or grows the tree (to ``max(R + 2, ceil(9R/8))``) and
resumes. Results never depend on the buffer size.

Exact return and transition probabilities evolve the law of ``X_t`` on the
ball of depth ``D`` with mass leaving the ball discarded. The discarded mass
bounds the error, and the result is exact when ``D >= m + r`` (a walk that
left the ball cannot be back at depth ``2r`` by time ``2m``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .tree import KestenTree

_DONE, _NEED_RANDOMS, _NEED_GROWTH = 0, 1, 2
# indices into the kernel's int64 state vector
_X, _T, _MAXD, _NRANGE, _MU, _IEXIT, _IBB, _ICP, _ROOT, _UPOS, _PENDING = range(11)
_BUFFER = 1 << 16


class SupportOverflowError(MemoryError):
    pass


@dataclass
class WalkObservables:
    """One walk. ``exit_times[i]`` is the first hitting time of depth ``radii[i]``
    and ``backbone_hits[i]`` that of ``b_{radii[i]}`` (-1 if not reached).
    The remaining arrays are read at the checkpoint times."""

    radii: np.ndarray
    exit_times: np.ndarray
    backbone_hits: np.ndarray
    checkpoints: np.ndarray
    max_displacement: np.ndarray
    range_vertices: np.ndarray
    range_measure: np.ndarray
    position_depth: np.ndarray
    root_visits_even: np.ndarray
    steps: int = 0


@njit(cache=True)
def _walk_kernel(parent, first_child, n_children, depth, on_spine, stamp, mark, u, state,
                 steps, radii, stop_on_exit, exits, bb, cps, cp_maxd, cp_nrange, cp_mu, cp_depth, cp_root):
    x = state[_X]
    t = state[_T]
    upos = state[_UPOS]
    while True:
        nc = n_children[x]
        if nc < 0:
            state[_X] = x
            state[_T] = t
            state[_UPOS] = upos
            return _NEED_GROWTH
        deg = nc + (1 if x != 0 else 0)
        if state[_PENDING]:
            state[_PENDING] = 0
            if stamp[x] != mark:
                stamp[x] = mark
                state[_NRANGE] += 1
                state[_MU] += deg
        i = state[_ICP]
        while i < len(cps) and cps[i] == t:
            cp_maxd[i] = state[_MAXD]
            cp_nrange[i] = state[_NRANGE]
            cp_mu[i] = state[_MU]
            cp_depth[i] = depth[x]
            cp_root[i] = state[_ROOT]
            i += 1
        state[_ICP] = i
        if t >= steps or (stop_on_exit and state[_IEXIT] >= len(radii)):
            state[_X] = x
            state[_T] = t
            state[_UPOS] = upos
            return _DONE
        if upos >= len(u):
            state[_X] = x
            state[_T] = t
            state[_UPOS] = 0
            return _NEED_RANDOMS
        j = int(u[upos] * deg)
        upos += 1
        if j >= deg:
            j = deg - 1
        if x != 0:
            if j == 0:
                x = parent[x]
            else:
                x = first_child[x] + j - 1
        else:
            x = first_child[x] + j
        t += 1
        state[_PENDING] = 1
        dx = depth[x]
        if dx > state[_MAXD]:
            state[_MAXD] = dx
        k = state[_IEXIT]
        if k < len(radii) and dx == radii[k]:
            exits[k] = t
            state[_IEXIT] = k + 1
        k = state[_IBB]
        if k < len(radii) and on_spine[x] and dx == radii[k]:
            bb[k] = t
            state[_IBB] = k + 1
        if x == 0 and t % 2 == 0:
            state[_ROOT] += 1


class WalkEngine:
    """Runs independent walks from the root of one tree, growing it on demand."""

    def __init__(self, tree: KestenTree):
        self.tree = tree
        self._stamp = np.zeros(max(tree.n_vertices, 1024), dtype=np.int64)
        self._mark = 0

    def _grow(self):
        R = self.tree.grown_radius
        # a gentle geometric schedule: overshooting only risks the vertex budget
        self.tree.grow_to_radius(max(R + 2, math.ceil(1.125 * R)))
        self._sync()

    def _sync(self):
        tree = self.tree
        if tree.n_vertices > len(self._stamp):
            stamp = np.zeros(max(tree.n_vertices, 2 * len(self._stamp)), dtype=np.int64)
            stamp[: len(self._stamp)] = self._stamp
            self._stamp = stamp

    def run(self, steps: int, rng: np.random.Generator, radii=(), checkpoints=(), stop_on_exit=False) -> WalkObservables:
        """Walk ``steps`` steps (or until every radius is hit when ``stop_on_exit``)."""
        radii = np.asarray(sorted(radii), dtype=np.int64)
        cps = np.asarray(sorted(checkpoints), dtype=np.int64)
        if len(cps) and cps[-1] > steps:
            raise ValueError("checkpoint beyond the walk length")
        self._sync()
        self._mark += 1
        exits = np.full(len(radii), -1, dtype=np.int64)
        bb = np.full(len(radii), -1, dtype=np.int64)
        out = [np.zeros(len(cps), dtype=np.int64) for _ in range(5)]
        state = np.zeros(11, dtype=np.int64)
        state[_PENDING] = 1
        if len(radii) and radii[0] == 0:
            exits[0] = bb[0] = 0
            state[_IEXIT] = state[_IBB] = 1
        state[_ROOT] = 1
        u = np.empty(0)
        while True:
            t = self.tree
            status = _walk_kernel(
                t.parent, t.first_child, t.n_children, t.depth, t.on_spine, self._stamp, self._mark, u, state,
                steps, radii, stop_on_exit, exits, bb, cps, *out,
            )
            if status == _DONE:
                break
            if status == _NEED_RANDOMS:
                u = rng.random(_BUFFER)
            else:
                self._grow()
        return WalkObservables(
            radii=radii, exit_times=exits, backbone_hits=bb, checkpoints=cps,
            max_displacement=out[0], range_vertices=out[1], range_measure=out[2],
            position_depth=out[3], root_visits_even=out[4], steps=int(state[_T]),
        )


def run_walk(tree: KestenTree, steps: int, checkpoints, rng: np.random.Generator, radii=(), stop_on_exit=False):
    return WalkEngine(tree).run(steps, rng, radii=radii, checkpoints=checkpoints, stop_on_exit=stop_on_exit)


# -- exact evolution ---------------------------------------------------


@dataclass
class DistributionVector:
    """Law of ``X_time`` started from the root, as a sparse map."""

    time: int
    probs: dict = field(default_factory=lambda: {0: 1.0})


def distribution_step(vec: DistributionVector, tree: KestenTree) -> DistributionVector:
    tree._require(vec.time + 1)
    out: dict = {}
    for x, p in vec.probs.items():
        nbrs = list(tree.children(x))
        if x != 0:
            nbrs.append(int(tree.parent[x]))
        share = p / len(nbrs)
        for y in nbrs:
            out[y] = out.get(y, 0.0) + share
    return DistributionVector(vec.time + 1, out)


@njit(cache=True)
def _evolve(parent, first_child, n_children, depth, gen_start, D, T, marks, targets, out, killed_at):
    # law of X_t on depths <= D; mass stepping to depth D+1 is dropped
    n = gen_start[D + 1]
    cur = np.zeros(n)
    nxt = np.zeros(n)
    cur[0] = 1.0
    killed = 0.0
    row = 0
    for t in range(1, T + 1):
        top = min(t - 1, D)
        # parity: only depths with depth == t-1 mod 2 carry mass
        for d in range((t - 1) % 2, top + 1, 2):
            for x in range(gen_start[d], gen_start[d + 1]):
                p = cur[x]
                if p == 0.0:
                    continue
                cur[x] = 0.0
                nc = n_children[x]
                deg = nc + (1 if x != 0 else 0)
                share = p / deg
                if x != 0:
                    nxt[parent[x]] += share
                if d < D:
                    c0 = first_child[x]
                    for c in range(c0, c0 + nc):
                        nxt[c] += share
                else:
                    killed += share * nc
        cur, nxt = nxt, cur
        if row < len(marks) and t == marks[row]:
            for j in range(len(targets)):
                out[row, j] = cur[targets[j]]
            killed_at[row] = killed
            row += 1


@dataclass
class ExactProfile:
    """``values[i, j] = P(X_{2 m_i} = target_j) / deg(target_j)`` with certified error."""

    m: np.ndarray
    targets: np.ndarray
    values: np.ndarray
    error_bound: np.ndarray
    depth: int


def _exact_profile(tree: KestenTree, m_list, targets, D: int) -> ExactProfile:
    m = np.asarray(sorted(m_list), dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    tree.grow_to_radius(D + 1)
    gs = tree.gen_start
    if np.any(targets >= gs[D + 1]):
        raise ValueError("target outside the evolved ball")
    marks = 2 * m
    out = np.zeros((len(m), len(targets)))
    killed = np.zeros(len(m))
    _evolve(tree.parent, tree.first_child, tree.n_children, tree.depth, gs, D, int(marks[-1]), marks, targets, out, killed)
    deg = tree.degree(targets).astype(float)
    return ExactProfile(m=m, targets=targets, values=out / deg, error_bound=killed[:, None] / deg, depth=D)


def exact_return_profile(tree: KestenTree, m_list, rel_tol: float = 0.0, start_depth: int = 16) -> ExactProfile:
    """``p_{2m}(root, root)`` for every m, evolving the ball of depth D.

    D starts at ``start_depth`` and doubles until the dropped mass is within
    ``rel_tol`` of every value; ``rel_tol = 0`` forces ``D = max(m)`` (exact).
    """
    m_max = int(max(m_list))
    D = m_max if rel_tol == 0 else min(start_depth, m_max)
    while True:
        prof = _exact_profile(tree, m_list, [0], D)
        if D >= m_max or np.all(prof.error_bound <= rel_tol * prof.values):
            if D >= m_max:
                prof.error_bound[:] = 0.0
            return prof
        D = min(2 * D, m_max)


def return_probability_exact(tree: KestenTree, m: int, rel_tol: float = 0.0) -> float:
    if m < 1:
        raise ValueError("m must be >= 1")
    return float(exact_return_profile(tree, [m], rel_tol).values[0, 0])


def backbone_profile_exact(tree: KestenTree, m: int, r_list, rel_tol: float = 0.0, start_depth: int = 16) -> ExactProfile:
    """``p_{2m}(root, b_{2r})`` for each r in ``r_list`` from a single evolution.

    Entries with ``r > m`` are 0 (the target is out of reach).
    """
    r_all = np.asarray(r_list, dtype=np.int64)
    r = r_all[r_all <= m]
    values = np.zeros((1, len(r_all)))
    bound = np.zeros((1, len(r_all)))
    D = exact = int(m + r.max()) if len(r) else 0
    if len(r) and rel_tol > 0:
        D = min(max(start_depth, 2 * int(r.max())), exact)
    while len(r):
        tree.grow_to_radius(D + 1)
        prof = _exact_profile(tree, [m], [tree.backbone_vertex(2 * int(k)) for k in r], D)
        if D >= exact:
            prof.error_bound[:] = 0.0
        if D >= exact or np.all(prof.error_bound <= rel_tol * prof.values):
            values[:, r_all <= m] = prof.values
            bound[:, r_all <= m] = prof.error_bound
            break
        D = min(2 * D, exact)
    targets = np.array([tree.backbone_vertex(2 * int(k)) if k <= m else -1 for k in r_all])
    return ExactProfile(m=np.array([m]), targets=targets, values=values, error_bound=bound, depth=D)


def transition_backbone_exact(tree: KestenTree, m: int, r: int, rel_tol: float = 0.0) -> float:
    if r > m:
        return 0.0
    return float(backbone_profile_exact(tree, m, [r], rel_tol).values[0, 0])


@dataclass
class ReturnEstimate:
    m: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    walks: int


def estimate_return_profile_mc(tree: KestenTree, m_list, walks: int, rng: np.random.Generator) -> ReturnEstimate:
    """Window estimator of ``p_{2m}(root, root)``.

    Counts returns at the even times ``2k``, ``m <= k <= 2m``, and divides by
    ``walks * (m + 1) * deg(root)``: an unbiased estimate of the average of
    ``p_{2k}`` over the window, which by monotonicity of even returns lies in
    ``[p_{4m}, p_{2m}]``.
    """
    if walks < 1:
        raise ValueError("need at least one walk")
    m = np.asarray(sorted(m_list), dtype=np.int64)
    cps = np.unique(np.concatenate([2 * m - 1, 4 * m]))
    engine = WalkEngine(tree)
    counts = np.zeros((walks, len(m)))
    lo = np.searchsorted(cps, 2 * m - 1)
    hi = np.searchsorted(cps, 4 * m)
    for w in range(walks):
        obs = engine.run(int(4 * m[-1]), rng, checkpoints=cps)
        counts[w] = obs.root_visits_even[hi] - obs.root_visits_even[lo]
    scale = (m + 1) * float(tree.degree(0))
    est = counts.mean(axis=0) / scale
    err = counts.std(axis=0, ddof=1) / math.sqrt(walks) / scale if walks > 1 else np.full(len(m), np.inf)
    return ReturnEstimate(m=m, estimate=est, stderr=err, walks=walks)
