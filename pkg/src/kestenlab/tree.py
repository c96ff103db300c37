"""Kesten's tree T*, materialized generation by generation from the spine.

Vertices live in flat int32 arrays. Allocation is breadth-first, so each
generation occupies a contiguous id range and the children of a vertex are
a contiguous block ``first_child[v] .. first_child[v] + n_children[v] - 1``
(the next sibling of ``v`` is simply ``v + 1`` inside that block).

Randomness is consumed one generation at a time: for generation ``d`` the
spine vertex draws its size-biased child count, then the uniform choice of
the spine child, then every other vertex of the generation draws an
ordinary child count in id order. Growing to R1 and later to R2 therefore
reproduces exactly the arrays of growing straight to R2.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .offspring import OffspringLaw

DEFAULT_VERTEX_CAP = 20_000_000
_UNEXPANDED = -1


class NotGrownError(ValueError):
    pass


class VertexBudgetError(MemoryError):
    """Growth would exceed the vertex cap; the realization is censored."""


@dataclass
class BallStats:
    R: int
    volume: int
    vertex_count: int
    generation_sizes: np.ndarray


def _quantile(law: OffspringLaw, u, size_biased=False):
    k = law.invert(1.0 - np.asarray(u, dtype=float), size_biased)
    return np.maximum(k, 1) if size_biased else k


class KestenTree:
    """Arena-stored realization of T*, grown lazily to a requested radius.

    ``grown_radius = R`` means every vertex at depth <= R is present and every
    vertex at depth < R has had its children drawn.
    """

    def __init__(self, law: OffspringLaw | None, seed=None, *, rng=None, vertex_cap: int = DEFAULT_VERTEX_CAP):
        self.law = law
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.vertex_cap = int(vertex_cap)
        self.censored = False
        cap = 256
        self.parent = np.empty(cap, dtype=np.int32)
        self.first_child = np.empty(cap, dtype=np.int32)
        self.n_children = np.empty(cap, dtype=np.int32)
        self.depth = np.empty(cap, dtype=np.int32)
        self.on_spine = np.zeros(cap, dtype=np.bool_)
        self.parent[0] = -1
        self.first_child[0] = -1
        self.n_children[0] = _UNEXPANDED
        self.depth[0] = 0
        self.on_spine[0] = True
        self._gen_start = [0, 1]
        self._spine = [0]

    # -- construction -------------------------------------------------

    @classmethod
    def from_child_counts(cls, generations, spine=None) -> KestenTree:
        """Deterministic fixture: ``generations[d]`` lists child counts of depth-d vertices.

        ``spine[d]`` is the index (within generation d+1) of the spine child;
        by default the first child of the current spine vertex.
        """
        tree = cls(None)
        for d, counts in enumerate(generations):
            counts = np.asarray(counts, dtype=np.int64)
            lo, hi = tree._gen_start[d], tree._gen_start[d + 1]
            if len(counts) != hi - lo:
                raise ValueError(f"generation {d} has {hi - lo} vertices, got {len(counts)} counts")
            s = tree._spine[d]
            if counts[s - lo] < 1:
                raise ValueError("spine vertex must have a child")
            if spine is None:
                j = 0
            else:
                j = spine[d] - (int(counts[: s - lo].sum()))
                if not 0 <= j < counts[s - lo]:
                    raise ValueError(f"spine index {spine[d]} is not a child of the spine vertex")
            tree._attach(counts, j)
        return tree

    @classmethod
    def path(cls, R: int) -> KestenTree:
        """Spine-only tree grown to radius R."""
        return cls.from_child_counts([[1]] * R)

    # -- basic accessors ----------------------------------------------

    @property
    def grown_radius(self) -> int:
        return len(self._gen_start) - 2

    @property
    def n_vertices(self) -> int:
        return self._gen_start[-1]

    @property
    def root(self) -> int:
        return 0

    @property
    def gen_start(self) -> np.ndarray:
        return np.asarray(self._gen_start, dtype=np.int64)

    @property
    def spine(self) -> np.ndarray:
        return np.asarray(self._spine, dtype=np.int64)

    def generation(self, d: int) -> range:
        self._require(d)
        return range(self._gen_start[d], self._gen_start[d + 1])

    def degree(self, v):
        """Graph degree; only defined once ``v`` has been expanded."""
        nc = self.n_children[v]
        if np.any(nc < 0):
            raise NotGrownError("degree of an unexpanded vertex")
        return nc + (np.asarray(v) != 0)

    def next_sibling(self, v: int) -> int:
        p = self.parent[v]
        if p < 0 or v + 1 >= self.first_child[p] + self.n_children[p]:
            return -1
        return v + 1

    def children(self, v: int) -> range:
        nc = int(self.n_children[v])
        if nc < 0:
            raise NotGrownError(f"vertex {v} is not expanded")
        return range(int(self.first_child[v]), int(self.first_child[v]) + nc)

    def arrays(self):
        """Views ``(parent, first_child, n_children, depth, on_spine)`` over live vertices."""
        n = self.n_vertices
        return (self.parent[:n], self.first_child[:n], self.n_children[:n], self.depth[:n], self.on_spine[:n])

    def _require(self, R: int):
        if R > self.grown_radius:
            raise NotGrownError(f"tree grown to radius {self.grown_radius}, need {R}")

    # -- growth -------------------------------------------------------

    def grow_to_radius(self, R: int) -> None:
        if self.censored:
            raise VertexBudgetError("realization already censored")
        while self.grown_radius < R:
            if self.law is None:
                raise NotGrownError("fixture trees cannot grow")
            self._expand_generation()

    def _expand_generation(self):
        d = self.grown_radius
        lo, hi = self._gen_start[d], self._gen_start[d + 1]
        s = self._spine[d] - lo
        u = self.rng.random(hi - lo + 1)
        counts = np.empty(hi - lo, dtype=np.int64)
        k_spine = int(_quantile(self.law, u[0], size_biased=True)[0])
        j = min(int(u[1] * k_spine), k_spine - 1)
        counts[s] = k_spine
        if hi - lo > 1:
            counts[np.arange(hi - lo) != s] = _quantile(self.law, u[2:])
        self._attach(counts, j)

    def _attach(self, counts: np.ndarray, spine_child: int):
        d = self.grown_radius
        lo, hi = self._gen_start[d], self._gen_start[d + 1]
        total = int(counts.sum())
        if hi + total > self.vertex_cap:
            self.censored = True
            raise VertexBudgetError(f"generation {d + 1} would bring the arena to {hi + total} vertices")
        self._reserve(hi + total)
        offsets = hi + np.concatenate(([0], np.cumsum(counts)[:-1]))
        self.first_child[lo:hi] = offsets
        self.n_children[lo:hi] = counts
        new = slice(hi, hi + total)
        self.parent[new] = np.repeat(np.arange(lo, hi, dtype=np.int32), counts)
        self.first_child[new] = -1
        self.n_children[new] = _UNEXPANDED
        self.depth[new] = d + 1
        self.on_spine[new] = False
        b = int(offsets[self._spine[d] - lo]) + spine_child
        self.on_spine[b] = True
        self._spine.append(b)
        self._gen_start.append(hi + total)

    def _reserve(self, n: int):
        cap = len(self.parent)
        if n <= cap:
            return
        new_cap = max(n, 2 * cap)
        for name in ("parent", "first_child", "n_children", "depth", "on_spine"):
            old = getattr(self, name)
            arr = np.zeros(new_cap, dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    # -- geometry -----------------------------------------------------

    def ball_stats(self, R: int) -> BallStats:
        self._require(R + 1)
        n = self._gen_start[R + 1]
        volume = int(self.n_children[:n].sum(dtype=np.int64)) + (n - 1)
        sizes = np.diff(self.gen_start[: R + 2])
        return BallStats(R=R, volume=volume, vertex_count=n, generation_sizes=sizes)

    def volume_profile(self, R: int) -> np.ndarray:
        """``V(r)`` for ``r = 0..R`` in one pass."""
        self._require(R + 1)
        n = self._gen_start[R + 1]
        deg = self.n_children[:n].astype(np.int64) + 1
        deg[0] -= 1
        return np.cumsum(deg)[self.gen_start[1 : R + 2] - 1]

    def backbone_vertex(self, r: int) -> int:
        self._require(r)
        return self._spine[r]

    def count_survivors(self, n: int, horizon: int) -> int:
        """Number of depth-n vertices with a descendant at depth ``horizon``."""
        if horizon < n:
            raise ValueError("horizon must be >= n")
        self._require(horizon)
        gs = self._gen_start
        alive = np.arange(gs[horizon], gs[horizon + 1])
        for _ in range(horizon - n):
            alive = np.unique(self.parent[alive])
        return len(alive)

    def shape(self, R: int) -> tuple:
        """Plane-tree shape of the first R generations: child counts in id order."""
        self._require(R)
        return tuple(int(x) for x in self.n_children[: self._gen_start[R]])

    def dump(self, fh) -> None:
        """Write ``id parent depth spine degree`` lines (degree -1 if unexpanded)."""
        for v in range(self.n_vertices):
            nc = int(self.n_children[v])
            deg = -1 if nc < 0 else nc + (v != 0)
            fh.write(f"{v} {int(self.parent[v])} {int(self.depth[v])} {int(self.on_spine[v])} {deg}\n")


def size_biased_shape_law(law: OffspringLaw, R: int) -> dict[tuple, float]:
    """Exact law of the first R generations of T*: ``P(shape) * Z_R(shape)``.

    Enumerates every plane tree of R generations; finite support only.
    """
    if law.max_support is None:
        raise ValueError("enumeration needs a finite-support law")
    support = [k for k in range(law.max_support + 1) if law.pmf(k) > 0]
    out: dict[tuple, float] = {}

    def extend(prefix, prob, width, gens_left):
        if gens_left == 0:
            if width > 0:
                out[prefix] = out.get(prefix, 0.0) + prob * width
            return
        for counts in itertools.product(support, repeat=width):
            p = prob * math.prod(law.pmf(k) for k in counts)
            extend(prefix + counts, p, sum(counts), gens_left - 1)

    extend((), 1.0, 1, R)
    return out


@dataclass
class Forest:
    """Many independent T* realizations grown side by side to a fixed radius.

    ``levels[d]`` holds, for every depth-d vertex of every tree, the tree id,
    the index of its parent in ``levels[d-1]``, its child count (for d < R)
    and its spine flag. Trees are stored contiguously within each level.
    """

    n_trees: int
    R: int
    tree: list
    parent: list
    n_children: list
    on_spine: list

    def generation_sizes(self) -> np.ndarray:
        return np.stack([np.bincount(t, minlength=self.n_trees) for t in self.tree], axis=1)

    def count_survivors(self, n: int, horizon: int) -> np.ndarray:
        alive = np.ones(len(self.tree[horizon]), dtype=bool)
        for d in range(horizon, n, -1):
            up = np.zeros(len(self.tree[d - 1]), dtype=bool)
            up[self.parent[d][alive]] = True
            alive = up
        return np.bincount(self.tree[n][alive], minlength=self.n_trees)

    def shapes(self) -> list[tuple]:
        per_level = []
        for d in range(self.R):
            bounds = np.cumsum(np.bincount(self.tree[d], minlength=self.n_trees))
            per_level.append(np.split(self.n_children[d], bounds[:-1]))
        return [tuple(itertools.chain.from_iterable(lv[i].tolist() for lv in per_level)) for i in range(self.n_trees)]


def grow_forest(law: OffspringLaw, R: int, n_trees: int, rng: np.random.Generator) -> Forest:
    """Vectorized spine construction of ``n_trees`` independent trees to radius R."""
    tree = [np.arange(n_trees)]
    parent = [np.full(n_trees, -1)]
    spine = [np.ones(n_trees, dtype=bool)]
    counts_by_level = []
    for d in range(R):
        t, sp = tree[-1], spine[-1]
        counts = np.empty(len(t), dtype=np.int64)
        n_sp = int(sp.sum())
        counts[sp] = law.sample_size_biased(rng, n_sp)
        counts[~sp] = law.sample(rng, int((~sp).sum()))
        pick = np.minimum((rng.random(n_sp) * counts[sp]).astype(np.int64), counts[sp] - 1)
        offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
        child_parent = np.repeat(np.arange(len(t)), counts)
        child_spine = np.zeros(len(child_parent), dtype=bool)
        child_spine[offsets[sp] + pick] = True
        counts_by_level.append(counts)
        tree.append(t[child_parent])
        parent.append(child_parent)
        spine.append(child_spine)
    return Forest(n_trees, R, tree, parent, counts_by_level, spine)
