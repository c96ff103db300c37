"""Per-replica computations shared by the experiments and the acceptance suite.

A replica of a tree sweep is one realization of T* (tree stream) together
with its walks (one walk stream per walk index). A replica of a process
sweep is a batch of conditioned generation-size paths.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .branching import DEFAULT_POPULATION_CAP, simulate_conditioned_paths
from .electric import expected_exit_time, resistance_to_shell
from .offspring import OffspringLaw
from .tree import DEFAULT_VERTEX_CAP, KestenTree, VertexBudgetError
from .walk import WalkEngine, backbone_profile_exact, estimate_return_profile_mc, exact_return_profile

log = logging.getLogger(__name__)


def volume_from_sizes(z: np.ndarray, R: int) -> np.ndarray:
    """``V(R) = 2 (Y*_R - 1) + Z*_{R+1}`` from generation sizes (rows are paths)."""
    z = np.atleast_2d(z)
    return 2 * (z[:, : R + 1].sum(axis=1) - 1) + z[:, R + 1]


@dataclass
class ProcessBatch:
    replica: int
    z: np.ndarray
    censored: np.ndarray


def process_batch(law: OffspringLaw, n: int, batch: int, master: int, replica: int,
                  cap: int = DEFAULT_POPULATION_CAP) -> ProcessBatch:
    rng = seeds.generator(master, replica, seeds.PROCESS)
    z, _, censored = simulate_conditioned_paths(law, n, batch, rng, cap)
    return ProcessBatch(replica, z, censored)


@dataclass
class TreeSweep:
    """What to compute on each tree. Empty lists switch a part off."""

    law: OffspringLaw
    master: int
    exit_radii: list = field(default_factory=list)
    exit_walks: int = 0
    exact_exit: bool = True
    checkpoints: list = field(default_factory=list)
    path_walks: int = 0
    return_m: list = field(default_factory=list)
    return_rel_tol: float = 1e-6
    mc_walks: int = 0
    backbone_m: int = 0
    backbone_r: list = field(default_factory=list)
    vertex_cap: int = DEFAULT_VERTEX_CAP
    walk_cap: int = 10**9


@dataclass
class TreeRecord:
    replica: int
    censored: str = ""
    root_degree: int = 0
    volume: dict = field(default_factory=dict)
    exact_exit: dict = field(default_factory=dict)
    exit_times: np.ndarray | None = None
    backbone_hits: np.ndarray | None = None
    max_displacement: np.ndarray | None = None
    position_depth: np.ndarray | None = None
    range_vertices: np.ndarray | None = None
    range_measure: np.ndarray | None = None
    returns: np.ndarray | None = None
    return_source: str = ""
    return_error: np.ndarray | None = None
    backbone_profile: np.ndarray | None = None


def tree_replica(sweep: TreeSweep, replica: int) -> TreeRecord:
    """One tree and its walks; a vertex-budget overflow marks the record censored."""
    tree = KestenTree(sweep.law, rng=seeds.generator(sweep.master, replica, seeds.TREE), vertex_cap=sweep.vertex_cap)
    rec = TreeRecord(replica)
    try:
        _fill(tree, sweep, rec)
    except VertexBudgetError as exc:
        rec.censored = f"vertex budget: {exc}"
        log.info("replica %d censored: %s", replica, exc)
    return rec


def _fill(tree: KestenTree, sweep: TreeSweep, rec: TreeRecord):
    tree.grow_to_radius(1)
    rec.root_degree = int(tree.degree(0))
    if sweep.exit_radii:
        radii = sorted(sweep.exit_radii)
        tree.grow_to_radius(radii[-1] + 1)
        for R in radii:
            rec.volume[R] = tree.ball_stats(R).volume
            if sweep.exact_exit:
                rec.exact_exit[R] = expected_exit_time(tree, R)
        if sweep.exit_walks:
            engine = WalkEngine(tree)
            ex = np.empty((sweep.exit_walks, len(radii)), dtype=np.int64)
            bb = np.empty_like(ex)
            for w in range(sweep.exit_walks):
                rng = seeds.generator(sweep.master, rec.replica, seeds.WALK, seeds.EXIT_WALK, w)
                obs = engine.run(sweep.walk_cap, rng, radii=radii, stop_on_exit=True)
                ex[w], bb[w] = obs.exit_times, obs.backbone_hits
            rec.exit_times, rec.backbone_hits = ex, bb
    if sweep.path_walks and sweep.checkpoints:
        cps = sorted(sweep.checkpoints)
        engine = WalkEngine(tree)
        arrays = [np.empty((sweep.path_walks, len(cps)), dtype=np.int64) for _ in range(4)]
        for w in range(sweep.path_walks):
            rng = seeds.generator(sweep.master, rec.replica, seeds.WALK, seeds.PATH_WALK, w)
            obs = engine.run(cps[-1], rng, checkpoints=cps)
            for arr, val in zip(arrays, (obs.max_displacement, obs.position_depth, obs.range_vertices, obs.range_measure)):
                arr[w] = val
        rec.max_displacement, rec.position_depth, rec.range_vertices, rec.range_measure = arrays
    if sweep.return_m:
        try:
            prof = exact_return_profile(tree, sweep.return_m, rel_tol=sweep.return_rel_tol)
            rec.returns, rec.return_error, rec.return_source = prof.values[:, 0], prof.error_bound[:, 0], "exact"
        except VertexBudgetError:
            if not sweep.mc_walks:
                raise
            # the exact ball does not fit; fall back to the window estimator
            tree.censored = False
            rng = seeds.generator(sweep.master, rec.replica, seeds.WALK, 2)
            est = estimate_return_profile_mc(tree, sweep.return_m, sweep.mc_walks, rng)
            rec.returns, rec.return_error, rec.return_source = est.estimate, est.stderr, "mc"
    if sweep.backbone_m:
        prof = backbone_profile_exact(tree, sweep.backbone_m, sweep.backbone_r)
        rec.backbone_profile = prof.values[0]


def resistance_replica(law: OffspringLaw, master: int, replica: int, radii, vertex_cap=DEFAULT_VERTEX_CAP) -> dict:
    """Exact per-realization quantities for the inequality checks at each R."""
    tree = KestenTree(law, rng=seeds.generator(master, replica, seeds.TREE), vertex_cap=vertex_cap)
    radii = sorted(radii)
    tree.grow_to_radius(2 * radii[-1] + 1)
    out = {}
    for R in radii:
        out[R] = {
            "resistance": resistance_to_shell(tree, 2 * R + 1).resistance,
            "survivors": tree.count_survivors(R, 2 * R),
        }
    return out
