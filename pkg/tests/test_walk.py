import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kestenlab.electric import expected_exit_time
from kestenlab.offspring import CanonicalStable, FiniteSupport
from kestenlab.tree import KestenTree
from kestenlab.walk import (
    DistributionVector,
    WalkEngine,
    backbone_profile_exact,
    distribution_step,
    estimate_return_profile_mc,
    exact_return_profile,
    return_probability_exact,
    run_walk,
    transition_backbone_exact,
)

from oracles import enumerate_paths

REF = FiniteSupport({0: 0.5, 2: 0.5})


def fixtures():
    yield KestenTree.path(10)
    yield KestenTree.from_child_counts([[2] * 2**d for d in range(9)])
    yield KestenTree.from_child_counts([[3], [0, 2, 1], [1, 0, 2]] + [[1] * 3 for _ in range(7)], spine=[1, 0, 0] + [0] * 7)
    for seed in (1, 2, 3):
        t = KestenTree(REF, seed=seed)
        t.grow_to_radius(10)
        yield t


def test_path_returns():
    t = KestenTree.path(10)
    # the half line reflects at the root: P(X_2 = 0) = 1/2, deg(root) = 1
    assert return_probability_exact(t, 1) == 0.5
    assert return_probability_exact(t, 2) == pytest.approx(0.375)


@pytest.mark.parametrize("i", range(6))
def test_exact_dp_matches_enumeration(i):
    t = list(fixtures())[i]
    prof = exact_return_profile(t, [1, 2, 3, 4])
    for j, m in enumerate([1, 2, 3, 4]):
        assert prof.values[j, 0] == pytest.approx(enumerate_paths(t, 2 * m, 0), abs=1e-12)
    for r in (0, 1, 2):
        exact = enumerate_paths(t, 8, int(t.backbone_vertex(2 * r)))
        assert transition_backbone_exact(t, 4, r) == pytest.approx(exact, abs=1e-12)


def test_dp_matches_distribution_vector():
    t = KestenTree(REF, seed=5)
    t.grow_to_radius(40)
    vec = DistributionVector(0)
    for _ in range(30):
        vec = distribution_step(vec, t)
    assert sum(vec.probs.values()) == pytest.approx(1.0)
    b = int(t.backbone_vertex(4))
    got = backbone_profile_exact(t, 15, [0, 2]).values[0]
    assert got[0] == pytest.approx(vec.probs.get(0, 0.0) / t.degree(0), abs=1e-14)
    assert got[1] == pytest.approx(vec.probs.get(b, 0.0) / t.degree(b), abs=1e-14)


def test_truncated_dp_is_certified():
    t = KestenTree(REF, seed=9)
    exact = exact_return_profile(t, [32, 128])
    approx = exact_return_profile(t, [32, 128], rel_tol=1e-6, start_depth=8)
    assert approx.depth < 128
    assert np.all(approx.error_bound <= 1e-6 * approx.values)
    assert np.all(approx.values <= exact.values + 1e-15)
    assert np.all(exact.values - approx.values <= approx.error_bound + 1e-15)


def test_backbone_beyond_reach_is_zero():
    t = KestenTree(REF, seed=2)
    prof = backbone_profile_exact(t, 3, [0, 1, 5])
    assert prof.values[0, 2] == 0.0 and prof.targets[2] == -1
    assert transition_backbone_exact(t, 3, 4) == 0.0
    with pytest.raises(ValueError):
        return_probability_exact(t, 0)


def test_path_exit_time_mc():
    rng = np.random.default_rng(0)
    t = KestenTree.path(10)
    engine = WalkEngine(t)
    times = [engine.run(10**6, rng, radii=[4], stop_on_exit=True).exit_times[0] for _ in range(4000)]
    se = np.std(times) / math.sqrt(len(times))
    assert abs(np.mean(times) - 16) < 3 * se


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exit_time_mc_matches_exact(seed):
    t = KestenTree(CanonicalStable(1.5), seed=seed)
    t.grow_to_radius(13)
    exact = expected_exit_time(t, 12)
    rng = np.random.default_rng(100 + seed)
    engine = WalkEngine(t)
    times = np.array([engine.run(10**8, rng, radii=[12], stop_on_exit=True).exit_times[0] for _ in range(1500)])
    assert abs(times.mean() - exact) < 3 * times.std() / math.sqrt(len(times))


def test_walk_grows_tree_on_demand():
    t = KestenTree(REF, seed=4)
    assert t.grown_radius == 0
    obs = run_walk(t, 5000, [1000, 5000], np.random.default_rng(0), radii=[3, 6])
    assert t.grown_radius >= obs.max_displacement[-1]
    assert obs.steps == 5000


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3000))
def test_walk_observable_invariants(seed, steps):
    t = KestenTree(REF, seed=seed % 1000)
    cps = sorted({1, steps // 2 or 1, steps})
    obs = run_walk(t, steps, cps, np.random.default_rng(seed), radii=[0, 2, 5])
    assert obs.exit_times[0] == 0 and obs.backbone_hits[0] == 0
    hit = obs.exit_times[obs.exit_times >= 0]
    assert np.all(np.diff(hit) > 0)
    # b_r is at depth r, so it is hit no earlier than depth r
    both = (obs.exit_times >= 0) & (obs.backbone_hits >= 0)
    assert np.all(obs.backbone_hits[both] >= obs.exit_times[both])
    assert np.all(obs.position_depth <= obs.max_displacement)
    assert np.all(obs.max_displacement <= obs.checkpoints)
    assert np.all(obs.range_vertices <= obs.checkpoints + 1)
    assert np.all(np.diff(obs.range_vertices) >= 0)
    assert np.all(obs.range_measure >= obs.range_vertices - 1)
    assert np.all(obs.position_depth % 2 == obs.checkpoints % 2)


def test_walk_is_seed_deterministic():
    a = run_walk(KestenTree(REF, seed=1), 20000, [20000], np.random.default_rng(7), radii=[10])
    b = run_walk(KestenTree(REF, seed=1), 20000, [20000], np.random.default_rng(7), radii=[10])
    assert a.exit_times.tolist() == b.exit_times.tolist()
    assert a.range_vertices.tolist() == b.range_vertices.tolist()


def test_checkpoint_beyond_length():
    with pytest.raises(ValueError):
        run_walk(KestenTree.path(4), 10, [11], np.random.default_rng(0))


def test_mc_returns_bracketed_by_exact():
    t = KestenTree(REF, seed=3)
    est = estimate_return_profile_mc(t, [16, 32], 3000, np.random.default_rng(1))
    exact = exact_return_profile(t, [8, 16, 32, 64]).values[:, 0]
    # the window average lies between p_{4m} and p_{2m}
    for j, (hi, lo) in enumerate([(exact[1], exact[2]), (exact[2], exact[3])]):
        assert lo - 4 * est.stderr[j] <= est.estimate[j] <= hi + 4 * est.stderr[j]
    with pytest.raises(ValueError):
        estimate_return_profile_mc(t, [4], 0, np.random.default_rng(0))
