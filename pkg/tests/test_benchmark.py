import numpy as np
import pytest

from oracles import enumerate_static_caches, joint_lp_oracle
from optcache.benchmark import (bhs, bhs_prefix, bhs_series, bound_thm1, bound_thm1_worst,
                                bound_thm2, bound_thm3, bound_thm3_series, bound_thm3_worst,
                                default_checkpoints, elastic_bhs, regret_series, thm2_constant,
                                xc_single_cache_worst)
from optcache.core import InvalidInput, bipartite, paper_bipartite, single_cache
from optcache.spaces import make_space


def cache_gradients(space, files):
    return [space.gradient([f], [0]) for f in files]


def test_bhs_example_matches_enumeration():
    space = make_space(single_cache(3, 1))
    files = [0, 0, 1, 2, 0]
    res = bhs_prefix(space, cache_gradients(space, files))
    np.testing.assert_array_equal(res.x, [1, 0, 0])
    assert res.value == 3.0 and res.value / len(files) == pytest.approx(0.6)
    best_set, best = enumerate_static_caches(np.bincount(files, minlength=3), 1)
    assert best_set == (0,) and best == res.value


@pytest.mark.parametrize("seed", range(5))
def test_bhs_matches_enumeration_on_random_counts(seed):
    rng = np.random.default_rng(seed)
    N, C = 7, 3
    files = rng.integers(0, N, 40)
    space = make_space(single_cache(N, C))
    res = bhs_prefix(space, cache_gradients(space, files))
    _, best = enumerate_static_caches(np.bincount(files, minlength=N), C)
    assert res.value == pytest.approx(best)
    assert res.residual == 0.0


def test_capacity_above_catalogue_caches_everything():
    space = make_space(single_cache(3, 5))
    res = bhs_prefix(space, cache_gradients(space, [0, 1, 2, 2]))
    np.testing.assert_array_equal(res.x, 1.0)
    assert res.value == 4.0


def test_bipartite_bhs_uses_the_best_connected_cache():
    net = paper_bipartite(2, 1.0)
    space = make_space(net)
    # location 3 reaches caches 1 and 2 (weights 2 and 100)
    g = [space.gradient([0], [3]) for _ in range(3)]
    res = bhs_prefix(space, g)
    x = space.to_decision(res.x)
    assert res.value == pytest.approx(300.0)
    assert x.y[0, 2] == pytest.approx(1.0) and x.z[0, 3, 2] == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(3))
def test_joint_bhs_matches_grid_lp(seed):
    rng = np.random.default_rng(seed)
    net = bipartite(2, [1.0, 1.0], [[1, 1], [1, 0]], [1.0, 3.0])
    space = make_space(net)
    files, locs = rng.integers(0, 2, 10), rng.integers(0, 2, 10)
    a = np.zeros(space.dim)
    for f, l in zip(files, locs):
        space.gradient([f], [l]).add_to(a)
    res = bhs(space, a)
    ref = joint_lp_oracle({"y": a[:4].reshape(2, 2), "z": a[4:].reshape(2, 2, 2)},
                          [1.0, 1.0], net.connectivity, step=0.5)
    assert res.value == pytest.approx(ref)


def test_bhs_series_recomputes_each_prefix():
    space = make_space(single_cache(3, 1))
    files = [1, 1, 0, 0, 0, 2]
    vals = bhs_series(space, cache_gradients(space, files), [2, 4, 6])
    np.testing.assert_array_equal(vals, [2.0, 2.0, 3.0])
    with pytest.raises(InvalidInput):
        bhs_series(space, cache_gradients(space, files), [7])


def test_elastic_bhs_respects_every_budget():
    net = single_cache(4, 3)
    space = make_space(net)
    a = np.array([5.0, 4.0, 3.0, 1.0])
    prices = np.array([[1.0], [2.0]])
    budgets = np.array([3.0, 3.0])  # tightest row: 2 y.sum() <= 3
    res = elastic_bhs(space, a, prices, budgets)
    np.testing.assert_allclose(res.x, [1.0, 0.5, 0.0, 0.0])
    assert res.value == pytest.approx(7.0)
    js = make_space(paper_bipartite(2, 1.0))
    aj = np.zeros(js.dim)
    js.gradient([0], [3]).add_to(aj)
    rj = elastic_bhs(js, aj, np.array([[1.0, 1.0, 4.0]]), np.array([2.0]))
    assert np.all(js.storage(rj.x) @ np.array([1.0, 1.0, 4.0]) <= 2.0 + 1e-9)


def test_regret_series_example():
    R, avg = regret_series([3.0, 5.0], [4.0, 7.0], [2, 4])
    np.testing.assert_array_equal(R, [1.0, 2.0])
    np.testing.assert_array_equal(avg, [0.5, 0.5])
    with pytest.raises(InvalidInput):
        regret_series([1.0], [1.0, 2.0], [1])


def test_default_checkpoints_include_horizon():
    np.testing.assert_array_equal(default_checkpoints(10, 3), [3, 6, 9, 10])
    assert default_checkpoints(1000)[-1] == 1000 and default_checkpoints(1000)[0] == 2
    with pytest.raises(InvalidInput):
        default_checkpoints(10, 0)


def test_prediction_error_envelopes():
    assert bound_thm1_worst(1.0, 1.0, 4) == pytest.approx(8.0)
    assert bound_thm1(1.0, 0.0) == 0.0
    # h_{1:t} = 2 w^2 t makes the data-dependent envelope the worst case
    t = np.arange(1, 20)
    np.testing.assert_allclose(bound_thm1(6.0, 2 * 3.0 ** 2 * t), bound_thm1_worst(6.0, 3.0, t))
    np.testing.assert_allclose(bound_thm1(6.0, 2 * 2 * t, batch=2), bound_thm1_worst(6.0, 1.0, t, 2))


def test_elastic_envelope_constant_and_terms():
    assert thm2_constant(1.0, 1, 1.0, 0.5) == pytest.approx(2.0)
    t = np.array([1.0, 4.0, 16.0])
    r, v = bound_thm2(2.0, 1.0, 0.5, 1.0, 1, 1.0, np.zeros(3), np.zeros(3), t)
    np.testing.assert_allclose(r, 0.5 * 2.0 * np.sqrt(t))  # zero h: only the t^(1 - beta) term
    np.testing.assert_allclose(v, np.sqrt(2.0 * t))
    # a regret large enough makes the radicand negative
    _, vv = bound_thm2(2.0, 1.0, 0.5, 1.0, 1, 1.0, np.zeros(1), np.array([100.0]), np.array([1.0]))
    assert np.isnan(vv[0])


def test_experts_envelopes():
    F = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    # constant expert utilities after the first slot: the data term is 2 ||F_1||
    assert bound_thm3(F, [0.0, 3.0]) == pytest.approx(2.0)
    np.testing.assert_allclose(bound_thm3_series(F, np.array([[0, 1], [0, 2], [0, 3.0]]), [1, 2, 3]),
                               2.0)
    T = np.array([1.0, 4.0, 9.0])
    np.testing.assert_allclose(bound_thm3_worst(1, 1.0, T, 0.0), 2 * np.sqrt(2 * T))
    w, C = 2.0, 4.0
    np.testing.assert_allclose(xc_single_cache_worst(1, C, w, T),
                               2 * (np.sqrt(2) + np.sqrt(C)) * w * np.sqrt(T))
    assert np.all(np.diff(xc_single_cache_worst(2, C, w, np.arange(1, 50))) > 0)
    with pytest.raises(InvalidInput):
        bound_thm3(np.zeros(3), [0.0])
