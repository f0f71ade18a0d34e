import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_routing
from optcache.core import (CacheNetwork, DecisionVector, GradientVector, InvalidInput, Request,
                           RequestBatch, bipartite, gradient, greedy_routing, paper_bipartite,
                           route_all, single_cache, utility)


def two_cache_net(N=5, w=(1.0, 1.0)):
    return bipartite(N, [2.0, 2.0], [[1, 1]], list(w))


def test_network_shapes_and_dim():
    net = paper_bipartite(10, 3)
    assert (net.num_files, net.num_locations, net.num_caches) == (10, 4, 3)
    assert net.dim == 10 * 3 + 10 * 4 * 3
    assert net.w_max == 100.0
    assert net.max_capacity == 3.0
    # unconnected pairs carry no utility
    assert net.weights[0, 0, 2] == 0.0 and net.weights[0, 2, 0] == 0.0


@pytest.mark.parametrize("kwargs", [
    dict(capacity=[-1.0], connectivity=[[1]], weights=np.ones((2, 1, 1))),
    dict(capacity=[1.0], connectivity=[[1]], weights=-np.ones((2, 1, 1))),
    dict(capacity=[1.0, 1.0], connectivity=[[1]], weights=np.ones((2, 1, 1))),
    dict(capacity=[1.0], connectivity=[[1]], weights=np.ones((2, 1, 1)), sizes=[1.0, 0.0]),
])
def test_network_rejects_bad_data(kwargs):
    with pytest.raises(InvalidInput):
        CacheNetwork(**kwargs)


def test_utility_full_coverage_is_one():
    net = two_cache_net()
    x = DecisionVector.zeros(net)
    x.y[3] = [0.4, 0.6]
    x.z[3, 0] = [0.4, 0.6]
    assert utility(net, Request(3, 0), x) == pytest.approx(1.0)


def test_utility_of_empty_cache_is_zero():
    net = two_cache_net()
    assert utility(net, Request(3, 0), DecisionVector.zeros(net)) == 0.0


def test_utility_with_bipartite_weights():
    net = paper_bipartite(4, 2)
    x = DecisionVector.zeros(net)
    x.y[1] = [0.0, 0.5, 0.5]
    x.z[1, 2] = [0.0, 0.5, 0.5]  # location 2 reaches caches 1 and 2
    assert utility(net, Request(1, 2), x) == pytest.approx(51.0)


def test_gradient_carries_cache_weights():
    net = paper_bipartite(4, 2)
    g = gradient(net, Request(1, 0))
    dense = g.dense()
    idx = net.z_index(1, 0, np.arange(3))
    np.testing.assert_array_equal(dense[idx], [1.0, 2.0, 0.0])  # cache 2 is not connected
    net_full = bipartite(4, 2, [[1, 1, 1]], [1.0, 2.0, 100.0])
    d = gradient(net_full, Request(1, 0)).dense()
    np.testing.assert_array_equal(d[net_full.z_index(1, 0, np.arange(3))], [1.0, 2.0, 100.0])
    assert np.count_nonzero(d) == 3


def test_gradient_of_empty_batch_is_zero():
    net = two_cache_net()
    g = gradient(net, RequestBatch((), slot=1))
    assert g.norm_sq() == 0.0


def test_batch_of_identical_requests_doubles_and_matches_finite_differences():
    net = two_cache_net(w=(2.0, 5.0))
    req = RequestBatch((Request(2, 0, 1), Request(2, 0, 1)), 1)
    g = gradient(net, req).dense()
    single = gradient(net, Request(2, 0)).dense()
    np.testing.assert_array_equal(g, 2 * single)
    # utility is linear: finite differences recover the gradient exactly
    rng = np.random.default_rng(0)
    x = DecisionVector.zeros(net)
    x.y[:] = 0.5
    x.z[:] = 0.25
    base = utility(net, req, x)
    for k in rng.choice(net.dim, 10, replace=False):
        flat = x.flat().copy()
        flat[k] += 1e-3
        bumped = DecisionVector.from_flat(net, flat)
        fd = (utility(net, req, bumped) - base) / 1e-3
        assert fd == pytest.approx(g[k], abs=1e-9)


def test_out_of_range_request_raises():
    net = two_cache_net()
    with pytest.raises(InvalidInput):
        gradient(net, Request(5, 0))
    with pytest.raises(InvalidInput):
        utility(net, Request(0, 1), DecisionVector.zeros(net))


@pytest.mark.parametrize("y, expected", [
    ((1.0, 1.0), (0.0, 1.0)),
    ((0.3, 0.5), (0.3, 0.5)),
    ((0.0, 0.0), (0.0, 0.0)),
])
def test_greedy_routing_examples(y, expected):
    net = two_cache_net(N=1, w=(2.0, 5.0))
    x = greedy_routing(net, Request(0, 0), np.array([y]))
    np.testing.assert_allclose(x.z[0, 0], expected)
    best, val = brute_force_routing(np.array([2.0, 5.0]), np.array(y))
    np.testing.assert_allclose(x.z[0, 0], best, atol=1e-12)


def test_greedy_routing_ties_use_lowest_cache():
    net = two_cache_net(N=1, w=(3.0, 3.0))
    x = greedy_routing(net, Request(0, 0), np.array([[1.0, 1.0]]))
    np.testing.assert_array_equal(x.z[0, 0], [1.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_greedy_routing_matches_brute_force(J, seed):
    rng = np.random.default_rng(seed)
    w = rng.choice([0.0, 1.0, 2.0, 5.0], J)
    y = rng.choice(np.arange(0, 1.01, 0.1), J)
    net = bipartite(1, np.full(J, 1.0), np.ones((1, J)), w)
    x = greedy_routing(net, Request(0, 0), y[None, :])
    _, best = brute_force_routing(w, y, step=0.1)
    assert float(w @ x.z[0, 0]) == pytest.approx(best, abs=1e-6)
    assert x.is_feasible(net)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_utility_equals_gradient_inner_product(seed):
    rng = np.random.default_rng(seed)
    net = paper_bipartite(4, 1.5)
    y = np.clip(rng.random((4, 3)), 0, 1)
    y *= np.minimum(1.0, 1.5 / y.sum(axis=0))[None, :]
    x = route_all(net, y)
    assert x.is_feasible(net)
    req = Request(int(rng.integers(4)), int(rng.integers(4)))
    u = utility(net, req, x)
    assert u == pytest.approx(gradient(net, req).dot(x.flat()))
    assert 0.0 <= u <= net.w_max + 1e-12


def test_decision_residual_detects_each_constraint():
    net = two_cache_net(N=2)
    x = DecisionVector.zeros(net)
    assert x.residual(net) == 0.0
    x.z[0, 0, 0] = 0.5  # routed without being cached
    assert x.residual(net) == pytest.approx(0.5)
    x = DecisionVector.zeros(net)
    x.y[:, 0] = [1.0, 1.0]
    x.y[:, 1] = [1.0, 1.0]
    x.z[0, 0] = [0.7, 0.7]  # row sum above one
    assert x.residual(net) == pytest.approx(0.4)


def test_gradient_vector_algebra():
    a = GradientVector.build([1, 3, 1], [1.0, 2.0, 0.5], 5)
    b = GradientVector.build([3], [1.0], 5)
    np.testing.assert_array_equal(a.dense(), [0, 1.5, 0, 2.0, 0])
    assert a.sq_dist(b) == pytest.approx(1.5 ** 2 + 1.0)
    assert (a + b).dense()[3] == 3.0
    assert a.sup_norm == 2.0
    assert GradientVector.zeros(5).norm_sq() == 0.0


def test_single_cache_factory_per_file_weights():
    net = single_cache(3, 1, w=[1.0, 2.0, 3.0], num_locations=2)
    assert net.weights.shape == (3, 2, 1)
    assert net.weights[2, 1, 0] == 3.0
