"""Decision spaces the learners operate on.

A learner only needs a flat coordinate system, the sparse slot gradient in
it, a projection and a linear maximizer.  Two spaces are provided:

* :class:`CacheSpace` for single-cache networks.  The routing is implied by
  the caching (``z[n, i, 0] = y[n, 0]`` is optimal), so only ``y`` is learned
  and the gradient of request ``(n, i)`` is ``w[n, i, 0] e_n``.
* :class:`JointSpace` for general networks, over the flat ``(y, z)`` layout.

Both keep the diameter of the joint set, ``D = sqrt(2 (J C + B))``, as the
step-size constant so that bound envelopes are the same in either space.
"""

from __future__ import annotations

import numpy as np

from .core import CacheNetwork, DecisionVector, FEAS_TOL, GradientVector, InvalidInput, route_all
from .projection import CappedSimplexSpec, JointPolytopeSpec, maximize_joint


def diameter(net: CacheNetwork, batch: int = 1) -> float:
    """``sqrt(2 (J C + B))`` with ``C`` the largest capacity."""
    return float(np.sqrt(2.0 * (net.num_caches * net.max_capacity + batch)))


class CacheSpace:
    """Caching-only coordinates ``y[n]`` of a single-cache network."""

    def __init__(self, net: CacheNetwork, batch: int = 1):
        if net.num_caches != 1:
            raise InvalidInput("CacheSpace needs a single-cache network")
        self.net = net
        self.batch = batch
        self.dim = net.num_files
        self.spec = CappedSimplexSpec(net.num_files, float(net.capacity[0]), 1.0, net.sizes)
        self.D = diameter(net, batch)

    def gradient(self, files, locations) -> GradientVector:
        files = np.asarray(files, dtype=np.int64).reshape(-1)
        locations = np.asarray(locations, dtype=np.int64).reshape(-1)
        _check_indices(self.net, files, locations)
        return GradientVector.build(files, self.net.weights[files, locations, 0], self.dim)

    def project(self, v) -> np.ndarray:
        return self.spec.project(v)

    def maximize(self, a, fill_ties: bool = False) -> np.ndarray:
        return self.spec.maximize(a, fill_ties=fill_ties)

    def empty(self) -> np.ndarray:
        return np.zeros(self.dim)

    def storage(self, x) -> np.ndarray:
        """Size-weighted occupancy per cache, shape ``(J,)``."""
        return np.array([self.net.sizes @ x])

    def price_vector(self, prices) -> np.ndarray:
        """Linear coefficients of ``sum_j s_j sum_n v_n y[n, j]`` in this space."""
        return float(np.asarray(prices, dtype=float).reshape(-1)[0]) * self.net.sizes

    def residual(self, x) -> float:
        return self.spec.residual(x)

    def to_decision(self, x) -> DecisionVector:
        return route_all(self.net, np.asarray(x).reshape(-1, 1))


class JointSpace:
    """Flat ``concat(y.ravel(), z.ravel())`` coordinates of a general network.

    Projections warm-start from the previous call's dual multipliers, so an
    instance should be owned by a single learner.
    """

    def __init__(self, net: CacheNetwork, batch: int = 1, tol: float = 1e-8,
                 method: str = "newton"):
        self.net = net
        self.batch = batch
        self.dim = net.dim
        self.spec = JointPolytopeSpec(net, tol=tol, method=method)
        self.D = diameter(net, batch)
        self._warm = None
        self.last_report = None

    def gradient(self, files, locations) -> GradientVector:
        files = np.asarray(files, dtype=np.int64).reshape(-1)
        locations = np.asarray(locations, dtype=np.int64).reshape(-1)
        _check_indices(self.net, files, locations)
        J = self.net.num_caches
        js = np.arange(J)
        idx = self.net.z_index(files[:, None], locations[:, None], js[None, :])
        val = self.net.weights[files[:, None], locations[:, None], js[None, :]]
        return GradientVector.build(idx, val, self.dim)

    def project(self, v) -> np.ndarray:
        x, report = self.spec.project_report(v, warm=self._warm)
        if report.duals is not None:
            self._warm = report.duals
        self.last_report = report
        return x

    def maximize(self, a, fill_ties: bool = False) -> np.ndarray:
        # ties have no canonical fill order in the joint LP; HiGHS decides
        return maximize_joint(a, self.spec)

    def empty(self) -> np.ndarray:
        return np.zeros(self.dim)

    def storage(self, x) -> np.ndarray:
        N, J = self.net.num_files, self.net.num_caches
        return self.net.sizes @ np.asarray(x)[: N * J].reshape(N, J)

    def price_vector(self, prices) -> np.ndarray:
        N, J = self.net.num_files, self.net.num_caches
        s = np.asarray(prices, dtype=float).reshape(J)
        out = np.zeros(self.dim)
        out[: N * J] = (self.net.sizes[:, None] * s[None, :]).ravel()
        return out

    def residual(self, x) -> float:
        return DecisionVector.from_flat(self.net, x).residual(self.net)

    def to_decision(self, x) -> DecisionVector:
        return DecisionVector.from_flat(self.net, x)


def make_space(net: CacheNetwork, batch: int = 1, joint: bool | None = None, **kw):
    """``CacheSpace`` for single-cache networks unless ``joint`` is forced."""
    if joint is None:
        joint = net.num_caches != 1
    return JointSpace(net, batch, **kw) if joint else CacheSpace(net, batch)


def is_feasible(space, x, tol: float = FEAS_TOL) -> bool:
    return space.residual(x) <= tol


def _check_indices(net, files, locations):
    if files.shape != locations.shape:
        raise InvalidInput("files and locations must have the same length")
    if files.size and (files.min() < 0 or files.max() >= net.num_files
                       or locations.min() < 0 or locations.max() >= net.num_locations):
        raise InvalidInput(
            f"request indices outside N={net.num_files}, I={net.num_locations}")
