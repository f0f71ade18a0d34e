"""Domain types for the bipartite caching model.

A network has ``J`` edge caches, ``I`` user locations and a library of ``N``
unit-size (or sized) files.  A decision ``x = (y, z)`` holds the fractional
caching ``y[n, j]`` and the routing ``z[n, i, j]``.  Unless stated otherwise,
indices are zero based.

The flat layout used by the learners is ``concat(y.ravel(), z.ravel())`` with
C-order raveling, so coordinate ``N*J + (n*I + i)*J + j`` is ``z[n, i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

FEAS_TOL = 1e-9


class InvalidInput(ValueError):
    """Raised for out-of-range indices or malformed model data."""


@dataclass(frozen=True)
class CacheNetwork:
    """Bipartite caching topology with utility weights.

    ``weights[n, i, j]`` is the gain of serving a unit of file ``n`` to location
    ``i`` from cache ``j``.  Weights on unconnected pairs are ignored.
    """

    capacity: np.ndarray  # (J,)
    connectivity: np.ndarray  # (I, J) bool
    weights: np.ndarray  # (N, I, J)
    sizes: np.ndarray = field(default=None)  # (N,), default all ones

    def __post_init__(self):
        cap = np.asarray(self.capacity, dtype=float).reshape(-1)
        conn = np.asarray(self.connectivity, dtype=bool)
        w = np.asarray(self.weights, dtype=float)
        if conn.ndim != 2 or w.ndim != 3:
            raise InvalidInput("connectivity must be (I, J) and weights (N, I, J)")
        if w.shape[1:] != conn.shape or cap.shape[0] != conn.shape[1]:
            raise InvalidInput(
                f"shape mismatch: weights {w.shape}, connectivity {conn.shape}, "
                f"capacity {cap.shape}"
            )
        if w.shape[0] < 1:
            raise InvalidInput("library must hold at least one file")
        if np.any(cap < 0) or not np.all(np.isfinite(cap)):
            raise InvalidInput("capacities must be finite and nonnegative")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidInput("utility weights must be finite and nonnegative")
        sizes = self.sizes
        sizes = np.ones(w.shape[0]) if sizes is None else np.asarray(sizes, dtype=float)
        if sizes.shape != (w.shape[0],) or np.any(sizes <= 0):
            raise InvalidInput("sizes must be a positive vector of length N")
        # effective weights: zero where a location cannot reach the cache
        w = w * conn[None, :, :]
        for name, val in (("capacity", cap), ("connectivity", conn),
                          ("weights", w), ("sizes", sizes)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def num_files(self) -> int:
        return self.weights.shape[0]

    @property
    def num_locations(self) -> int:
        return self.weights.shape[1]

    @property
    def num_caches(self) -> int:
        return self.weights.shape[2]

    @property
    def max_capacity(self) -> float:
        return float(self.capacity.max())

    @property
    def w_max(self) -> float:
        return float(self.weights.max())

    @property
    def dim(self) -> int:
        N, I, J = self.weights.shape
        return N * J + N * I * J

    def z_offset(self) -> int:
        return self.num_files * self.num_caches

    def z_index(self, n, i, j):
        N, I, J = self.weights.shape
        return N * J + (np.asarray(n) * I + np.asarray(i)) * J + np.asarray(j)


def single_cache(num_files: int, capacity: float, w: float | Sequence[float] = 1.0,
                 num_locations: int = 1, sizes=None) -> CacheNetwork:
    """One cache reachable from every location; ``w`` is a scalar or per-file."""
    wv = np.broadcast_to(np.asarray(w, dtype=float), (num_files,))
    weights = np.repeat(wv[:, None, None], num_locations, axis=1)
    return CacheNetwork(
        capacity=np.array([capacity], dtype=float),
        connectivity=np.ones((num_locations, 1), dtype=bool),
        weights=weights,
        sizes=sizes,
    )


def bipartite(num_files: int, capacity, connectivity, cache_weights) -> CacheNetwork:
    """Network whose utility depends only on the serving cache: ``w[n,i,j] = cache_weights[j]``."""
    conn = np.asarray(connectivity, dtype=bool)
    I, J = conn.shape
    cap = np.broadcast_to(np.asarray(capacity, dtype=float), (J,))
    cw = np.asarray(cache_weights, dtype=float)
    weights = np.broadcast_to(cw[None, None, :], (num_files, I, J)).copy()
    return CacheNetwork(capacity=cap.copy(), connectivity=conn, weights=weights)


def paper_bipartite(num_files: int, capacity: float) -> CacheNetwork:
    """3 caches, 4 locations: locations 0-1 reach caches {0,1}, 2-3 reach {1,2}; w=(1,2,100)."""
    conn = np.array([[1, 1, 0], [1, 1, 0], [0, 1, 1], [0, 1, 1]], dtype=bool)
    return bipartite(num_files, capacity, conn, [1.0, 2.0, 100.0])


@dataclass(frozen=True)
class Request:
    file: int
    location: int = 0
    slot: int = 1


@dataclass(frozen=True)
class RequestBatch:
    requests: tuple
    slot: int = 1

    def __post_init__(self):
        reqs = tuple(self.requests)
        object.__setattr__(self, "requests", reqs)
        for r in reqs:
            if r.slot != self.slot:
                raise InvalidInput("all requests in a batch must share the slot")

    @property
    def size(self) -> int:
        return len(self.requests)


RequestLike = Union[Request, RequestBatch]


def _as_requests(req: RequestLike) -> tuple:
    if isinstance(req, RequestBatch):
        return req.requests
    return (req,)


def _check(net: CacheNetwork, r: Request) -> None:
    if not (0 <= r.file < net.num_files) or not (0 <= r.location < net.num_locations):
        raise InvalidInput(
            f"request (file={r.file}, location={r.location}) outside "
            f"N={net.num_files}, I={net.num_locations}"
        )


@dataclass
class DecisionVector:
    """Joint caching/routing point ``x = (y, z)``."""

    y: np.ndarray  # (N, J)
    z: np.ndarray  # (N, I, J)

    @classmethod
    def zeros(cls, net: CacheNetwork) -> "DecisionVector":
        N, I, J = net.weights.shape
        return cls(np.zeros((N, J)), np.zeros((N, I, J)))

    @classmethod
    def from_flat(cls, net: CacheNetwork, v: np.ndarray) -> "DecisionVector":
        N, I, J = net.weights.shape
        v = np.asarray(v, dtype=float)
        if v.shape != (net.dim,):
            raise InvalidInput(f"flat vector has shape {v.shape}, expected ({net.dim},)")
        return cls(v[: N * J].reshape(N, J).copy(), v[N * J:].reshape(N, I, J).copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.y.ravel(), self.z.ravel()])

    def residual(self, net: CacheNetwork) -> float:
        """Largest violation of any constraint of the joint feasible set."""
        y, z = self.y, self.z
        used = net.sizes @ y
        parts = [
            np.max(-y, initial=0.0), np.max(y - 1.0, initial=0.0),
            np.max(-z, initial=0.0), np.max(z - 1.0, initial=0.0),
            np.max(used - net.capacity, initial=0.0),
            np.max(z.sum(axis=2) - 1.0, initial=0.0),
            np.max(z - y[:, None, :] * net.connectivity[None, :, :], initial=0.0),
        ]
        return float(max(parts))

    def is_feasible(self, net: CacheNetwork, tol: float = FEAS_TOL) -> bool:
        return self.residual(net) <= tol


@dataclass(frozen=True)
class GradientVector:
    """Sparse nonnegative vector over a flat index space of size ``dim``."""

    idx: np.ndarray
    val: np.ndarray
    dim: int

    @classmethod
    def zeros(cls, dim: int) -> "GradientVector":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0), dim)

    @classmethod
    def build(cls, idx, val, dim: int) -> "GradientVector":
        """Merge duplicate indices; drop exact zeros."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        val = np.asarray(val, dtype=float).reshape(-1)
        if idx.size == 0:
            return cls.zeros(dim)
        uniq, inv = np.unique(idx, return_inverse=True)
        sums = np.bincount(inv, weights=val, minlength=uniq.size)
        keep = sums != 0.0
        return cls(uniq[keep], sums[keep], dim)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.idx] = self.val
        return out

    def add_to(self, target: np.ndarray, scale: float = 1.0) -> None:
        target[self.idx] += scale * self.val

    def dot(self, x: np.ndarray) -> float:
        return float(self.val @ x[self.idx])

    def norm_sq(self) -> float:
        return float(self.val @ self.val)

    def sq_dist(self, other: "GradientVector") -> float:
        """``||self - other||^2`` without densifying."""
        if other.idx.size == 0:
            return self.norm_sq()
        if self.idx.size == 0:
            return other.norm_sq()
        diff = GradientVector.build(
            np.concatenate([self.idx, other.idx]),
            np.concatenate([self.val, -other.val]),
            self.dim,
        )
        return diff.norm_sq()

    def __add__(self, other: "GradientVector") -> "GradientVector":
        return GradientVector.build(
            np.concatenate([self.idx, other.idx]),
            np.concatenate([self.val, other.val]),
            self.dim,
        )

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.val), initial=0.0))


def gradient(net: CacheNetwork, req: RequestLike, x: DecisionVector | None = None) -> GradientVector:
    """Coefficients of the (linear) slot utility on the flat joint layout.

    ``x`` is accepted for interface symmetry; the utility is linear so the
    gradient does not depend on it.
    """
    J = net.num_caches
    idx, val = [], []
    for r in _as_requests(req):
        _check(net, r)
        js = np.arange(J)
        idx.append(net.z_index(r.file, r.location, js))
        val.append(net.weights[r.file, r.location, :])
    if not idx:
        return GradientVector.zeros(net.dim)
    return GradientVector.build(np.concatenate(idx), np.concatenate(val), net.dim)


def utility(net: CacheNetwork, req: RequestLike, x: DecisionVector) -> float:
    """Slot utility: sum over active requests of ``sum_j w[n,i,j] z[n,i,j]``."""
    total = 0.0
    for r in _as_requests(req):
        _check(net, r)
        total += float(net.weights[r.file, r.location, :] @ x.z[r.file, r.location, :])
    return total


def greedy_routing(net: CacheNetwork, req: RequestLike, y: np.ndarray) -> DecisionVector:
    """Best routing for the active requests given the caching ``y``.

    Connected caches are used in decreasing weight order (lowest index first
    on ties), each up to ``y[n, j]``, until the request is fully served.
    """
    y = np.asarray(y, dtype=float).reshape(net.num_files, net.num_caches)
    z = np.zeros(net.weights.shape)
    for r in _as_requests(req):
        _check(net, r)
        n, i = r.file, r.location
        w = net.weights[n, i, :]
        order = np.argsort(-w, kind="stable")
        left = 1.0
        for j in order:
            if left <= 0.0 or w[j] <= 0.0 or not net.connectivity[i, j]:
                continue
            amount = min(max(y[n, j], 0.0), left)
            z[n, i, j] = amount
            left -= amount
    return DecisionVector(y.copy(), z)


def route_all(net: CacheNetwork, y: np.ndarray) -> DecisionVector:
    """Greedy routing applied to every (file, location) pair at once."""
    y = np.asarray(y, dtype=float).reshape(net.num_files, net.num_caches)
    N, I, J = net.weights.shape
    z = np.zeros((N, I, J))
    for i in range(I):
        w = net.weights[:, i, :]
        order = np.argsort(-w, axis=1, kind="stable")
        left = np.ones(N)
        rows = np.arange(N)
        for k in range(J):
            j = order[:, k]
            ok = (w[rows, j] > 0) & net.connectivity[i, j]
            amount = np.where(ok, np.minimum(np.clip(y[rows, j], 0.0, None), left), 0.0)
            z[rows, i, j] = amount
            left = left - amount
    return DecisionVector(y.copy(), z)


def requests_from(files: Iterable[int], locations: Iterable[int] | None = None,
                  start_slot: int = 1) -> list:
    files = list(files)
    locs = [0] * len(files) if locations is None else list(locations)
    return [Request(int(f), int(l), start_slot + k) for k, (f, l) in enumerate(zip(files, locs))]
