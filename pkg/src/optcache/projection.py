"""Euclidean projections and the proximal FTRL argmin.

Three sets are supported: the capped simplex ``{0 <= y <= cap, a.y <= K}``,
the probability simplex, and the joint caching/routing polytope of a
:class:`~optcache.core.CacheNetwork`.  The joint polytope is the intersection
of three families, each with an exact closed-form projection:

* per-cache capacity (a capped simplex on every column of ``y``),
* per-request routing rows ``{z[n,i,:] >= 0, sum_j z[n,i,j] <= 1}``,
* per-(file, cache) coupling ``{0 <= z[n,i,j] <= y[n,j] ell[i,j], y[n,j] <= 1}``.

Two solvers are available.  ``"newton"`` (default) keeps the coupling family
as the inner set and runs a projected semismooth Newton method on the dual of
the capacity and routing-row constraints.  ``"dykstra"`` alternates the three
closed-form projections.  Newton stops on the dual KKT residual, Dykstra on a
duality-gap certificate; both report that certificate, which bounds the
distance of the returned (repaired, feasible) point to the exact answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

from .core import FEAS_TOL, CacheNetwork, DecisionVector, InvalidInput

MAX_SWEEPS = 10_000
DYKSTRA_TOL = 1e-8
NEWTON_REG = 1e-4  # relative Tikhonov term for singular dual Hessians


class ProjectionError(RuntimeError):
    """Raised when the joint projection misses its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class CappedSimplexSpec:
    """``{y in R^d : 0 <= y <= cap, sum_i sizes_i y_i <= budget}``."""

    dim: int
    budget: float
    cap: float = 1.0
    sizes: np.ndarray | None = None

    def __post_init__(self):
        if self.budget < 0:
            raise InvalidInput(f"budget must be nonnegative, got {self.budget}")
        if self.cap < 0:
            raise InvalidInput(f"cap must be nonnegative, got {self.cap}")
        if self.sizes is not None:
            s = np.asarray(self.sizes, dtype=float)
            if s.shape != (self.dim,) or np.any(s <= 0):
                raise InvalidInput("sizes must be positive with one entry per coordinate")
            object.__setattr__(self, "sizes", s)

    def weights(self) -> np.ndarray:
        return np.ones(self.dim) if self.sizes is None else self.sizes

    def project(self, v: np.ndarray) -> np.ndarray:
        return project_capped_simplex(v, self)

    def maximize(self, a: np.ndarray, fill_ties: bool = False) -> np.ndarray:
        return maximize_capped_simplex(a, self, fill_ties=fill_ties)

    def residual(self, y: np.ndarray) -> float:
        y = np.asarray(y, dtype=float)
        return float(max(np.max(-y, initial=0.0), np.max(y - self.cap, initial=0.0),
                         self.weights() @ y - self.budget, 0.0))


@dataclass
class ProjectionReport:
    """Outcome of a joint projection; ``distance`` is the certified error bound."""

    iterations: int
    residual: float
    converged: bool
    distance: float = 0.0
    method: str = "newton"
    duals: np.ndarray | None = field(default=None, repr=False)
    kkt: float = 0.0


def _capped_threshold(v, a, cap, budget):
    """Return ``theta >= 0`` with ``a . clip(v - theta a, 0, cap) = budget``."""
    lo = (v - cap) / a  # coordinate leaves the cap
    hi = v / a  # coordinate reaches zero
    bps = np.concatenate([lo, hi])
    dslope = np.concatenate([-(a * a), a * a])
    order = np.argsort(bps, kind="stable")
    bps, dslope = bps[order], dslope[order]
    slope = np.cumsum(dslope)  # slope on (bps[k], bps[k+1])
    seg = np.diff(bps) * slope[:-1]
    s_at = cap * a.sum() + np.concatenate([[0.0], np.cumsum(seg)])
    k = int(np.searchsorted(-s_at, -budget, side="left"))
    k = min(max(k, 1), bps.size - 1)
    # refine with the exact active set of the bracketing segment
    mid = 0.5 * (bps[k - 1] + bps[k])
    u = v - mid * a
    free = (u > 0) & (u < cap)
    capped = u >= cap
    denom = float(a[free] @ a[free])
    if denom <= 0.0:
        return float(bps[k])
    return float((a[free] @ v[free] + cap * a[capped].sum() - budget) / denom)


def project_capped_simplex(v, spec: CappedSimplexSpec) -> np.ndarray:
    """Exact Euclidean projection onto the capped simplex (KKT threshold search)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (spec.dim,):
        raise InvalidInput(f"vector shape {v.shape} does not match dim {spec.dim}")
    if not np.all(np.isfinite(v)):
        raise InvalidInput("vector has non-finite entries")
    a = spec.weights()
    y = np.clip(v, 0.0, spec.cap)
    if a @ y <= spec.budget:
        return y
    theta = _capped_threshold(v, a, spec.cap, spec.budget)
    return np.clip(v - theta * a, 0.0, spec.cap)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{u >= 0, sum(u) = 1}``."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise InvalidInput("cannot project an empty vector onto the simplex")
    return _simplex_rows(v[None, :])[0]


def _simplex_rows(V: np.ndarray) -> np.ndarray:
    """Row-wise projection onto the probability simplex (sort-based)."""
    n = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ks = np.arange(1, n + 1)
    cond = U - css / ks > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)


def _sub_simplex_rows(Z: np.ndarray) -> np.ndarray:
    """Row-wise projection onto ``{z >= 0, sum(z) <= 1}``."""
    out = np.maximum(Z, 0.0)
    over = out.sum(axis=1) > 1.0
    if np.any(over):
        out[over] = _simplex_rows(Z[over])
    return out


def maximize_capped_simplex(a, spec: CappedSimplexSpec, fill_ties: bool = False) -> np.ndarray:
    """Maximize ``a . y`` over the capped simplex (fractional knapsack).

    Coordinates are taken by decreasing ``a_i / size_i``, lowest index first on
    ties.  Nonpositive coefficients are skipped, except that ``fill_ties``
    also spends leftover budget on zero coefficients.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (spec.dim,):
        raise InvalidInput(f"coefficient shape {a.shape} does not match dim {spec.dim}")
    sizes = spec.weights()
    y = np.zeros(spec.dim)
    ok = a >= 0 if fill_ties else a > 0
    cand = np.flatnonzero(ok)
    if cand.size == 0 or spec.budget <= 0 or spec.cap <= 0:
        return y
    ratio = a[cand] / sizes[cand]
    cand = cand[np.argsort(-ratio, kind="stable")]
    take = spec.cap * sizes[cand]
    cum = np.cumsum(take)
    full = cum <= spec.budget
    y[cand[full]] = spec.cap
    nfull = int(full.sum())
    if nfull < cand.size:
        left = spec.budget - (cum[nfull - 1] if nfull else 0.0)
        j = cand[nfull]
        y[j] = min(spec.cap, left / sizes[j])
    return y


# --------------------------------------------------------------------------
# joint polytope


@dataclass(frozen=True)
class JointPolytopeSpec:
    """The joint feasible set of ``net``; ``tol``/``max_sweeps`` tune Dykstra."""

    net: CacheNetwork
    tol: float = DYKSTRA_TOL
    max_sweeps: int = MAX_SWEEPS
    strict: bool = True
    method: str = "newton"
    _col_specs: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        net = self.net
        specs = tuple(CappedSimplexSpec(net.num_files, float(c), 1.0, net.sizes)
                      for c in net.capacity)
        object.__setattr__(self, "_col_specs", specs)
        if self.method not in ("newton", "dykstra"):
            raise InvalidInput(f"unknown projection method {self.method!r}")

    @property
    def dim(self) -> int:
        return self.net.dim

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.project_report(v)[0]

    def project_report(self, v: np.ndarray, warm=None):
        """Project and return ``(flat point, ProjectionReport)``."""
        x, report = project_joint(v, self, self.tol, warm=warm)
        if self.strict and not report.converged:
            raise ProjectionError(
                f"joint projection ({self.method}) missed tol={self.tol} after "
                f"{report.iterations} iterations (distance bound {report.distance:.3e})",
                report)
        return x.flat(), report

    def maximize(self, a: np.ndarray, fill_ties: bool = False) -> np.ndarray:
        return maximize_joint(a, self)


def _coupling(y, z, conn, jac: bool = False):
    """Project each (n, j) group ``{0 <= z[n,i,j] <= y[n,j] ell[i,j], y <= 1}``.

    The new ``y`` is the largest of the running means of ``y`` with the top
    ``k`` routing entries, clipped to ``[0, 1]``; each ``z`` is then clipped to
    ``[0, y]``.  With ``jac`` the masks describing the local affine piece are
    returned too: whether ``y`` is interior, and which ``z`` are pinned to
    ``y`` or passed through unchanged.
    """
    N, I, J = z.shape
    mask = np.broadcast_to(conn[None, :, :], z.shape)
    zm = np.where(mask, z, -np.inf)
    zs = -np.sort(-zm, axis=1)  # descending along locations
    finite = np.isfinite(zs)
    csum = np.cumsum(np.where(finite, zs, 0.0), axis=1)
    ks = np.arange(1, I + 1)[None, :, None]
    means = np.where(finite, (y[:, None, :] + csum) / (1.0 + ks), -np.inf)
    ybar = np.maximum(y, means.max(axis=1))
    ynew = np.clip(ybar, 0.0, 1.0)
    znew = np.where(mask, np.clip(z, 0.0, ynew[:, None, :]), 0.0)
    if not jac:
        return ynew, znew
    yfree = (ybar > 0.0) & (ybar < 1.0)
    pinned = mask & (z > ynew[:, None, :])
    passed = mask & (z >= 0.0) & ~pinned
    return ynew, znew, yfree, pinned, passed


def _capacity(y, col_specs):
    out = np.empty_like(y)
    for j, spec in enumerate(col_specs):
        out[:, j] = project_capped_simplex(y[:, j], spec)
    return out


def _repair(y, z, net, col_specs):
    """Map a near-feasible point to an exactly feasible one nearby."""
    y = _capacity(np.clip(y, 0.0, 1.0), col_specs)
    z = np.clip(z, 0.0, None)
    z = np.minimum(z, y[:, None, :] * net.connectivity[None, :, :])
    rows = z.sum(axis=2)
    over = rows > 1.0
    if np.any(over):
        z[over] /= rows[over][:, None]
    return y, z


class _RowDual:
    """Dual of the joint projection w.r.t. capacity and routing-row constraints.

    Only rows whose input has a positive routing entry can bind; the others
    stay at zero and are left out of the multiplier vector.
    """

    def __init__(self, net, vy, vz):
        self.net = net
        N, I, J = net.weights.shape
        self.vy, self.vz = vy, vz
        conn = net.connectivity
        self.rows = np.flatnonzero(np.any((vz > 0) & conn[None, :, :], axis=2).ravel())
        self.m = J + self.rows.size
        # constraint matrix restricted to the support, in flat (y, z) coordinates
        n_idx = np.arange(N)
        r_cap = np.repeat(np.arange(J), N)
        c_cap = (n_idx[None, :] * J + np.arange(J)[:, None]).ravel()
        v_cap = np.tile(net.sizes, J)
        rn, ri = np.divmod(self.rows, I)
        rr, jj = np.nonzero(np.broadcast_to(conn[ri, :], (self.rows.size, J)))
        r_row = J + rr
        c_row = N * J + (rn[rr] * I + ri[rr]) * J + jj
        self.A = sp.csr_matrix(
            (np.concatenate([v_cap, np.ones(rr.size)]),
             (np.concatenate([r_cap, r_row]), np.concatenate([c_cap, c_row]))),
            shape=(self.m, net.dim))
        self.b = np.concatenate([net.capacity, np.ones(self.rows.size)])

    def evaluate(self, lam):
        net = self.net
        N, I, J = net.weights.shape
        mu = lam[:J]
        nu = np.zeros(N * I)
        nu[self.rows] = lam[J:]
        ty = self.vy - net.sizes[:, None] * mu[None, :]
        tz = self.vz - nu.reshape(N, I)[:, :, None]
        out = _coupling(ty, tz, net.connectivity, jac=True)
        y, z = out[0], out[1]
        g = np.concatenate([net.sizes @ y - net.capacity,
                            z.reshape(N * I, J).sum(axis=1)[self.rows] - 1.0])
        val = 0.5 * (np.sum((y - self.vy) ** 2) + np.sum((z - self.vz) ** 2)) + lam @ g
        return val, g, ty, tz, out

    def hessian(self, out):
        """``A Jp A^T`` for the Jacobian ``Jp`` of the coupling projection."""
        net = self.net
        N, I, J = net.weights.shape
        _, _, yfree, pinned, passed = out
        # groups with interior y: averaging block over y and its pinned z
        gn, gj = np.nonzero(yfree)
        members = np.full((gn.size, I + 1), -1, dtype=np.int64)
        members[:, 0] = gn * J + gj
        pin = pinned[gn, :, gj]  # (G, I)
        zid = N * J + (gn[:, None] * I + np.arange(I)[None, :]) * J + gj[:, None]
        members[:, 1:] = np.where(pin, zid, -1)
        size = 1.0 + pin.sum(axis=1)
        a = np.broadcast_to(members[:, :, None], (gn.size, I + 1, I + 1))
        b = np.broadcast_to(members[:, None, :], (gn.size, I + 1, I + 1))
        wv = np.broadcast_to((1.0 / size)[:, None, None], a.shape)
        ok = (a >= 0) & (b >= 0)
        pz = np.flatnonzero(passed.ravel()) + N * J
        rows = np.concatenate([a[ok], pz])
        cols = np.concatenate([b[ok], pz])
        vals = np.concatenate([wv[ok], np.ones(pz.size)])
        Jp = sp.csr_matrix((vals, (rows, cols)), shape=(net.dim, net.dim))
        return (self.A @ Jp @ self.A.T).tocsc()

    def full_duals(self, lam):
        N, I, J = self.net.weights.shape
        out = np.zeros(J + N * I)
        out[:J] = lam[:J]
        out[J + self.rows] = lam[J:]
        return out

    def restrict(self, full):
        J = self.net.num_caches
        return np.concatenate([full[:J], full[J + self.rows]])


def _certificate(dual, lam, y, z, ty, tz, net, col_specs):
    """Repair ``x(lam)`` and bound its distance to the exact projection."""
    yh, zh = _repair(y, z, net, col_specs)
    N, I, J = net.weights.shape
    gh = np.concatenate([net.sizes @ yh - net.capacity,
                         zh.reshape(N * I, J).sum(axis=1)[dual.rows] - 1.0])
    gap = (0.5 * (np.sum((yh - y) ** 2) + np.sum((zh - z) ** 2))
           - lam @ gh
           + np.sum((ty - y) * (y - yh)) + np.sum((tz - z) * (z - zh)))
    return yh, zh, float(np.sqrt(2.0 * max(gap, 0.0)))


def _kkt(lam, g):
    """Largest violation of ``g <= 0``, ``lam >= 0``, ``lam * g = 0``."""
    return float(np.max(np.where(lam > 0.0, np.abs(g), np.maximum(g, 0.0)), initial=0.0))


def _newton_ascent(dual, lam, tol, max_iter):
    val, g, ty, tz, out = dual.evaluate(lam)
    it = 0
    for it in range(1, max_iter + 1):
        kkt = _kkt(lam, g)
        if kkt <= tol:
            break
        free = (lam > 0.0) | (g > 0.0)
        fid = np.flatnonzero(free)
        H = dual.hessian(out)[fid][:, fid]
        delta = NEWTON_REG * max(1.0, float(H.diagonal().max(initial=0.0)))
        d = np.zeros(dual.m)
        d[fid] = spla.spsolve((H + delta * sp.identity(fid.size, format="csc")).tocsc(), g[fid])
        lam_fixed = np.where(free, lam, 0.0)
        # below this the dual value cannot tell steps apart; judge by the residual
        noise = 1e-13 * max(1.0, abs(val))
        step = 1.0
        for _ in range(60):
            cand = np.maximum(0.0, lam_fixed + step * d)
            cval, cg, cty, ctz, cout = dual.evaluate(cand)
            gain = cval - val
            if gain > noise and gain >= 1e-4 * (g @ (cand - lam)):
                break
            if abs(gain) <= noise and _kkt(cand, cg) < kkt:
                break
            step *= 0.5
        else:
            break  # no ascent left at working precision
        lam, val, g, ty, tz, out = cand, cval, cg, cty, ctz, cout
    return lam, g, ty, tz, out, it


def _joint_newton(vy, vz, spec, tol, warm):
    net = spec.net
    dual = _RowDual(net, vy, vz)
    lam0 = np.zeros(dual.m) if warm is None else np.maximum(dual.restrict(warm), 0.0)
    lam, g, ty, tz, out, it = _newton_ascent(dual, lam0, tol, spec.max_sweeps)
    if warm is not None and _kkt(lam, g) > tol:
        # a stale warm start can strand the search on a flat stretch; retry cold
        lam, g, ty, tz, out, it2 = _newton_ascent(dual, np.zeros(dual.m), tol, spec.max_sweeps)
        it += it2
    kkt = _kkt(lam, g)
    yh, zh, dist = _certificate(dual, lam, out[0], out[1], ty, tz, net, spec._col_specs)
    return yh, zh, it, dist, dual.full_duals(lam), kkt


def _support_gap(net, col_specs, yh, zh, y, z, p_cap, p_row, p_cy, p_cz):
    """Gap of the Dykstra dual (increments) at the repaired point ``(yh, zh)``."""
    gap = 0.5 * (np.sum((yh - y) ** 2) + np.sum((zh - z) ** 2))
    for j, s in enumerate(col_specs):
        top = maximize_capped_simplex(p_cap[:, j], s)
        gap += p_cap[:, j] @ top - p_cap[:, j] @ yh[:, j]
    gap += np.maximum(p_row.max(axis=2), 0.0).sum() - np.sum(p_row * zh)
    conn = net.connectivity[None, :, :]
    gap += (np.maximum(p_cy + (np.maximum(p_cz, 0.0) * conn).sum(axis=1), 0.0).sum()
            - np.sum(p_cy * yh) - np.sum(p_cz * zh))
    return float(np.sqrt(2.0 * max(gap, 0.0)))


def _joint_dykstra(vy, vz, spec, tol, check_every=10):
    net = spec.net
    N, I, J = net.weights.shape
    conn = net.connectivity
    y, z = vy.copy(), vz.copy()
    p_cap = np.zeros_like(y)
    p_row = np.zeros_like(z)
    p_cy = np.zeros_like(y)
    p_cz = np.zeros_like(z)
    dist = np.inf
    it = 0
    for it in range(1, spec.max_sweeps + 1):
        t = y + p_cap
        y = _capacity(t, spec._col_specs)
        p_cap = t - y

        t = z + p_row
        z = _sub_simplex_rows(t.reshape(N * I, J)).reshape(N, I, J)
        p_row = t - z

        ty, tz = y + p_cy, z + p_cz
        y, z = _coupling(ty, tz, conn)
        p_cy, p_cz = ty - y, tz - z

        if it % check_every == 0 or it == spec.max_sweeps:
            yh, zh = _repair(y, z, net, spec._col_specs)
            dist = _support_gap(net, spec._col_specs, yh, zh, y, z, p_cap, p_row, p_cy, p_cz)
            if dist <= tol:
                break
    return yh, zh, it, dist, None, dist


def project_joint(v, spec: JointPolytopeSpec, tol: float | None = None, warm=None):
    """Euclidean projection onto the joint caching/routing set.

    Returns ``(DecisionVector, ProjectionReport)``.  The returned point is
    always feasible within ``FEAS_TOL``.  ``report.distance`` is a duality-gap
    bound on its Euclidean distance to the exact projection.  Convergence is
    judged on ``report.kkt``: the dual KKT residual for Newton, the distance
    bound for Dykstra.
    ``warm`` takes ``report.duals`` of a previous call (Newton method only).
    """
    tol = spec.tol if tol is None else tol
    if tol <= 0:
        raise InvalidInput("tol must be positive")
    net = spec.net
    x0 = v if isinstance(v, DecisionVector) else DecisionVector.from_flat(net, v)
    if not (np.all(np.isfinite(x0.y)) and np.all(np.isfinite(x0.z))):
        raise InvalidInput("point has non-finite entries")
    res0 = x0.residual(net)
    if res0 <= FEAS_TOL:
        return (DecisionVector(x0.y.copy(), x0.z.copy()),
                ProjectionReport(1, res0, True, 0.0, spec.method, warm))
    if not np.any((x0.z > 0) & net.connectivity[None, :, :]):
        # z = 0 is optimal whatever y is, so the caches decouple exactly
        y = _capacity(x0.y, spec._col_specs)
        out = DecisionVector(y, np.zeros_like(x0.z))
        return out, ProjectionReport(1, out.residual(net), True, 0.0, spec.method, warm)
    if spec.method == "dykstra":
        y, z, it, dist, duals, err = _joint_dykstra(x0.y, x0.z, spec, tol)
    else:
        y, z, it, dist, duals, err = _joint_newton(x0.y, x0.z, spec, tol, warm)
    out = DecisionVector(y, z)
    return out, ProjectionReport(it, out.residual(net), err <= tol, dist, spec.method, duals, err)


def maximize_joint(a, spec: JointPolytopeSpec, storage_rows=None) -> np.ndarray:
    """Maximize a linear function over the joint set (exact LP).

    ``storage_rows = (S, b)`` adds ``sum_j S[k, j] sum_n v_n y[n, j] <= b[k]``
    for every row ``k`` (per-slot budgets of elastic caching).  Single-cache
    networks reduce to a fractional knapsack over ``y``; the general case is
    solved with HiGHS and repaired to exact feasibility.
    """
    net = spec.net
    N, I, J = net.weights.shape
    a = np.asarray(a, dtype=float)
    if a.shape != (net.dim,):
        raise InvalidInput(f"coefficient shape {a.shape} does not match dim {net.dim}")
    ay = a[: N * J].reshape(N, J)
    az = a[N * J:].reshape(N, I, J) * net.connectivity[None, :, :]
    if J == 1:
        coef = ay[:, 0] + np.clip(az[:, :, 0], 0.0, None).sum(axis=1)
        col = spec._col_specs[0]
        if storage_rows is not None:
            col = CappedSimplexSpec(N, storage_budget(storage_rows, col.budget), 1.0, net.sizes)
        y = col.maximize(coef)[:, None]
        z = np.where((az > 0) & net.connectivity[None, :, :], y[:, None, :], 0.0)
        return DecisionVector(y, z).flat()

    zpos = np.argwhere(az > 0)  # (k, 3) entries of z worth sending
    yuse = np.zeros((N, J), dtype=bool)
    yuse[zpos[:, 0], zpos[:, 2]] = True
    yuse |= ay > 0
    ycols = np.argwhere(yuse)
    if zpos.shape[0] == 0 and ycols.shape[0] == 0:
        return np.zeros(net.dim)
    ny, nz = ycols.shape[0], zpos.shape[0]
    yid = -np.ones((N, J), dtype=np.int64)
    yid[ycols[:, 0], ycols[:, 1]] = np.arange(ny)
    c = -np.concatenate([ay[ycols[:, 0], ycols[:, 1]], az[zpos[:, 0], zpos[:, 1], zpos[:, 2]]])

    rows, cols, vals = [], [], []
    r = 0
    # coupling z - y <= 0
    k = np.arange(nz)
    rows += [r + k, r + k]
    cols += [ny + k, yid[zpos[:, 0], zpos[:, 2]]]
    vals += [np.ones(nz), -np.ones(nz)]
    r += nz
    # routing rows
    pair = zpos[:, 0] * I + zpos[:, 1]
    upair, inv = np.unique(pair, return_inverse=True)
    rows.append(r + inv)
    cols.append(ny + k)
    vals.append(np.ones(nz))
    r += upair.size
    # capacities
    rows.append(r + ycols[:, 1])
    cols.append(np.arange(ny))
    vals.append(net.sizes[ycols[:, 0]])
    b = [np.zeros(nz), np.ones(upair.size), net.capacity]
    r += J
    if storage_rows is not None:
        S, bs = _storage_arrays(storage_rows, J)
        # sum_j S[k, j] used_j with used_j = sum_n v_n y[n, j], written per y variable
        coef = S[:, ycols[:, 1]] * net.sizes[ycols[:, 0]][None, :]  # (K, ny)
        Ssp = sp.coo_matrix(coef)
        rows.append(r + Ssp.row)
        cols.append(Ssp.col)
        vals.append(Ssp.data)
        b.append(bs)
        r += S.shape[0]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(r, ny + nz))
    res = linprog(c, A_ub=A, b_ub=np.concatenate(b), bounds=(0.0, 1.0), method="highs")
    if res.status != 0:
        raise ProjectionError(f"LP over the joint set failed: {res.message}")
    y = np.zeros((N, J))
    z = np.zeros((N, I, J))
    y[ycols[:, 0], ycols[:, 1]] = res.x[:ny]
    z[zpos[:, 0], zpos[:, 1], zpos[:, 2]] = res.x[ny:]
    y, z = _repair(y, z, net, spec._col_specs)
    if storage_rows is not None:
        y, z = _repair_storage(y, z, net, storage_rows)
    return DecisionVector(y, z).flat()


def _storage_arrays(storage_rows, J):
    S, b = storage_rows
    S = np.asarray(S, dtype=float).reshape(-1, J)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != S.shape[0] or np.any(S < 0) or np.any(b < 0):
        raise InvalidInput("storage rows need nonnegative prices and budgets of matching length")
    return S, b


def storage_budget(storage_rows, capacity: float) -> float:
    """Largest single-cache occupancy allowed by ``S[k] used <= b[k]`` and ``capacity``."""
    S, b = _storage_arrays(storage_rows, 1)
    pos = S[:, 0] > 0
    if not np.any(pos):
        return float(capacity)
    return float(min(capacity, np.min(b[pos] / S[pos, 0])))


def _repair_storage(y, z, net, storage_rows):
    """Scale ``y`` (and ``z``) down uniformly so the storage rows hold exactly."""
    S, b = _storage_arrays(storage_rows, net.num_caches)
    used = net.sizes @ y
    load = S @ used
    over = load > b
    if np.any(over):
        f = float(np.min(np.where(over, b / load, 1.0)))
        y, z = y * f, z * f
    return y, z


def oftrl_argmin(sum_sigma: float, weighted_center, linear_term, spec, fill_ties: bool = False):
    """Minimize ``sum_t sigma_t/2 ||x - x_t||^2 - <linear_term, x>`` over the set.

    The quadratic part equals ``sum_sigma/2 ||x - xbar||^2 + const`` with
    ``xbar = (weighted_center + linear_term) / sum_sigma``, so the answer is
    the projection of ``xbar``.  With ``sum_sigma == 0`` the problem is the
    linear program ``max <linear_term, x>``.
    """
    linear_term = np.asarray(linear_term, dtype=float)
    if sum_sigma <= 0.0:
        return spec.maximize(linear_term, fill_ties=fill_ties)
    xbar = (np.asarray(weighted_center, dtype=float) + linear_term) / sum_sigma
    return spec.project(xbar)


@dataclass(frozen=True)
class SimplexSpec:
    """Probability simplex of dimension ``dim`` (expert weights)."""

    dim: int

    def project(self, v):
        return project_simplex(v)

    def maximize(self, a, fill_ties: bool = False):
        a = np.asarray(a, dtype=float)
        out = np.zeros(self.dim)
        out[int(np.argmax(a))] = 1.0
        return out
