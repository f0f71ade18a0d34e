"""Slot-by-slot simulation of one learner on a realized request stream.

:func:`run_policy` plays the online protocol (decide ``x_t``, observe the
request, update) and records per-slot quantities; :func:`evaluate` turns
them into checkpoint metrics with regret against the prefix best static
decision and the bound envelopes that apply to the learner.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import benchmark as bm
from .core import FEAS_TOL, InvalidInput
from .policies import (OgdState, obc_init, obc_step, oec_dual_step, oec_init, oec_primal_step,
                       ogd_default_step, ogd_step, optimistic_expert_step,
                       pessimistic_expert_step, storage_cost, xc_init, xc_step)
from .predictors import SimulatedStream

POLICIES = ("obc", "pessimist", "oec", "xc", "ogd", "optimist")


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    predictor: int = 0  # index of the predictor used by obc / oec / optimist
    experts: tuple | None = None  # predictor indices of xc's optimistic experts (default: all)
    sigma: float | None = None
    a: float = 1.0
    beta: float = 0.5
    eta: float | None = None
    fill_ties: bool = False  # optimists fill spare capacity with low-index files

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise InvalidInput(f"unknown policy {self.kind!r}")


@dataclass
class SlotTrace:
    """Per-slot record of one run (arrays indexed by ``t - 1``)."""

    policy: PolicySpec
    space: object
    utility: np.ndarray
    h: np.ndarray  # prediction error of the learner (meta-learner for xc)
    g: np.ndarray | None = None  # storage cost g_t(x_t)
    lam: np.ndarray | None = None
    F: np.ndarray | None = None  # (T, P+1) expert utilities
    u: np.ndarray | None = None  # (T, P+1) weights
    gradients: list = field(default_factory=list, repr=False)
    max_residual: float = 0.0
    digests: list | None = None
    projection_iterations: int = 0


def _digest(x: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(x).tobytes(), digest_size=16).hexdigest()


def run_policy(sim: SimulatedStream, policy: PolicySpec, space, prices=None, budgets=None,
               record_digests: bool = False, check_every: int = 1) -> SlotTrace:
    """Play ``policy`` on the stream.  ``prices``/``budgets`` are ``(T, J)``/``(T,)``."""
    T = sim.stream.num_slots
    kind = policy.kind
    npred = len(sim.predictions)
    if kind in ("obc", "oec", "optimist") and npred and not 0 <= policy.predictor < npred:
        raise InvalidInput(f"predictor index {policy.predictor} out of range")

    def pred(t):
        if kind == "pessimist" or npred == 0:
            return None
        return sim.prediction(policy.predictor, t, space)

    tr = SlotTrace(policy, space, np.zeros(T), np.zeros(T),
                   digests=[] if record_digests else None)
    if kind == "oec":
        if prices is None or budgets is None:
            raise InvalidInput("elastic caching needs prices and budgets")
        prices = np.asarray(prices, dtype=float)
        budgets = np.asarray(budgets, dtype=float)
        if prices.shape[0] < T or budgets.shape[0] < T:
            raise InvalidInput("price and budget streams are shorter than the horizon")
        tr.g = np.zeros(T)
        tr.lam = np.zeros(T)

    experts = ()
    if kind == "xc":
        experts = tuple(range(npred)) if policy.experts is None else tuple(policy.experts)
        for p in experts:
            if not 0 <= p < npred:
                raise InvalidInput(f"expert predictor index {p} out of range")
        tr.F = np.zeros((T, len(experts) + 1))
        tr.u = np.zeros((T, len(experts) + 1))

    # initial state
    if kind in ("obc", "pessimist"):
        st = obc_init(space, pred(1), policy.sigma)
    elif kind == "oec":
        st = oec_init(space, pred(1), policy.a, policy.beta, policy.sigma)
    elif kind == "ogd":
        st = OgdState(space, policy.eta if policy.eta is not None else ogd_default_step(space, T))
    elif kind == "optimist":
        st = None
        x_opt = optimistic_expert_step(space, pred(1), policy.fill_ties)
    else:
        pess = obc_init(space, None, policy.sigma)
        props = [pess.x] + [optimistic_expert_step(space, sim.prediction(p, 1, space), policy.fill_ties)
                            for p in experts]
        st = xc_init(space, props)

    for t in range(1, T + 1):
        c = sim.gradient(t, space)
        tr.gradients.append(c)
        x = x_opt if kind == "optimist" else st.x
        tr.utility[t - 1] = c.dot(x)
        if t % check_every == 0 or t == 1:
            tr.max_residual = max(tr.max_residual, space.residual(x))
        if record_digests:
            tr.digests.append(_digest(x))
        last = t == T
        if kind in ("obc", "pessimist"):
            tr.h[t - 1] = c.sq_dist(st.pred)
            if not last:
                obc_step(st, c, pred(t + 1))
        elif kind == "oec":
            tr.h[t - 1] = c.sq_dist(st.pred)
            tr.lam[t - 1] = st.lam
            tr.g[t - 1] = storage_cost(space, x, prices[t - 1], budgets[t - 1])
            oec_dual_step(st, tr.g[t - 1])
            if not last:
                oec_primal_step(st, c, pred(t + 1), prices[t])
        elif kind == "ogd":
            tr.h[t - 1] = c.norm_sq()
            if not last:
                ogd_step(st, c)
        elif kind == "optimist":
            p_t = pred(t)
            tr.h[t - 1] = c.sq_dist(p_t) if p_t is not None else c.norm_sq()
            if not last:
                x_opt = optimistic_expert_step(space, pred(t + 1), policy.fill_ties)
        else:
            tr.u[t - 1] = st.u
            F = np.array([c.dot(p) for p in st.proposals])
            tr.F[t - 1] = F
            tr.h[t - 1] = float(np.sum((F - st.F_pred) ** 2))
            if not last:
                nxt = [pessimistic_expert_step(pess, c)]
                nxt += [optimistic_expert_step(space, sim.prediction(p, t + 1, space), policy.fill_ties)
                        for p in experts]
                xc_step(st, c, nxt)
        rep = getattr(space, "last_report", None)
        if rep is not None:
            tr.projection_iterations = max(tr.projection_iterations, rep.iterations)
    if tr.max_residual > FEAS_TOL:
        raise InvalidInput(f"{kind} emitted an infeasible decision (residual {tr.max_residual:.3e})")
    return tr


# --------------------------------------------------------------------------
# metrics

COLUMNS = ("t", "utility", "avg_utility", "regret", "avg_regret", "violation", "lambda",
           "h_cum", "bound_thm1", "bound_thm2_R", "bound_thm2_V", "bound_thm3")


@dataclass
class Evaluation:
    columns: list
    rows: np.ndarray  # (K, len(columns)), NaN where inapplicable
    summary: dict

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


def evaluate(tr: SlotTrace, checkpoints=None, prices=None, budgets=None,
             s_max: float = 1.0, bhs_values=None) -> Evaluation:
    """Checkpoint metrics of a run.

    Regret is measured against the best static decision of each prefix, or,
    for elastic caching, against the horizon-wide static decision that meets
    every slot's budget.  ``bhs_values`` may pass precomputed references.
    """
    space = tr.space
    net = space.net
    T = tr.utility.size
    cps = bm.default_checkpoints(T) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    idx = cps - 1
    kind = tr.policy.kind
    cum = np.cumsum(tr.utility)
    h_cum = np.cumsum(tr.h)
    JC = net.num_caches * net.max_capacity
    B = space.batch
    nan = np.full(cps.size, np.nan)

    summary = {"policy": kind, "T": int(T)}
    if bhs_values is not None:
        ref = np.asarray(bhs_values, dtype=float)
    elif kind == "oec":
        total = np.zeros(space.dim)
        for g in tr.gradients:
            g.add_to(total)
        star = bm.elastic_bhs(space, total, np.asarray(prices)[:T], np.asarray(budgets)[:T])
        per_slot = np.array([g.dot(star.x) for g in tr.gradients])
        ref = np.cumsum(per_slot)[idx]
        summary["bhs_residual"] = star.residual
    else:
        ref = bm.bhs_series(space, tr.gradients, cps)
    R, avgR = bm.regret_series(cum[idx], ref, cps)

    viol = nan.copy()
    lam = nan.copy()
    thm1 = nan.copy()
    thm2R, thm2V = nan.copy(), nan.copy()
    thm3 = nan.copy()
    if kind == "oec":
        g_cum = np.cumsum(tr.g)
        viol = np.maximum(g_cum, 0.0)[idx]
        lam = tr.lam[idx]
        thm2R, thm2V = bm.bound_thm2(space.D, tr.policy.a, tr.policy.beta, s_max,
                                     net.num_caches, net.max_capacity, h_cum[idx], R, cps)
        summary["violation_slotwise"] = float(np.sum(np.maximum(tr.g, 0.0)))
        summary["g_cum"] = float(g_cum[-1])
    if kind in ("obc", "pessimist"):
        thm1 = bm.bound_thm1(JC, h_cum[idx], B)
    if kind == "xc":
        expert_cum = np.cumsum(tr.F, axis=0)[idx]
        expert_R = ref[:, None] - expert_cum
        thm3 = bm.bound_thm3_series(tr.F, expert_R, cps)
        summary["expert_regrets"] = [float(v) for v in expert_R[-1]]
        summary["weights"] = [float(v) for v in tr.u[-1]]

    rows = np.column_stack([cps.astype(float), tr.utility[idx], cum[idx] / cps, R, avgR, viol, lam,
                            h_cum[idx], thm1, thm2R, thm2V, thm3])
    columns = list(COLUMNS)
    if tr.u is not None:
        rows = np.column_stack([rows, tr.u[idx]])
        columns += [f"u_{p}" for p in range(tr.u.shape[1])]

    last = rows[-1]
    for name in ("avg_utility", "regret", "avg_regret", "violation", "h_cum",
                 "bound_thm1", "bound_thm2_R", "bound_thm2_V", "bound_thm3"):
        v = float(last[columns.index(name)])
        summary[name] = None if np.isnan(v) else v
    summary["cum_utility"] = float(cum[-1])
    summary["bhs"] = float(ref[-1])
    summary["max_residual"] = float(tr.max_residual)
    return Evaluation(columns, rows, summary)
