"""Best-in-hindsight references, regret accounting and bound envelopes.

The slot utility is linear, so the best static decision for a prefix is the
maximizer of the cumulative gradient over the decision set: a fractional
knapsack for one cache, an exact LP for the joint set.  Prefix optima are
recomputed from scratch at every checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInput
from .projection import CappedSimplexSpec, maximize_joint, storage_budget
from .spaces import CacheSpace


@dataclass(frozen=True)
class BhsResult:
    x: np.ndarray  # flat decision in the space used
    value: float  # cumulative utility of x over the prefix
    residual: float  # feasibility residual of x


def default_checkpoints(T: int, stride: int | None = None) -> np.ndarray:
    """Slots ``stride, 2 stride, ..., T`` (``T`` always included)."""
    stride = max(1, T // 500) if stride is None else int(stride)
    if stride < 1:
        raise InvalidInput("checkpoint stride must be positive")
    cps = np.arange(stride, T + 1, stride)
    if cps.size == 0 or cps[-1] != T:
        cps = np.append(cps, T)
    return cps.astype(np.int64)


def bhs(space, cum_gradient) -> BhsResult:
    """Best static decision for a cumulative gradient."""
    a = np.asarray(cum_gradient, dtype=float)
    x = space.maximize(a)
    return BhsResult(x, float(a @ x), space.residual(x))


def bhs_prefix(space, gradients) -> BhsResult:
    """Best static decision for a list of slot gradients."""
    a = np.zeros(space.dim)
    for g in gradients:
        g.add_to(a)
    return bhs(space, a)


def bhs_series(space, gradients, checkpoints) -> np.ndarray:
    """``BHS_t`` at every checkpoint; ``gradients`` is the slot sequence ``c_1..c_T``."""
    a = np.zeros(space.dim)
    out = np.empty(len(checkpoints))
    k = 0
    for t, g in enumerate(gradients, start=1):
        g.add_to(a)
        while k < len(checkpoints) and checkpoints[k] == t:
            out[k] = bhs(space, a).value
            k += 1
    if k != len(checkpoints):
        raise InvalidInput("checkpoints beyond the end of the gradient stream")
    return out


def elastic_bhs(space, cum_gradient, prices, budgets) -> BhsResult:
    """Best static decision meeting the storage budget in every slot.

    ``prices`` is ``(T, J)`` and ``budgets`` ``(T,)``; the constraint of slot
    ``t`` is ``sum_j s_j^t sum_n v_n y[n, j] <= b_t``.
    """
    a = np.asarray(cum_gradient, dtype=float)
    rows = (np.asarray(prices, dtype=float), np.asarray(budgets, dtype=float))
    if isinstance(space, CacheSpace):
        cap = storage_budget(rows, space.spec.budget)
        x = CappedSimplexSpec(space.dim, cap, 1.0, space.net.sizes).maximize(a)
    else:
        x = maximize_joint(a, space.spec, storage_rows=rows)
    return BhsResult(x, float(a @ x), space.residual(x))


def regret_series(policy_cum_utility, bhs_values, t) -> tuple:
    """``(R_t, R_t / t)`` with ``R_t = BHS_t - sum_{tau <= t} f_tau(x_tau)``."""
    cum = np.asarray(policy_cum_utility, dtype=float)
    ref = np.asarray(bhs_values, dtype=float)
    t = np.asarray(t, dtype=float)
    if cum.shape != ref.shape or cum.shape != t.shape:
        raise InvalidInput("regret inputs must be aligned")
    R = ref - cum
    return R, R / t


# --------------------------------------------------------------------------
# envelopes


def bound_thm1(JC: float, h_cum, batch: int = 1) -> np.ndarray:
    """Data-dependent envelope ``2 sqrt(JC + B) sqrt(h_{1:t})``."""
    return 2.0 * np.sqrt(JC + batch) * np.sqrt(np.asarray(h_cum, dtype=float))


def bound_thm1_worst(JC: float, w: float, t, batch: int = 1) -> np.ndarray:
    """Worst-case envelope from ``||c - c~||^2 <= 2 B w^2``: ``2 sqrt(2B) w sqrt(JC + B) sqrt(t)``."""
    return 2.0 * np.sqrt(2.0 * batch) * w * np.sqrt(JC + batch) * np.sqrt(np.asarray(t, dtype=float))


def thm2_constant(s_max: float, J: int, C: float, beta: float) -> float:
    """``M = (s J C)^2 / (1 - beta)``."""
    return (s_max * J * C) ** 2 / (1.0 - beta)


def bound_thm2(D: float, a: float, beta: float, s_max: float, J: int, C: float,
               h_cum, regret, t) -> tuple:
    """Regret and violation envelopes of elastic caching at each ``t``.

    Returns ``(R_env, V_env)``; ``V_env`` is NaN where its radicand is
    negative (the bound is vacuous there).
    """
    M = thm2_constant(s_max, J, C, beta)
    h = np.asarray(h_cum, dtype=float)
    t = np.asarray(t, dtype=float)
    R = np.asarray(regret, dtype=float)
    r_env = np.sqrt(2.0) * D * np.sqrt(h) + 0.5 * a * M * t ** (1.0 - beta)
    radicand = (2.0 * np.sqrt(2.0) * D * t ** beta / a) * np.sqrt(h) + M * t - 2.0 * R * t ** beta / a
    with np.errstate(invalid="ignore"):
        v_env = np.where(radicand >= 0, np.sqrt(np.maximum(radicand, 0.0)), np.nan)
    return r_env, v_env


def bound_thm3(F, expert_regrets) -> float:
    """``2 sqrt(sum_t ||F_t - F_{t-1}||^2) + min_p R^(p)`` with ``F_0 = 0``.

    ``F`` is the ``(T, P+1)`` matrix of expert slot utilities.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[1] == 0:
        raise InvalidInput("F must be a (T, P+1) matrix")
    diffs = np.diff(np.vstack([np.zeros((1, F.shape[1])), F]), axis=0)
    return 2.0 * np.sqrt(np.sum(diffs ** 2)) + float(np.min(expert_regrets))


def bound_thm3_series(F, expert_regrets, t) -> np.ndarray:
    """:func:`bound_thm3` at checkpoints ``t`` (1-based); ``expert_regrets`` is ``(K, P+1)``."""
    F = np.asarray(F, dtype=float)
    diffs = np.diff(np.vstack([np.zeros((1, F.shape[1])), F]), axis=0)
    data = 2.0 * np.sqrt(np.cumsum(np.sum(diffs ** 2, axis=1)))
    return data[np.asarray(t) - 1] + np.min(expert_regrets, axis=1)


def bound_thm3_worst(P: int, w: float, T, min_expert_regret) -> np.ndarray:
    """``2 w sqrt((P + 1) T) + min_p R^(p)``."""
    return 2.0 * w * np.sqrt((P + 1) * np.asarray(T, dtype=float)) + min_expert_regret


def xc_single_cache_worst(P: int, C: float, w: float, T) -> np.ndarray:
    """Worst case with the pessimist's single-cache bound ``2 w sqrt(C T)`` as the min term."""
    T = np.asarray(T, dtype=float)
    return 2.0 * w * np.sqrt((P + 1) * T) + 2.0 * w * np.sqrt(C * T)
