"""Online caching learners.

All learners maximize utility.  Their state is advanced one slot at a time:
after slot ``t`` the caller passes the realized gradient ``c_t`` (and, for the
optimistic ones, the prediction ``c~_{t+1}`` of the next slot) and receives
``x_{t+1}``.  Decisions are flat vectors of a space from :mod:`optcache.spaces`.

* optimistic bipartite caching: proximal OFTRL with the adaptive
  ``sigma_t = sigma (sqrt(h_{1:t}) - sqrt(h_{1:t-1}))`` schedule,
  ``h_t = ||c_t - c~_t||^2``;
* optimistic elastic caching: the same primal step with a shadow price
  ``lambda_t`` on leased storage and a closed-form dual step;
* experts caching: OFTRL over mixing weights of a pessimistic learner and
  certainty-equivalent optimistic experts;
* projected online gradient ascent as a baseline.

The first decision comes from the same OFTRL formula at ``t = 0``: with no
regularization yet it maximizes the first prediction, so learners start from
an empty cache when that prediction is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GradientVector, InvalidInput
from .projection import SimplexSpec, oftrl_argmin


def _zero(space) -> GradientVector:
    return GradientVector.zeros(space.dim)


def _check_dim(space, g: GradientVector, what: str) -> None:
    if g.dim != space.dim:
        raise InvalidInput(f"{what} has dim {g.dim}, the space has {space.dim}")


# --------------------------------------------------------------------------
# OFTRL with adaptive proximal regularizers


@dataclass
class ObcState:
    space: object
    sigma: float  # scale of the proximal schedule
    x: np.ndarray  # current decision x_t
    pred: GradientVector  # prediction used to choose x_t
    t: int = 1
    cum: np.ndarray = None  # c_{1:t-1}
    center: np.ndarray = None  # sum_tau sigma_tau x_tau
    sum_sigma: float = 0.0
    h_cum: float = 0.0
    last_h: float = 0.0

    def __post_init__(self):
        if self.cum is None:
            self.cum = np.zeros(self.space.dim)
        if self.center is None:
            self.center = np.zeros(self.space.dim)


def obc_init(space, first_prediction: GradientVector | None = None,
             sigma: float | None = None, linear_offset=None) -> ObcState:
    """State at ``t = 1`` with ``x_1 = argmax <c~_1 - offset, x>``."""
    pred = _zero(space) if first_prediction is None else first_prediction
    _check_dim(space, pred, "prediction")
    sigma = np.sqrt(2.0) / space.D if sigma is None else float(sigma)
    if sigma <= 0:
        raise InvalidInput("sigma must be positive")
    lin = pred.dense()
    if linear_offset is not None:
        lin = lin - linear_offset
    x1 = oftrl_argmin(0.0, None, lin, space)
    return ObcState(space=space, sigma=sigma, x=x1, pred=pred)


def _oftrl_update(state: ObcState, observed: GradientVector, predicted_next: GradientVector,
                  linear_offset=None, fill_ties: bool = False) -> np.ndarray:
    _check_dim(state.space, observed, "gradient")
    _check_dim(state.space, predicted_next, "prediction")
    h = observed.sq_dist(state.pred)
    state.last_h = h
    state.h_cum += h
    # sum_sigma is kept equal to sigma * sqrt(h_{1:t}); sigma_t is its increment
    new_sum = state.sigma * np.sqrt(state.h_cum)
    sigma_t = new_sum - state.sum_sigma
    state.sum_sigma = new_sum
    if sigma_t != 0.0:
        state.center += sigma_t * state.x
    observed.add_to(state.cum)
    lin = state.cum.copy()
    predicted_next.add_to(lin)
    if linear_offset is not None:
        lin -= linear_offset
    state.x = oftrl_argmin(state.sum_sigma, state.center, lin, state.space, fill_ties=fill_ties)
    state.pred = predicted_next
    state.t += 1
    return state.x


def obc_step(state: ObcState, observed: GradientVector,
             predicted_next: GradientVector | None = None) -> np.ndarray:
    """One optimistic FTRL step; returns ``x_{t+1}``."""
    pred = _zero(state.space) if predicted_next is None else predicted_next
    return _oftrl_update(state, observed, pred)


def pessimistic_expert_step(state: ObcState, observed: GradientVector) -> np.ndarray:
    """FTRL step with zero predictions (``h_t = ||c_t||^2``)."""
    return _oftrl_update(state, observed, _zero(state.space))


# --------------------------------------------------------------------------
# elastic caching with a budget on leased storage


@dataclass
class OecState(ObcState):
    a: float = 1.0
    beta: float = 0.5
    lam: float = 0.0  # lambda_t
    g_cum: float = 0.0
    price_acc: np.ndarray = None  # sum_{i <= t} lambda_i s_i in space coordinates

    def __post_init__(self):
        super().__post_init__()
        if self.price_acc is None:
            self.price_acc = np.zeros(self.space.dim)


def oec_init(space, first_prediction: GradientVector | None = None, a: float = 1.0,
             beta: float = 0.5, sigma: float | None = None) -> OecState:
    if a <= 0:
        raise InvalidInput("a must be positive")
    if not 0.0 <= beta < 1.0:
        raise InvalidInput("beta must lie in [0, 1)")
    # lambda_1 = 0, so the first decision ignores prices
    base = obc_init(space, first_prediction, sigma)
    return OecState(space=space, sigma=base.sigma, x=base.x, pred=base.pred, a=a, beta=beta)


def storage_cost(space, x, prices, budget: float) -> float:
    """``g_t(x) = sum_j s_j sum_n v_n y[n, j] - b_t``."""
    return float(np.asarray(prices, dtype=float).reshape(-1) @ space.storage(x) - budget)


def oec_dual_step(state: OecState, g_t_value: float) -> float:
    """``lambda_{t+1} = (a_{t+1} / 2) max(0, g_{1:t})`` with ``a_t = a t^-beta``."""
    state.g_cum += float(g_t_value)
    a_next = state.a * float(state.t + 1) ** (-state.beta)
    state.lam = 0.5 * a_next * max(0.0, state.g_cum)
    return state.lam


def oec_primal_step(state: OecState, observed: GradientVector,
                    predicted_next: GradientVector | None, next_prices) -> np.ndarray:
    """OFTRL step on ``c_{1:t} + c~_{t+1} - sum_{i <= t+1} lambda_i s_i``."""
    if next_prices is None:
        raise InvalidInput("the elastic step needs the next slot's prices")
    if state.lam != 0.0:
        state.price_acc += state.lam * state.space.price_vector(next_prices)
    pred = _zero(state.space) if predicted_next is None else predicted_next
    return _oftrl_update(state, observed, pred, linear_offset=state.price_acc)


# --------------------------------------------------------------------------
# experts


def optimistic_expert_step(space, predicted_next: GradientVector | None,
                           fill_ties: bool = False) -> np.ndarray:
    """Certainty-equivalent proposal ``argmax <c~, x>``.

    By default only the predicted files are cached: coordinates with a zero
    coefficient stay empty, so the proposal earns 1 or 0 on a hit-rate
    request.  ``fill_ties`` fills the spare capacity with the lowest-index
    files instead (single cache only; the joint LP has no fill order).
    """
    pred = _zero(space) if predicted_next is None else predicted_next
    _check_dim(space, pred, "prediction")
    return space.maximize(pred.dense(), fill_ties=fill_ties)


@dataclass
class XcState:
    space: object
    proposals: list  # current proposals x_t^(p), p = 0 is the pessimist
    u: np.ndarray  # weights u_t
    sigma: float = 1.0  # sqrt(2) / diameter of the simplex
    t: int = 1
    F_cum: np.ndarray = None
    F_pred: np.ndarray = None  # F~_t, the previous performance vector
    center: np.ndarray = None
    sum_sigma: float = 0.0
    h_cum: float = 0.0
    last_F: np.ndarray = None
    simplex: SimplexSpec = field(default=None, repr=False)

    def __post_init__(self):
        P1 = len(self.proposals)
        if P1 == 0:
            raise InvalidInput("experts caching needs at least one expert")
        self.simplex = SimplexSpec(P1)
        for name in ("F_cum", "F_pred", "center", "last_F"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(P1))

    @property
    def x(self) -> np.ndarray:
        return combine(self.proposals, self.u)


def combine(proposals, u) -> np.ndarray:
    """``sum_p u_p x^(p)``."""
    return np.tensordot(np.asarray(u, dtype=float), np.asarray(proposals, dtype=float), axes=1)


def xc_init(space, proposals) -> XcState:
    proposals = [np.asarray(p, dtype=float) for p in proposals]
    for p in proposals:
        if p.shape != (space.dim,):
            raise InvalidInput(f"proposal shape {p.shape} does not match dim {space.dim}")
    P1 = len(proposals)
    u = np.full(P1, 1.0 / P1) if P1 else np.zeros(0)
    return XcState(space=space, proposals=proposals, u=u)


def xc_step(state: XcState, observed: GradientVector, proposals_next) -> tuple:
    """Score the current proposals on ``c_t``, update weights, mix the next ones."""
    proposals_next = [np.asarray(p, dtype=float) for p in proposals_next]
    if len(proposals_next) != len(state.proposals):
        raise InvalidInput("number of proposals changed between slots")
    for p in proposals_next:
        if p.shape != (state.space.dim,):
            raise InvalidInput(f"proposal shape {p.shape} does not match dim {state.space.dim}")
    F = np.array([observed.dot(p) for p in state.proposals])
    state.last_F = F
    h = float(np.sum((F - state.F_pred) ** 2))
    state.h_cum += h
    new_sum = state.sigma * np.sqrt(state.h_cum)
    sigma_t = new_sum - state.sum_sigma
    state.sum_sigma = new_sum
    if sigma_t != 0.0:
        state.center += sigma_t * state.u
    state.F_cum += F
    state.F_pred = F
    state.u = oftrl_argmin(state.sum_sigma, state.center, state.F_cum + F, state.simplex)
    state.proposals = proposals_next
    state.t += 1
    return state.x, state.u


# --------------------------------------------------------------------------
# baseline


@dataclass
class OgdState:
    space: object
    eta: float
    x: np.ndarray = None
    t: int = 1

    def __post_init__(self):
        if self.eta <= 0:
            raise InvalidInput("step size must be positive")
        if self.x is None:
            self.x = self.space.empty()


def ogd_default_step(space, horizon: int) -> float:
    """``D / (w_max sqrt(T))``."""
    w = space.net.w_max or 1.0
    return space.D / (w * np.sqrt(max(horizon, 1)))


def ogd_step(state: OgdState, observed: GradientVector) -> np.ndarray:
    """Projected gradient ascent ``x_{t+1} = P(x_t + eta c_t)``."""
    _check_dim(state.space, observed, "gradient")
    if observed.idx.size:
        v = state.x.copy()
        observed.add_to(v, state.eta)
        state.x = state.space.project(v)
    state.t += 1
    return state.x
