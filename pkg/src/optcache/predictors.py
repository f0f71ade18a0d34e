"""Simulated recommenders and the request predictions they produce.

Each predictor commits to a predicted request before the user acts.  The
kinds are:

``oracle``        the prediction is the realized request;
``zero``          no prediction (``c~ = 0``);
``adversarial``   always a different file than the realized one;
``alternating``   right for ``period`` slots, then wrong for ``period`` slots;
``follow-prob``   a recommendation drawn from the popularity law, which the
                  user follows with probability ``rho``.

Only ``follow-prob`` predictors influence the realized requests.  With
several of them, the user follows at most one: predictor ``p`` with
probability ``rho_p`` (so the rhos must sum to at most one), the workload
otherwise, where the workload draw may agree with a recommendation by chance.
Predictions keep the location of the realized request: the recommender
knows where its user is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GradientVector, InvalidInput, Request
from .workloads import RequestStream, named_rng, sample_files

KINDS = ("oracle", "zero", "adversarial", "alternating", "follow-prob")


@dataclass(frozen=True)
class PredictorSpec:
    kind: str
    rho: float = 0.0
    period: int = 1
    seed: int | None = None  # overrides the run seed for this predictor
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown predictor kind {self.kind!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidInput(f"rho must lie in [0, 1], got {self.rho}")
        if self.period < 1:
            raise InvalidInput("alternating period must be at least 1")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "follow-prob":
            return f"follow-{self.rho:g}"
        if self.kind == "alternating":
            return f"alternating-{self.period}"
        return self.kind


@dataclass(frozen=True)
class PredictionSet:
    """Predicted requests aligned with a stream; ``files is None`` means zero."""

    spec: PredictorSpec
    files: np.ndarray | None
    locations: np.ndarray | None
    followed: np.ndarray | None = None  # whether the user took this recommendation

    @property
    def is_zero(self) -> bool:
        return self.files is None


@dataclass(frozen=True)
class SimulatedStream:
    stream: RequestStream
    predictions: tuple  # PredictionSet per predictor, in spec order

    def prediction(self, p: int, t: int, space) -> GradientVector:
        """``c~_t`` of predictor ``p`` in ``space`` (zero past the horizon)."""
        ps = self.predictions[p]
        if ps.is_zero or t > self.stream.num_slots:
            return GradientVector.zeros(space.dim)
        s = self.stream.slot(t)
        return space.gradient(ps.files[s], ps.locations[s])

    def gradient(self, t: int, space) -> GradientVector:
        s = self.stream.slot(t)
        return space.gradient(self.stream.files[s], self.stream.locations[s])


def _draw_other(p: np.ndarray, avoid: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draws from ``p`` conditioned on differing from ``avoid`` (elementwise)."""
    if np.count_nonzero(p) < 2:
        raise InvalidInput("a wrong prediction needs at least two files with positive popularity")
    out = sample_files(p, avoid.size, rng)
    bad = out == avoid
    while np.any(bad):
        out[bad] = sample_files(p, int(bad.sum()), rng)
        bad = out == avoid
    return out


def _slot_index(stream: RequestStream) -> np.ndarray:
    """1-based slot of every request."""
    return np.repeat(np.arange(1, stream.num_slots + 1), np.diff(stream.offsets))


def simulate(base: RequestStream, popularity, specs, seed: int = 0) -> SimulatedStream:
    """Realize requests and predictions from a workload stream.

    ``base`` supplies the workload draw of every request (and its location);
    ``popularity`` is the law recommendations are drawn from.
    """
    specs = tuple(specs)
    p = np.asarray(popularity, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
        raise InvalidInput("popularity must be a nonnegative, nonzero vector")
    p = p / p.sum()
    R = base.num_requests
    rhos = [s.rho for s in specs if s.kind == "follow-prob"]
    if sum(rhos) > 1.0 + 1e-12:
        raise InvalidInput(f"follow probabilities sum to {sum(rhos)} > 1")

    files = base.files.copy()
    locs = base.locations
    recs = {}
    followed = {}
    if rhos:
        u = named_rng(seed, "follow").random(R)
        lo = 0.0
        for k, s in enumerate(specs):
            if s.kind != "follow-prob":
                continue
            rng = named_rng(seed if s.seed is None else s.seed, f"predictor-{k}")
            rec = sample_files(p, R, rng)
            took = (u >= lo) & (u < lo + s.rho)
            lo += s.rho
            files[took] = rec[took]
            recs[k], followed[k] = rec, took

    slot = _slot_index(base)
    out = []
    for k, s in enumerate(specs):
        rng = named_rng(seed if s.seed is None else s.seed, f"predictor-{k}")
        if s.kind == "zero":
            out.append(PredictionSet(s, None, None))
        elif s.kind == "oracle":
            out.append(PredictionSet(s, files.copy(), locs.copy()))
        elif s.kind == "adversarial":
            out.append(PredictionSet(s, _draw_other(p, files, rng), locs.copy()))
        elif s.kind == "alternating":
            right = ((slot - 1) // s.period) % 2 == 0
            pred = files.copy()
            wrong = ~right
            pred[wrong] = _draw_other(p, files[wrong], rng)
            out.append(PredictionSet(s, pred, locs.copy(), right))
        else:
            out.append(PredictionSet(s, recs[k], locs.copy(), followed[k]))
    return SimulatedStream(RequestStream(files, locs.copy(), base.offsets.copy()), tuple(out))


def draw_request(spec: PredictorSpec, popularity, t: int, rng: np.random.Generator,
                 location: int = 0):
    """One slot: returns ``(realized Request, predicted Request or None)``.

    The workload draw comes from ``popularity``; a follow-prob predictor's
    recommendation is taken with probability ``rho``.
    """
    p = np.asarray(popularity, dtype=float)
    p = p / p.sum()
    realized = int(sample_files(p, 1, rng)[0])
    if spec.kind == "zero":
        return Request(realized, location, t), None
    if spec.kind == "oracle":
        return Request(realized, location, t), Request(realized, location, t)
    if spec.kind == "follow-prob":
        rec = int(sample_files(p, 1, rng)[0])
        if rng.random() < spec.rho:
            realized = rec
        return Request(realized, location, t), Request(rec, location, t)
    right = spec.kind == "alternating" and ((t - 1) // spec.period) % 2 == 0
    pred = realized if right else int(_draw_other(p, np.array([realized]), rng)[0])
    return Request(realized, location, t), Request(pred, location, t)


def to_gradient_prediction(space, files, locations) -> GradientVector:
    """``c~`` of predicted requests: the slot gradient they would induce."""
    return space.gradient(files, locations)
