"""Experiment configuration: schema, loading and wiring into simulation objects.

A config is a YAML (or JSON) document with the blocks ``network``,
``workload``, ``predictors``, ``policy``, ``budget`` (elastic caching only),
``output`` and a master ``seed``; ``sweep`` is read only by the sweep
command.  Unknown keys are rejected at every level.
"""

from __future__ import annotations

import copy
import hashlib
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import CacheNetwork, InvalidInput, bipartite, paper_bipartite, single_cache
from .predictors import PredictorSpec, SimulatedStream, simulate
from .sim import PolicySpec
from .spaces import make_space
from .workloads import (BudgetSpec, PriceSpec, TraceSpec, ZipfSpec, batch, budget_stream,
                        empirical_popularity, load_trace, named_rng, price_stream,
                        zipf_probabilities, zipf_stream)


class ConfigError(InvalidInput):
    """Config that fails schema validation or cannot be wired."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NetworkConfig(_Block):
    topology: Literal["single", "bipartite", "paper_bipartite"] = "single"
    N: int = Field(ge=1)
    I: int = Field(1, ge=1)
    J: int = Field(1, ge=1)
    C: float | list[float] = Field(...)
    connectivity: list[list[int]] | None = None  # (I, J) 0/1 matrix for "bipartite"
    w: float | list[float] = 1.0  # scalar, or per cache for "bipartite"
    sizes: list[float] | None = None

    @model_validator(mode="before")
    @classmethod
    def _fixed_shape(cls, data):
        # the fixed topology implies its own shape
        if isinstance(data, dict) and data.get("topology") == "paper_bipartite":
            data = {"I": 4, "J": 3, **data}
        return data

    @model_validator(mode="after")
    def _shapes(self):
        caps = self.C if isinstance(self.C, list) else [self.C]
        if any(c < 0 for c in caps):
            raise ValueError("capacities must be nonnegative")
        if self.topology == "single":
            if self.J != 1 or len(caps) != 1:
                raise ValueError("a single cache has J = 1 and one capacity")
            if isinstance(self.w, list) and len(self.w) != self.N:
                raise ValueError("per-file weights need N entries")
        elif self.topology == "bipartite":
            if self.connectivity is None:
                raise ValueError("bipartite topology needs a connectivity matrix")
            if len(self.connectivity) != self.I or any(len(r) != self.J for r in self.connectivity):
                raise ValueError(f"connectivity must be {self.I} x {self.J}")
            if isinstance(self.C, list) and len(self.C) != self.J:
                raise ValueError("per-cache capacities need J entries")
            if isinstance(self.w, list) and len(self.w) != self.J:
                raise ValueError("per-cache weights need J entries")
        else:
            if self.I != 4 or self.J != 3:
                raise ValueError("paper_bipartite has I = 4 and J = 3")
            if isinstance(self.C, list):
                raise ValueError("paper_bipartite takes one capacity for all caches")
        if self.sizes is not None and len(self.sizes) != self.N:
            raise ValueError("sizes need N entries")
        return self


class TraceConfig(_Block):
    path: str
    min_requests: int = Field(1, ge=1)
    location_rule: Literal["column", "uniform"] = "column"


class WorkloadConfig(_Block):
    kind: Literal["zipf", "trace"] = "zipf"
    T: int | None = Field(None, ge=1)  # slots; a trace is cut to T * B requests if given
    B: int = Field(1, ge=1)
    zipf_exponent: float = Field(1.1, ge=0)
    trace: TraceConfig | None = None

    @model_validator(mode="after")
    def _kind(self):
        if self.kind == "zipf" and self.T is None:
            raise ValueError("a Zipf workload needs T")
        if self.kind == "trace" and self.trace is None:
            raise ValueError("a trace workload needs a trace block")
        return self


class PredictorConfig(_Block):
    kind: Literal["oracle", "zero", "adversarial", "alternating", "follow-prob"]
    rho: float = Field(0.0, ge=0, le=1)
    period: int = Field(1, ge=1)
    seed: int | None = None
    name: str | None = None


class PolicyConfig(_Block):
    kind: Literal["obc", "pessimist", "oec", "xc", "ogd", "optimist"]
    predictor: int = Field(0, ge=0)
    experts: list[int] | None = None
    sigma: float | None = Field(None, gt=0)
    a: float = Field(1.0, gt=0)
    beta: float = Field(0.5, ge=0, lt=1)
    eta: float | None = Field(None, gt=0)
    fill_ties: bool = False
    projection: Literal["newton", "dykstra"] = "newton"
    projection_tol: float = Field(1e-8, gt=0)


class PriceConfig(_Block):
    kind: Literal["uniform", "constant", "csv"] = "uniform"
    value: float = Field(1.0, ge=0)
    s_max: float = Field(1.0, ge=0)
    path: str | None = None


class BudgetRuleConfig(_Block):
    kind: Literal["normal", "constant"] = "normal"
    mean: float = 0.5
    std: float = Field(0.05, ge=0)
    scale: float = Field(10.0, ge=0)
    value: float = 5.0


class BudgetConfig(_Block):
    prices: PriceConfig = PriceConfig()
    budgets: BudgetRuleConfig = BudgetRuleConfig()


class OutputConfig(_Block):
    checkpoint_stride: int | None = Field(None, ge=1)
    digests: bool = False  # write a per-slot decision digest file


class SweepConfig(_Block):
    grid: dict[str, list] = {}  # dotted key -> values, crossed
    cells: list[dict] | None = None  # explicit override sets (instead of a grid)
    workers: int | None = Field(None, ge=1)


class ExperimentConfig(_Block):
    seed: int = Field(0, ge=0, lt=2 ** 64)
    network: NetworkConfig
    workload: WorkloadConfig
    predictors: list[PredictorConfig] = []
    policy: PolicyConfig
    budget: BudgetConfig | None = None
    output: OutputConfig = OutputConfig()
    sweep: SweepConfig | None = None

    @model_validator(mode="after")
    def _cross(self):
        P = len(self.predictors)
        if self.policy.kind in ("obc", "oec", "optimist") and P and self.policy.predictor >= P:
            raise ValueError(f"policy.predictor {self.policy.predictor} but only {P} predictors")
        if self.policy.kind == "optimist" and P == 0:
            raise ValueError("the optimist policy needs a predictor")
        for p in self.policy.experts or ():
            if p >= P:
                raise ValueError(f"expert index {p} but only {P} predictors")
        if self.policy.kind == "oec" and self.budget is None:
            raise ValueError("policy oec needs a budget block")
        rhos = sum(p.rho for p in self.predictors if p.kind == "follow-prob")
        if rhos > 1 + 1e-12:
            raise ValueError(f"follow probabilities sum to {rhos} > 1")
        return self


# --------------------------------------------------------------------------
# loading


def _format_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data, base_dir: Path | str | None = None) -> ExperimentConfig:
    """Validate a config mapping; relative paths resolve against ``base_dir``."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = copy.deepcopy(data)
    data.pop("_resolved", None)  # provenance block written into run.lock
    if base_dir is not None:
        _resolve_paths(data, Path(base_dir))
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_error(e)) from None


def _resolve_paths(data: dict, base: Path) -> None:
    trace = (data.get("workload") or {}).get("trace")
    if isinstance(trace, dict) and isinstance(trace.get("path"), str):
        trace["path"] = str((base / trace["path"]).resolve())
    prices = (data.get("budget") or {}).get("prices")
    if isinstance(prices, dict) and isinstance(prices.get("path"), str):
        prices["path"] = str((base / prices["path"]).resolve())


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from None
    return parse_config(data, path.parent)


def with_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply dotted-key overrides (``"predictors.0.rho"``) and revalidate."""
    data = cfg.model_dump(mode="json")
    for key, value in overrides.items():
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node[int(p)] if isinstance(node, list) else node.setdefault(p, {})
            if node is None:
                raise ConfigError(f"override {key}: {p} is not set")
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return parse_config(data)


# --------------------------------------------------------------------------
# wiring


def build_network(cfg: NetworkConfig) -> CacheNetwork:
    if cfg.topology == "single":
        return single_cache(cfg.N, float(cfg.C), cfg.w, num_locations=cfg.I, sizes=cfg.sizes)
    if cfg.topology == "paper_bipartite":
        net = paper_bipartite(cfg.N, float(cfg.C))
    else:
        w = cfg.w if isinstance(cfg.w, list) else [cfg.w] * cfg.J
        net = bipartite(cfg.N, cfg.C, cfg.connectivity, w)
    if cfg.sizes is not None:
        net = CacheNetwork(net.capacity, net.connectivity, net.weights, cfg.sizes)
    return net


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Experiment:
    """Everything a run needs, built deterministically from a config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.net = build_network(cfg.network)
        wl = cfg.workload
        seed = cfg.seed
        if wl.kind == "zipf":
            if wl.T * wl.B < 1:
                raise ConfigError("workload is empty")
            base = zipf_stream(ZipfSpec(cfg.network.N, wl.zipf_exponent, seed), wl.T * wl.B,
                               num_locations=self.net.num_locations)
            popularity = zipf_probabilities(cfg.network.N, wl.zipf_exponent)
            self.trace_sha256 = None
        else:
            tc = wl.trace
            trace = load_trace(TraceSpec(tc.path, tc.min_requests, tc.location_rule,
                                         self.net.num_locations, seed))
            if trace.num_files > self.net.num_files:
                raise ConfigError(f"trace has {trace.num_files} files after filtering, "
                                  f"network.N is {self.net.num_files}")
            base = trace.stream
            if wl.T is not None:
                n = min(wl.T * wl.B, base.num_requests)
                base = type(base).unbatched(base.files[:n], base.locations[:n])
            popularity = np.zeros(self.net.num_files)
            popularity[: trace.num_files] = empirical_popularity(base, trace.num_files)
            self.trace_sha256 = file_digest(tc.path)
        specs = [PredictorSpec(p.kind, p.rho, p.period, p.seed, p.name) for p in cfg.predictors]
        sim = simulate(base, popularity, specs, seed=seed)
        if wl.B > 1:
            sim = SimulatedStream(batch(sim.stream, wl.B), sim.predictions)
        self.sim = sim
        self.horizon = sim.stream.num_slots
        pc = cfg.policy
        self.policy = PolicySpec(pc.kind, pc.predictor,
                                 None if pc.experts is None else tuple(pc.experts),
                                 pc.sigma, pc.a, pc.beta, pc.eta, pc.fill_ties)
        self.prices = self.budgets = None
        self.s_max = 1.0
        if cfg.budget is not None:
            p, b = cfg.budget.prices, cfg.budget.budgets
            pspec = PriceSpec(p.kind, p.value, p.s_max, p.path)
            self.prices = price_stream(pspec, self.horizon, self.net.num_caches,
                                       named_rng(seed, "prices"))
            self.budgets = budget_stream(BudgetSpec(b.kind, b.mean, b.std, b.scale, b.value),
                                         self.horizon, named_rng(seed, "budgets"))
            self.s_max = p.s_max if p.kind == "uniform" else float(self.prices.max(initial=0.0))

    def space(self):
        kw = {}
        if self.net.num_caches != 1:
            kw = dict(tol=self.cfg.policy.projection_tol, method=self.cfg.policy.projection)
        return make_space(self.net, batch=self.cfg.workload.B, **kw)
