"""YAML scenario files.

A scenario looks like::

    model:
      K: 2
      m: 1
      sigma2: 1.0            # scalar or list of K values
      correlation: {equicorrelated: 0.5}   # or {exponential: rho} / {vector: [...]}
    allocation:
      gamma_db: 20           # or gamma: 100 (linear)
      theta: equal           # or a list summing to one
    rate: 2
    truncation: {epsilon: 1.0e-8}          # or {N: 3}
    mc: {n: 1000000, seed: 1}
    contour: {nodes: 768, refinement: 1.0e-9}
    optimize: {constraint: 0.05, power_evaluator: asymptotic, rate_evaluator: truncated}

Every block is optional; missing values fall back to the defaults below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .channel import PowerAllocation, SystemModel
from .errors import DomainError
from .outage import DEFAULT_EPSILON
from .specialfun.contour import ContourSpec

CORRELATION_FORMS = ("vector", "equicorrelated", "exponential")
CONTOUR_KEYS = ("half_extent", "nodes", "refinement", "max_nodes")


class ConfigError(DomainError):
    pass


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def correlation_vector(form: str, value, K: int) -> tuple:
    """lambda for one of the three correlation forms."""
    if form == "vector":
        lam = tuple(float(v) for v in np.atleast_1d(value))
        if len(lam) != K:
            raise ConfigError(f"correlation vector has {len(lam)} entries, K={K}")
        return lam
    rho = float(value)
    if form == "equicorrelated":
        return (rho,) * K
    if form == "exponential":
        return tuple(rho ** (k + 1) for k in range(K))
    raise ConfigError(f"unknown correlation form {form!r}; choose from {CORRELATION_FORMS}")


@dataclass
class ScenarioConfig:
    K: int = 2
    m: int = 1
    sigma2: object = 1.0
    correlation: tuple = ("equicorrelated", 0.0)
    n0: float = 1.0
    gamma: float = 100.0
    theta: object = "equal"
    rate: float = 1.0
    N: int | None = None
    epsilon: float = DEFAULT_EPSILON
    mc_n: int = 1_000_000
    seed: int = 1
    contour: dict = field(default_factory=dict)
    quasi_static: bool = False
    constraint: float = 1.0
    power_evaluator: str = "asymptotic"
    rate_evaluator: str = "truncated"

    @property
    def lam(self) -> tuple:
        form, value = self.correlation
        return correlation_vector(form, value, self.K)

    def validate(self):
        lam = self.lam
        if self.quasi_static:
            return self
        if any(v >= 1.0 for v in lam):
            raise ConfigError(
                "correlation lambda_k >= 1 is the fully correlated channel; "
                "rerun with --quasi-static instead"
            )
        if any(v < 0.0 for v in lam):
            raise ConfigError("correlation coefficients must be non-negative")
        return self

    def model(self) -> SystemModel:
        self.validate()
        # the quasi-static path never uses lambda; keep the model constructible
        lam = tuple(0.0 for _ in range(self.K)) if self.quasi_static else self.lam
        return SystemModel(self.K, self.m, self.sigma2, lam, self.n0)

    def allocation(self) -> PowerAllocation:
        if isinstance(self.theta, str):
            if self.theta != "equal":
                raise ConfigError(f"theta must be 'equal' or a list, got {self.theta!r}")
            return PowerAllocation.equal(self.K, self.gamma)
        theta = tuple(float(t) for t in self.theta)
        if len(theta) != self.K:
            raise ConfigError(f"theta has {len(theta)} entries, K={self.K}")
        return PowerAllocation(self.gamma, theta)

    def contour_spec(self) -> ContourSpec | None:
        # the abscissa is always chosen per evaluation; only quadrature knobs are configurable
        if not self.contour:
            return None
        return ContourSpec(c=0.5, **self.contour)

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def _exactly_one(block: dict, keys, what: str):
    present = [k for k in keys if k in block]
    if len(present) != 1:
        raise ConfigError(f"{what} needs exactly one of {list(keys)}, got {present or 'none'}")
    return present[0]


def from_dict(data: dict | None) -> ScenarioConfig:
    data = dict(data or {})
    cfg = ScenarioConfig()
    model = data.pop("model", {}) or {}
    if "K" in model:
        cfg.K = int(model["K"])
    if "m" in model:
        cfg.m = int(model["m"])
    if "sigma2" in model:
        cfg.sigma2 = model["sigma2"]
    if "n0" in model:
        cfg.n0 = float(model["n0"])
    if "correlation" in model:
        corr = model["correlation"]
        if not isinstance(corr, dict):
            raise ConfigError("correlation must be a mapping such as {equicorrelated: 0.5}")
        form = _exactly_one(corr, CORRELATION_FORMS, "correlation")
        cfg.correlation = (form, corr[form])

    alloc = data.pop("allocation", {}) or {}
    if alloc:
        if "gamma" in alloc or "gamma_db" in alloc:
            key = _exactly_one(alloc, ("gamma", "gamma_db"), "allocation")
            cfg.gamma = float(alloc[key]) if key == "gamma" else db_to_linear(float(alloc[key]))
        if "theta" in alloc:
            cfg.theta = alloc["theta"]

    if "rate" in data:
        cfg.rate = float(data.pop("rate"))

    trunc = data.pop("truncation", None)
    if trunc:
        key = _exactly_one(trunc, ("N", "epsilon"), "truncation")
        if key == "N":
            cfg.N = int(trunc["N"])
        else:
            cfg.epsilon = float(trunc["epsilon"])

    mc = data.pop("mc", {}) or {}
    cfg.mc_n = int(mc.get("n", cfg.mc_n))
    cfg.seed = int(mc.get("seed", cfg.seed))

    contour = data.pop("contour", {}) or {}
    unknown = set(contour) - set(CONTOUR_KEYS)
    if unknown:
        raise ConfigError(f"unknown contour keys {sorted(unknown)}")
    cfg.contour = dict(contour)

    opt = data.pop("optimize", {}) or {}
    unknown = set(opt) - {"constraint", "power_evaluator", "rate_evaluator"}
    if unknown:
        raise ConfigError(f"unknown optimize keys {sorted(unknown)}")
    cfg.constraint = float(opt.get("constraint", cfg.constraint))
    cfg.power_evaluator = str(opt.get("power_evaluator", cfg.power_evaluator))
    cfg.rate_evaluator = str(opt.get("rate_evaluator", cfg.rate_evaluator))

    cfg.quasi_static = bool(data.pop("quasi_static", False))
    if data:
        raise ConfigError(f"unknown top-level keys {sorted(data)}")
    if not math.isfinite(cfg.gamma) or cfg.gamma <= 0:
        raise ConfigError("gamma must be positive")
    return cfg


def load(path) -> ScenarioConfig:
    with open(path) as fh:
        return from_dict(yaml.safe_load(fh))
