"""Experiment configuration files (YAML) and the name registries they use."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import funcspace as fs
from .core import DomainError
from .processes import (BrownianMotion, InitialLaw, JumpProcess, OuProcess,
                        ReflectedBrownianMotion, ScalarDiffusion)

EXPERIMENT_KINDS = ("ergodic", "nonstationary", "norms", "oracle", "psi-check", "rate")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""


@dataclass(frozen=True)
class Entry:
    build: object
    params: dict
    summary: str


def _coef_fn(spec, where):
    """Drift or volatility from a small parametric family."""
    if isinstance(spec, (int, float)):
        c = float(spec)
        return lambda x: np.full(np.shape(x), c)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{where}: expected a number or a block with 'kind'")
    kind = spec["kind"]
    if kind == "constant":
        c = float(spec.get("value", 0.0))
        return lambda x: np.full(np.shape(x), c)
    if kind == "linear":
        a, b = float(spec.get("a", -1.0)), float(spec.get("b", 0.0))
        return lambda x: a * np.asarray(x) + b
    if kind == "tanh":
        a, scale = float(spec.get("a", 1.0)), float(spec.get("scale", 1.0))
        return lambda x: -a * np.tanh(np.asarray(x) / scale)
    raise ConfigError(f"{where}.kind: unknown coefficient family {kind!r} "
                      "(constant, linear, tanh)")


def _bound(v):
    return math.inf if v is None else float(v)


def _euler(drift=None, vol=1.4142135623730951, lower=None, upper=None):
    lo = -math.inf if lower is None else float(lower)
    hi = math.inf if upper is None else float(upper)
    b = _coef_fn({"kind": "linear"} if drift is None else drift, "process.drift")
    s = _coef_fn(vol, "process.vol")
    return ScalarDiffusion(b, s, lo, hi)


def _jump(rate=1.0, P=None, mu=None):
    if P is None:
        raise ConfigError("process.P: transition matrix is required")
    return JumpProcess(float(rate), np.asarray(P, dtype=float),
                       None if mu is None else np.asarray(mu, dtype=float))


PROCESSES = {
    "bm": Entry(lambda: BrownianMotion(), {}, "Brownian motion, needs a point or density init"),
    "euler-diffusion": Entry(_euler, {"drift": "number or {kind: constant|linear|tanh, ...}",
                                      "vol": "number or coefficient block",
                                      "lower": "float or null", "upper": "float or null"},
                             "dX = b(X)dr + sigma(X)dW, Euler with reflection at finite bounds"),
    "jump": Entry(_jump, {"rate": "float", "P": "S x S row-stochastic matrix",
                          "mu": "optional stationary vector"},
                  "Markov jump process lambda (P - I)"),
    "ou": Entry(lambda: OuProcess(), {}, "dX = -X dr + sqrt(2) dW, exact recursion"),
    "reflected-bm": Entry(lambda M=1.0: ReflectedBrownianMotion(float(M)), {"M": "float > 0"},
                          "Brownian motion folded into [-M, M]"),
}

FUNCTIONS = {
    "constant": Entry(lambda c=1.0: fs.constant(float(c)), {"c": "float"}, "f(x) = c"),
    "hermite": Entry(lambda k=1: fs.hermite(int(k)), {"k": "int >= 0"},
                     "orthonormal Hermite polynomial h_k"),
    "holder_abs": Entry(lambda alpha=0.5, cap=None: fs.holder_abs(float(alpha),
                                                                  None if cap is None else float(cap)),
                        {"alpha": "float in (0, 1]", "cap": "float or null"},
                        "min(|x|, cap)^alpha"),
    "identity": Entry(fs.identity, {}, "f(x) = x"),
    "indicator": Entry(lambda K=0.0, L=None: fs.indicator(float(K), _bound(L)),
                       {"K": "float", "L": "float or null (infinity)"}, "1 on [K, L)"),
    "state": Entry(lambda values=None: fs.state_vector(values), {"values": "list of floats"},
                   "arbitrary function of a finite state"),
    "tabulated": Entry(lambda path=None: fs.tabulated_from_csv(path), {"path": "CSV of x,f(x)"},
                       "linear interpolation of a table"),
}

INITS = ("discrete", "gaussian", "point", "stationary", "uniform")


def _call(entry: Entry, block: dict, where: str):
    args = {k: v for k, v in block.items() if k not in ("kind", "scale")}
    unknown = sorted(set(args) - set(entry.params))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown parameter")
    try:
        return entry.build(**args)
    except ConfigError:
        raise
    except (DomainError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_process(block: dict):
    kind = block.get("kind")
    if kind not in PROCESSES:
        raise ConfigError(f"process.kind: unknown process {kind!r}")
    return _call(PROCESSES[kind], block, "process")


def build_function(block: dict) -> fs.FunctionSpec:
    kind = block.get("kind")
    if kind not in FUNCTIONS:
        raise ConfigError(f"function.kind: unknown function {kind!r}")
    f = _call(FUNCTIONS[kind], block, "function")
    if "scale" in block:
        f = f.scaled(float(block["scale"]))
    return f


def build_init(block: dict | None):
    if not block:
        return None
    kind = block.get("kind")
    try:
        if kind == "stationary":
            return InitialLaw.stationary()
        if kind == "point":
            return InitialLaw.at(block.get("x", 0.0))
        if kind == "uniform":
            return InitialLaw.uniform(block.get("lo", -1.0), block.get("hi", 1.0))
        if kind == "gaussian":
            return InitialLaw.gaussian(float(block.get("mean", 0.0)), float(block.get("sd", 1.0)))
        if kind == "discrete":
            return InitialLaw.discrete_law(block["probs"])
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"init: {exc}") from exc
    raise ConfigError(f"init.kind: unknown initial law {kind!r} ({', '.join(INITS)})")


def list_registry() -> str:
    lines = ["processes:"]
    for name in sorted(PROCESSES):
        e = PROCESSES[name]
        lines.append(f"  {name}: {e.summary}")
        lines += [f"    {k}: {v}" for k, v in sorted(e.params.items())]
    lines.append("functions:")
    for name in sorted(FUNCTIONS):
        e = FUNCTIONS[name]
        lines.append(f"  {name}: {e.summary}")
        lines += [f"    {k}: {v}" for k, v in sorted(e.params.items())]
    lines.append("experiments: " + ", ".join(EXPERIMENT_KINDS))
    return "\n".join(lines)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment file.

    ``grid`` holds ``T``, ``ns`` and ``refinement`` for sweeps, or ``Ts`` and
    ``delta`` for ergodic runs.  ``check`` configures bound checks and
    ``expect`` optional acceptance windows (``slope: [lo, hi]``).
    """

    kind: str
    process: dict = field(default_factory=lambda: {"kind": "ou"})
    function: dict = field(default_factory=lambda: {"kind": "identity"})
    grid: dict = field(default_factory=dict)
    reps: int = 1000
    master_seed: int = 0
    init: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: {"dir": "results", "stem": None})
    workers: int = 1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"kind: unknown experiment {self.kind!r} "
                              f"({', '.join(EXPERIMENT_KINDS)})")
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ConfigError("reps: must be a positive integer")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError("master_seed: must be a non-negative integer")
        for name in ("process", "function", "grid", "init", "check", "expect", "output"):
            if not isinstance(getattr(self, name), dict):
                raise ConfigError(f"{name}: must be a mapping")
        if self.kind != "psi-check":
            build_function(self.function)
            if self.kind != "norms":
                build_process(self.process)
        build_init(self.init)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a mapping")
        data = dict(data)
        if "kind" not in data:
            raise ConfigError("kind: missing experiment kind")
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown top-level field")
        return cls(**data)

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})

    @property
    def digest(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k not in ("output", "workers")}
        text = json.dumps(body, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def dumps(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not valid YAML ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc})") from exc
    return loads(text)
