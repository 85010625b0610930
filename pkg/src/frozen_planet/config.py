"""Run configuration: YAML loading, dotted overrides and validation."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import yaml

from .action import ActionContext
from .continuation import Schedule
from .errors import ConfigError
from .mountainpass import MinimaxConfig
from .potentials import PotentialFamily, SmoothedPotentials, make_family

REQUIRED = ("family", "T", "n")


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-3`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*(?:\.[0-9_]*)?|\.[0-9_]+)(?:[eE][-+]?[0-9]+)?$
               |^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$""", re.X),
    list("-+0123456789."))


def _yaml(text):
    return yaml.load(text, Loader=_Loader)


@dataclass(frozen=True)
class FamilySpec:
    name: str = "helium"
    params: Dict[str, float] = field(default_factory=dict)
    alpha: Optional[float] = None
    s_bar: Optional[float] = None

    def build(self) -> PotentialFamily:
        try:
            return make_family(self.name, self.params, alpha=self.alpha, s_bar=self.s_bar)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"family: {exc}") from None


@dataclass(frozen=True)
class MinimaxSpec:
    c_lo: Optional[float] = None
    C_hi: Optional[float] = None
    step0: float = 0.05
    tol_grad: float = 1e-3
    max_iters: int = 2000
    reparam_every: int = 10
    refine_tol: float = 1e-10


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "eps"
    values: List[float] = field(default_factory=list)
    link: float = 1.0
    substeps: int = 3

    def build(self) -> Schedule:
        return Schedule(self.kind, tuple(self.values), self.link)


@dataclass(frozen=True)
class RunConfig:
    family: FamilySpec
    T: float
    n: int
    M: int = 64
    eps1: float = 1e-3
    eps2: Optional[float] = None
    mu: float = 1.0
    minimax: MinimaxSpec = field(default_factory=MinimaxSpec)
    coarse_n: int = 512
    schedule: Optional[ScheduleSpec] = None
    output: str = "runs/frozen_planet"
    seed: int = 0
    fd_trials: int = 10
    workers: int = 1

    def __post_init__(self):
        if not (isinstance(self.T, (int, float)) and self.T > 0):
            raise ConfigError(f"T must be a positive number, got {self.T!r}")
        n = self.n
        if not (isinstance(n, int) and n >= 16 and n & (n - 1) == 0):
            raise ConfigError(f"n must be a power of two >= 16, got {n!r}")
        c = self.coarse_n
        if not (isinstance(c, int) and c >= 16 and c & (c - 1) == 0):
            raise ConfigError(f"coarse_n must be a power of two >= 16, got {c!r}")
        for k in ("eps1",) + (("eps2",) if self.eps2 is not None else ()):
            v = getattr(self, k)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{k} must be positive, got {v!r}")
        if not (isinstance(self.mu, (int, float)) and 0 <= self.mu <= 1):
            raise ConfigError(f"mu must lie in [0, 1], got {self.mu!r}")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        if not (isinstance(self.fd_trials, int) and self.fd_trials >= 0):
            raise ConfigError("fd_trials must be a non-negative integer")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        self.family.build()
        self.minimax_config()
        if self.schedule is not None:
            self.schedule.build()

    @property
    def eps2_value(self) -> float:
        return float(self.eps1 if self.eps2 is None else self.eps2)

    def potentials(self) -> SmoothedPotentials:
        return SmoothedPotentials(self.family.build(), float(self.eps1), self.eps2_value)

    def context(self) -> ActionContext:
        return ActionContext(self.potentials(), float(self.mu), float(self.T), int(self.n))

    def minimax_config(self) -> MinimaxConfig:
        m = self.minimax
        try:
            return MinimaxConfig(M=self.M, c_lo=m.c_lo, C_hi=m.C_hi, step0=m.step0,
                                 tol_grad=m.tol_grad, max_iters=m.max_iters,
                                 reparam_every=m.reparam_every, refine_tol=m.refine_tol)
        except TypeError as exc:
            raise ConfigError(f"minimax: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


_SECTIONS = {"family": FamilySpec, "minimax": MinimaxSpec, "schedule": ScheduleSpec}


def _build(cls, raw: Any, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise ConfigError(f"unknown field(s) in {where or 'config'}: {', '.join(unknown)}")
    kw = {}
    for k, v in raw.items():
        sub = f"{where}.{k}" if where else k
        if cls is RunConfig and k in _SECTIONS and v is not None:
            v = _build(_SECTIONS[k], v, sub)
        kw[k] = v
    if cls is RunConfig:
        missing = [k for k in REQUIRED if k not in raw]
        if missing:
            raise ConfigError(f"missing required field(s): {', '.join(missing)}")
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def from_dict(raw: dict) -> RunConfig:
    return _build(RunConfig, raw, "")


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as YAML scalars or lists."""
    out = _yaml(yaml.safe_dump(raw)) if raw else {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"bad override key {key!r}")
        node = out
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r} descends into a scalar")
            node = nxt
        node[parts[-1]] = _yaml(text)
    return out


def load(path: Optional[str], overrides: Sequence[str] = ()) -> RunConfig:
    """Read a YAML file (or start empty when ``path`` is None) and apply overrides."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = _yaml(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path!r}: {exc}") from None
    return from_dict(apply_overrides(raw, overrides))


FIELD_DOCS = {
    "family.name": "potential family: helium | power_law | any registered name",
    "family.params": "family constants, e.g. {a: 2, alpha: 1, b: 1, beta: 1} for power_law",
    "family.alpha": "homogeneity exponent override (power_law only)",
    "family.s_bar": "witness point with 0 < g(s_bar) < f(s_bar); default chosen by the family",
    "T": "half period (required)",
    "n": "grid cells, power of two >= 16 (required)",
    "M": "path nodes minus one, >= 32",
    "eps1": "radius of the attraction regularization",
    "eps2": "radius of the repulsion cutoff; null means eps1",
    "mu": "charge factor in [0, 1]",
    "minimax.c_lo": "lower endpoint level of q2; null picks 1.5 w",
    "minimax.C_hi": "upper endpoint level of q2; null picks 8 c_lo",
    "minimax.step0": "initial (and largest) deformation step, H1 units",
    "minimax.tol_grad": "H1-dual gradient norm at the path maximum that ends deformation",
    "minimax.max_iters": "deformation iteration cap",
    "minimax.reparam_every": "iterations between path reparametrizations",
    "minimax.refine_tol": "Newton target for |grad A|_inf",
    "coarse_n": "grid of the minimax stage when n is larger; lifted by nested refinement",
    "schedule.kind": "eps | mu",
    "schedule.values": "strictly decreasing parameter values",
    "schedule.link": "eps2 = link * eps1 during eps sweeps",
    "schedule.substeps": "unrecorded geometric substeps between mu values",
    "output": "output directory (FROZEN_PLANET_OUT overrides it)",
    "seed": "seed of the randomized gradient check",
    "fd_trials": "number of random directions in the gradient check",
    "workers": "threads for batched node evaluations",
}


def reference() -> str:
    """Commented YAML listing every field with its default."""
    lines = ["# frozen-planet run configuration; required: family, T, n", ""]
    defaults = {
        "family": dataclasses.asdict(FamilySpec()), "T": 1.0, "n": 512,
        **{f.name: f.default for f in dataclasses.fields(RunConfig)
           if f.name not in REQUIRED and f.default is not dataclasses.MISSING},
        "minimax": dataclasses.asdict(MinimaxSpec()),
        "schedule": dataclasses.asdict(ScheduleSpec(values=[1e-2, 5e-3, 2.5e-3, 1.25e-3])),
    }
    order = [f.name for f in dataclasses.fields(RunConfig)]
    for key in order:
        val = defaults[key]
        if isinstance(val, dict):
            lines.append(f"{key}:")
            for k, v in val.items():
                doc = FIELD_DOCS.get(f"{key}.{k}", "")
                lines.append(f"  {k}: {_scalar(v)}  # {doc}" if doc else f"  {k}: {_scalar(v)}")
        else:
            lines.append(f"{key}: {_scalar(val)}  # {FIELD_DOCS.get(key, '')}")
    lines.append("")
    lines.append("# schedule is optional (null disables sweeps); the block above is an example")
    return "\n".join(lines) + "\n"


def _scalar(v) -> str:
    return yaml.safe_dump(v, default_flow_style=True).strip().removesuffix("...").strip()
