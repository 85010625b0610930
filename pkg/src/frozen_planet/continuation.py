"""Parameter sweeps in the regularization radii and in the charge factor.

The first step of a sweep runs the minimax pipeline on a coarse grid and
lifts the result to the target grid by nested prolongation with a Newton
solve at each level.  Later steps warm-start Newton from the previous
solution; the pipeline is re-run only if that fails.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .action import ActionContext, action_value
from .errors import (ConfigError, FrozenPlanetError, NoConvergenceError,
                     UnsupportedOperationError)
from .kepler import brake_orbit
from .mountainpass import MinimaxConfig, refine_critical_point, solve
from .trajectory import Trajectory, refine, resample, window_slice
from .verify import DELTA_FRAC, OrbitSolution, c2_distance, populate

__all__ = ["Schedule", "SweepStep", "SweepRecord", "lift", "cold_solve", "sweep_eps", "sweep_mu",
           "brake_limit_candidate", "energy_rescale", "rescaled_context", "gap_slope"]


@dataclass(frozen=True)
class Schedule:
    """Decreasing positive parameter values.

    For ``kind == "eps"`` the second radius follows ``eps2 = link * eps1``.
    """

    kind: str
    values: tuple
    link: float = 1.0

    def __post_init__(self):
        if self.kind not in ("eps", "mu"):
            raise ConfigError(f"schedule kind must be 'eps' or 'mu', got {self.kind!r}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ConfigError("schedule needs at least one value")
        if not np.all(np.isfinite(v)) or v[-1] <= 0:
            raise ConfigError("schedule values must be finite and positive")
        if np.any(np.diff(v) >= 0):
            raise ConfigError("schedule values must be strictly decreasing")
        if self.kind == "mu" and v[0] > 1:
            raise ConfigError("mu values must lie in (0, 1]")
        if not self.link > 0:
            raise ConfigError("link must be positive")
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @classmethod
    def halvings(cls, start: float, count: int, kind: str = "eps", link: float = 1.0):
        return cls(kind, tuple(start * 0.5 ** k for k in range(int(count) + 1)), link)


@dataclass
class SweepStep:
    value: float
    solution: Optional[OrbitSolution]
    h: float
    gap_T: float
    q1_T: float
    c_est: float
    c_source: str
    newton_iters: int
    warm: bool
    dist_c0: float = float("nan")
    dist_c2: float = float("nan")
    dist_c0_inner: float = float("nan")
    dist_c2_inner: float = float("nan")
    dist_limit: float = float("nan")
    cold_iters: Optional[int] = None
    gate_passed: bool = False
    failed: Optional[str] = None

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "solution"}
        out["failed_checks"] = [] if self.solution is None or self.solution.checks is None \
            else self.solution.checks.failed()
        return out


@dataclass
class SweepRecord:
    kind: str
    steps: List[SweepStep] = field(default_factory=list)
    failed: Optional[str] = None
    notes: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.steps])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps], dtype=float)

    def write(self, directory: str, stem: str = "sweep") -> str:
        """Write ``<stem>.jsonl`` plus one trajectory CSV per step; returns the JSONL path."""
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, f"{stem}.jsonl")
        with open(path, "w") as fh:
            for k, s in enumerate(self.steps):
                row = {"kind": self.kind, "step": k, **s.to_dict()}
                if s.solution is not None:
                    name = f"{stem}_{k:03d}.csv"
                    s.solution.traj.to_csv(os.path.join(directory, name))
                    row["trajectory"] = name
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        return path

    def plot_rows(self) -> np.ndarray:
        """Columns: value, gap(T), h, c_est, q1(T), C0 and C2 Cauchy distances."""
        return np.column_stack([self.values, self.column("gap_T"), self.column("h"),
                                self.column("c_est"), self.column("q1_T"),
                                self.column("dist_c0"), self.column("dist_c2")])


def lift(sol: OrbitSolution, n: int, tol: float = 1e-10) -> OrbitSolution:
    """Carry a solution to ``n`` cells by nested refinement and Newton solves.

    Grids that are not a power-of-two multiple are reached by a final linear
    resampling.  ``info["iters_total"]`` counts Newton iterations over all
    levels, including those that produced ``sol``.
    """
    out = sol
    total = int(sol.info.get("iters_total", sol.info.get("iters", 0)))
    while out.traj.n != n:
        traj = refine(out.traj) if 2 * out.traj.n <= n else resample(out.traj, n)
        out = refine_critical_point(traj, out.ctx.with_grid(n=traj.n), tol=tol, c_est=sol.c_est)
        total += int(out.info["iters"])
    out.info["iters_total"] = total
    return out


def cold_solve(ctx: ActionContext, cfg: MinimaxConfig, coarse_n: int = 512,
               tol: float = 1e-10):
    """Minimax pipeline on ``min(coarse_n, n)`` cells, lifted to ``ctx.n``.

    Returns ``(solution, c_est, source)``.  The discrete level depends on
    the grid, so a lifted solution takes its own action as level
    (``source == "lifted"``); otherwise ``c_est`` is the path maximum.
    """
    c = ctx.with_grid(n=min(coarse_n, ctx.n))
    res = solve(c, cfg)
    if c.n == ctx.n:
        return res.solution, res.report.c_est, "deform"
    sol = lift(res.solution, ctx.n, tol)
    return sol, action_value(ctx, sol.traj), "lifted"


def newton_iters(sol: OrbitSolution) -> int:
    """Newton iterations spent on ``sol``, summed over lift levels."""
    return int(sol.info.get("iters_total", sol.info["iters"]))


def _distances(step: SweepStep, prev: Optional[OrbitSolution], sol: OrbitSolution, inner: bool):
    if prev is None:
        return
    T = sol.ctx.T
    step.dist_c0, step.dist_c2 = c2_distance(prev.traj, sol.traj, DELTA_FRAC * T)
    if inner:
        step.dist_c0_inner, step.dist_c2_inner = c2_distance(
            prev.traj, sol.traj, DELTA_FRAC * T, (1 - DELTA_FRAC) * T)


def _make_step(value, sol, c_est, c_source, iters, warm) -> SweepStep:
    sol = populate(OrbitSolution(sol.traj, sol.ctx, sol.h, c_est, None, sol.info))
    tr = sol.traj
    return SweepStep(value=float(value), solution=sol, h=sol.h, gap_T=float(tr.gap[-1]),
                     q1_T=float(tr.q1[-1]), c_est=float(c_est), c_source=c_source,
                     newton_iters=int(iters), warm=warm, gate_passed=sol.checks.passed)


def _sweep(kind: str, contexts: Sequence[ActionContext], values: Sequence[float],
           record_mask: Sequence[bool], cfg: MinimaxConfig, coarse_n: int, tol: float,
           compare_cold: bool, limit: Optional[Trajectory]) -> SweepRecord:
    rec = SweepRecord(kind)
    prev: Optional[OrbitSolution] = None
    last_recorded: Optional[OrbitSolution] = None
    for ctx, value, keep in zip(contexts, values, record_mask):
        warm = prev is not None
        try:
            if warm:
                try:
                    sol = refine_critical_point(prev.traj, ctx, tol=tol)
                    iters, c_est, src = sol.info["iters"], action_value(ctx, sol.traj), "action"
                except (NoConvergenceError, FrozenPlanetError, ValueError):
                    warm = False
                    sol, c_est, src = cold_solve(ctx, cfg, coarse_n, tol)
                    iters = newton_iters(sol)
            else:
                sol, c_est, src = cold_solve(ctx, cfg, coarse_n, tol)
                iters = newton_iters(sol)
        except (NoConvergenceError, FrozenPlanetError, ValueError) as exc:
            rec.failed = f"{kind}={value:g}: {type(exc).__name__}: {exc}"
            rec.steps.append(SweepStep(float(value), None, float("nan"), float("nan"),
                                       float("nan"), float("nan"), "", 0, warm,
                                       failed=rec.failed))
            return rec
        prev = sol
        if not keep:
            continue
        step = _make_step(value, sol, c_est, src, iters, warm)
        if compare_cold and warm:
            try:
                step.cold_iters = newton_iters(cold_solve(ctx, cfg, coarse_n, tol)[0])
            except (NoConvergenceError, FrozenPlanetError):
                step.cold_iters = None
        _distances(step, last_recorded, step.solution, inner=kind == "mu")
        if limit is not None:
            w = window_slice(limit.n, limit.T, DELTA_FRAC * limit.T, (1 - DELTA_FRAC) * limit.T)
            step.dist_limit = float(max(np.abs(sol.traj.q1 - limit.q1)[w].max(),
                                        np.abs(sol.traj.q2 - limit.q2)[w].max()))
        rec.steps.append(step)
        last_recorded = step.solution
    return rec


def sweep_eps(schedule: Schedule, ctx: ActionContext, cfg: MinimaxConfig = MinimaxConfig(),
              coarse_n: int = 512, tol: float = 1e-10, compare_cold: bool = False) -> SweepRecord:
    """Sweep ``eps1`` down the schedule (``eps2 = link * eps1``) at fixed ``mu``."""
    if schedule.kind != "eps":
        raise ConfigError("sweep_eps needs an 'eps' schedule")
    ctxs = [ctx.with_eps(e, schedule.link * e) for e in schedule.values]
    rec = _sweep("eps", ctxs, schedule.values, [True] * len(ctxs), cfg, coarse_n, tol,
                 compare_cold, None)
    rec.notes.update({"link": schedule.link, "mu": ctx.mu, "n": ctx.n, "T": ctx.T})
    return rec


def _substeps(values: Sequence[float], substeps: int):
    out, keep = [], []
    for k, v in enumerate(values):
        if k > 0 and substeps > 0:
            inner = np.geomspace(values[k - 1], v, substeps + 2)[1:-1]
            out.extend(inner)
            keep.extend([False] * inner.size)
        out.append(v)
        keep.append(True)
    return out, keep


def sweep_mu(schedule: Schedule, ctx: ActionContext, cfg: MinimaxConfig = MinimaxConfig(),
             coarse_n: int = 512, tol: float = 1e-10, substeps: int = 3,
             compare_cold: bool = False) -> SweepRecord:
    """Sweep ``mu`` down the schedule at the radii of ``ctx``.

    Between scheduled values ``substeps`` geometrically spaced intermediate
    charges are solved (not recorded) to keep warm starts close.  Each step
    also records the distance on ``[delta, T - delta]`` to the brake-limit
    candidate.
    """
    if schedule.kind != "mu":
        raise ConfigError("sweep_mu needs a 'mu' schedule")
    values, keep = _substeps(schedule.values, int(substeps))
    ctxs = [ctx.with_mu(m) for m in values]
    limit = brake_limit_candidate(ctx.sp, ctx.T, ctx.n)
    rec = _sweep("mu", ctxs, values, keep, cfg, coarse_n, tol, compare_cold, limit)
    rec.notes.update({"eps1": ctx.sp.eps1, "eps2": ctx.sp.eps2, "n": ctx.n, "T": ctx.T,
                      "substeps": int(substeps), "brake_time": "2T"})
    if len(rec.steps) >= 3 and rec.failed is None:
        rec.notes["gap_slope"] = gap_slope(rec)
        rec.notes["expected_slope"] = 1.0 / ctx.sp.alpha
    return rec


def gap_slope(rec: SweepRecord, count: int = 3) -> float:
    """Least-squares slope of ``log gap(T)`` against ``log mu`` over the smallest values."""
    mu = rec.values[-count:]
    gap = rec.column("gap_T")[-count:]
    return float(np.polyfit(np.log(mu), np.log(gap), 1)[0])


def brake_limit_candidate(sp, T: float, n: int) -> Trajectory:
    """``(q_hat(t), q_hat(2T - t))`` on the ``n``-cell grid of ``[0, T]``.

    ``q_hat`` starts at the collision and brakes at ``t = 2T``; it is
    sampled exactly on the grid by one brake orbit with half period ``2T``
    and ``2n`` cells.
    """
    b = brake_orbit(sp, 2.0 * T, 2 * int(n))
    q = b.q
    return Trajectory(T, q[: n + 1].copy(), q[::-1][: n + 1].copy())


def _check_homogeneous(sp) -> None:
    fam = sp.family
    p = fam.params
    if not (fam.is_power_law and p.get("alpha") == 1.0 and p.get("beta") == 1.0):
        raise UnsupportedOperationError(
            "energy rescaling needs the homogeneous family f = a/s, g = b/s")


def rescaled_context(ctx: ActionContext, lam: float) -> ActionContext:
    """Grid ``T lam^(-3/2)`` and radii ``eps / lam`` matching :func:`energy_rescale`."""
    _check_homogeneous(ctx.sp)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return ActionContext(ctx.sp.with_eps(ctx.sp.eps1 / lam, ctx.sp.eps2 / lam), ctx.mu,
                         ctx.T * lam ** -1.5, ctx.n)


def energy_rescale(sol: OrbitSolution, lam: float) -> Trajectory:
    """``t -> q(lam^(3/2) t) / lam`` on ``[0, lam^(-3/2) T]``.

    The rescaled curve solves the system with radii ``eps / lam`` (see
    :func:`rescaled_context`) and has energy ``lam h``.  Nodes map onto
    nodes, so no interpolation is involved.
    """
    _check_homogeneous(sol.ctx.sp)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    tr = sol.traj
    return Trajectory(tr.T * lam ** -1.5, tr.q1 / lam, tr.q2 / lam)
