"""Independent checks on computed orbits.

All checks read the nodal values only and never modify their input.  Two
residual stencils are used:

* the three-point second difference, which at a discrete critical point
  equals ``grad / dt`` and is therefore a certificate of criticality;
* the five-point fourth-order second difference, which measures the
  discretization error of the orbit itself (``O(dt^2)`` for the
  piecewise-linear/trapezoid scheme).

Energies use fourth-order centred velocities.  Windows of the form
``[delta, T]`` use ``delta = T / 20``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np

from .action import ActionContext, action_gradient
from .trajectory import Trajectory, min_gap, window_slice

DELTA_FRAC = 1.0 / 20.0
QUAL_TOL = 1e-10
ENERGY_SLACK = 1e-3
GRAD_GATE = 1e-8
# drift gate at n = 1024, scaled as n^-2 for other resolutions
DRIFT_GATE_1024 = 1e-4


@dataclass(frozen=True)
class Check:
    passed: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class PropertyReport:
    """Named pass/fail checks with worst-case margins (>= 0 means pass)."""

    checks: Dict[str, Check]
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for k, c in self.checks.items():
            if not np.isfinite(c.margin):
                raise ValueError(f"check {k!r} has a non-finite margin")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self):
        return [k for k, c in self.checks.items() if not c.passed]

    def merged(self, other: "PropertyReport") -> "PropertyReport":
        return PropertyReport({**self.checks, **other.checks},
                              {**self.diagnostics, **other.diagnostics})

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": {k: {"passed": c.passed, "margin": c.margin, "detail": c.detail}
                           for k, c in self.checks.items()},
                "diagnostics": dict(self.diagnostics)}


@dataclass(frozen=True, eq=False)
class OrbitSolution:
    """A (near-)critical trajectory with its context and derived data."""

    traj: Trajectory
    ctx: ActionContext
    h: float
    c_est: Optional[float] = None
    checks: Optional[PropertyReport] = None
    info: Dict[str, float] = field(default_factory=dict)

    def with_checks(self, checks: PropertyReport) -> "OrbitSolution":
        return replace(self, checks=checks)

    def to_dict(self) -> dict:
        if self.checks is None:
            raise ValueError("checks must be populated before serialization")
        return {"context": self.ctx.describe(), "h": self.h, "c_est": self.c_est,
                "checks": self.checks.to_dict(), "info": dict(self.info)}


def make_solution(traj: Trajectory, ctx: ActionContext, c_est: Optional[float] = None,
                  info: Optional[dict] = None) -> OrbitSolution:
    """Wrap a trajectory, computing its mean energy on ``[delta, T]``."""
    return OrbitSolution(traj, ctx, energy_profile(traj, ctx).h_mean, c_est, None,
                         dict(info or {}))


def _unpack(sol_or_traj, ctx=None):
    if isinstance(sol_or_traj, OrbitSolution):
        return sol_or_traj.traj, sol_or_traj.ctx
    if ctx is None:
        raise ValueError("a context is required when passing a bare trajectory")
    return sol_or_traj, ctx


def accelerations(ctx: ActionContext, q1: np.ndarray, q2: np.ndarray):
    """Right-hand side ``grad U``: ``(f'(q1) + mu g'(gap), f'(q2) - mu g'(gap))``."""
    sp = ctx.sp
    dg = ctx.mu * sp.dg_eps(q2 - q1)
    return sp.df_eps(q1) + dg, sp.df_eps(q2) - dg


def _d2_5(q: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order second difference at nodes 2 .. n-2."""
    return (-q[4:] + 16 * q[3:-1] - 30 * q[2:-2] + 16 * q[1:-3] - q[:-4]) / (12 * dt * dt)


def _d1_5(q: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order centred first difference at nodes 2 .. n-2."""
    return (-q[4:] + 8 * q[3:-1] - 8 * q[1:-3] + q[:-4]) / (12 * dt)


@dataclass(frozen=True)
class ResidualStats:
    """ODE residuals; ``*_window`` on ``[delta, T]``, ``*_full`` on all interior nodes.

    ``max_window``/``l2_window``/``max_full``/``l2_full`` use the five-point
    stencil; ``max_3pt`` is the three-point residual (gradient certificate);
    ``rel_window`` is ``max_window`` over the largest acceleration there.
    """

    max_window: float
    l2_window: float
    max_full: float
    l2_full: float
    max_3pt: float
    rel_window: float
    q1_max: float
    q2_max: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ode_residual(sol, ctx: Optional[ActionContext] = None) -> ResidualStats:
    """Residual of ``q'' = grad U(q)`` on the nodes of a trajectory in the admissible set."""
    traj, ctx = _unpack(sol, ctx)
    traj.require_gap()
    n, dt = traj.n, traj.dt
    if n < 8:
        raise ValueError("residuals require n >= 8")
    a1, a2 = accelerations(ctx, traj.q1, traj.q2)
    r1 = _d2_5(traj.q1, dt) - a1[2:-2]
    r2 = _d2_5(traj.q2, dt) - a2[2:-2]
    r = np.maximum(np.abs(r1), np.abs(r2))
    idx = np.arange(2, n - 1)
    w = window_slice(n, traj.T, DELTA_FRAC * traj.T)
    inwin = idx >= w.start
    scale = max(float(np.max(np.abs(a1[2:-2][inwin]))), float(np.max(np.abs(a2[2:-2][inwin]))))
    c1 = np.diff(traj.q1, 2) / dt ** 2 - a1[1:-1]
    c2 = np.diff(traj.q2, 2) / dt ** 2 - a2[1:-1]

    def l2(x):
        return float(np.sqrt(np.sum(x * x) * dt))

    return ResidualStats(
        max_window=float(r[inwin].max()),
        l2_window=l2(np.hypot(r1[inwin], r2[inwin])),
        max_full=float(r.max()),
        l2_full=l2(np.hypot(r1, r2)),
        max_3pt=float(max(np.abs(c1).max(), np.abs(c2).max())),
        rel_window=float(r[inwin].max() / scale) if scale > 0 else float(r[inwin].max()),
        q1_max=float(np.abs(r1[inwin]).max()),
        q2_max=float(np.abs(r2[inwin]).max()),
    )


def one_sided_derivatives(traj: Trajectory) -> Dict[str, float]:
    """Second-order one-sided derivatives of q1, q2 at both ends."""
    dt = traj.dt

    def left(q):
        return float((-3 * q[0] + 4 * q[1] - q[2]) / (2 * dt))

    def right(q):
        return float((3 * q[-1] - 4 * q[-2] + q[-3]) / (2 * dt))

    return {"q1_dot_0": left(traj.q1), "q1_dot_T": right(traj.q1),
            "q2_dot_0": left(traj.q2), "q2_dot_T": right(traj.q2)}


def boundary_check(sol, ctx: Optional[ActionContext] = None) -> PropertyReport:
    """``q1(0) = 0``, ``q1'(T) = q2'(0) = q2'(T) = 0`` and ``q1'(0) > 0``.

    Derivative conditions pass when below ``10 / n * scale`` with ``scale``
    the largest coordinate divided by ``T``.
    """
    traj, _ = _unpack(sol, ctx)
    d = one_sided_derivatives(traj)
    scale = max(np.abs(traj.q1).max(), np.abs(traj.q2).max()) / traj.T
    tol = 10.0 / traj.n * scale
    checks = {"q1_0": Check(traj.q1[0] == 0.0, -abs(float(traj.q1[0])))}
    for key in ("q1_dot_T", "q2_dot_0", "q2_dot_T"):
        checks[key] = Check(abs(d[key]) < tol, tol - abs(d[key]))
    checks["q1_dot_0_positive"] = Check(d["q1_dot_0"] > 0, d["q1_dot_0"])
    return PropertyReport(checks, {k: v for k, v in d.items()})


@dataclass(frozen=True)
class EnergyProfile:
    t: np.ndarray
    h: np.ndarray
    h_mean: float
    drift: float


def energy_profile(sol, ctx: Optional[ActionContext] = None) -> EnergyProfile:
    """Energy ``1/2 |q'|^2 - U(q)`` at nodes of ``[delta, T]`` (centred velocities)."""
    traj, ctx = _unpack(sol, ctx)
    n, dt = traj.n, traj.dt
    v1 = _d1_5(traj.q1, dt)
    v2 = _d1_5(traj.q2, dt)
    q1, q2 = traj.q1[2:-2], traj.q2[2:-2]
    sp = ctx.sp
    U = sp.f_eps(q1) + sp.f_eps(q2) - ctx.mu * sp.g_eps(q2 - q1)
    h = 0.5 * (v1 * v1 + v2 * v2) - U
    idx = np.arange(2, n - 1)
    w = window_slice(n, traj.T, DELTA_FRAC * traj.T)
    m = idx >= w.start
    h = h[m]
    h_mean = float(np.mean(h))
    return EnergyProfile(idx[m] * dt, h, h_mean, float(np.max(np.abs(h - h_mean))))


def terminal_energy(sol, ctx: Optional[ActionContext] = None) -> float:
    """Energy at ``t = T`` assuming ``q'(T) = 0``."""
    traj, ctx = _unpack(sol, ctx)
    sp = ctx.sp
    q1, q2 = traj.q1[-1], traj.q2[-1]
    return float(-sp.f_eps(q1) - sp.f_eps(q2) + ctx.mu * sp.g_eps(q2 - q1))


def drift_gate(n: int) -> float:
    return DRIFT_GATE_1024 * (1024.0 / n) ** 2


def qualitative_checks(sol, ctx: Optional[ActionContext] = None,
                       tol: float = QUAL_TOL) -> PropertyReport:
    """Shape properties of solutions, with discrete differences.

    (i) q1 and q1 + q2 concave; (ii) q2 - q1 convex with its minimum at the
    last node; (iii) ``|dq2| <= |dq1|`` cellwise; (iv) q1 non-decreasing and
    q2 non-increasing; (v) q1 and q1 + q2 maximal at ``t = T``.  The tolerance
    is ``tol`` times the largest coordinate.
    """
    traj, ctx = _unpack(sol, ctx)
    q1, q2 = traj.q1, traj.q2
    s = q1 + q2
    gap = q2 - q1
    t = tol * max(np.abs(q1).max(), np.abs(q2).max())

    def chk(margin, detail=""):
        m = float(margin)
        return Check(m >= -t, m, detail)

    d1, d2 = np.diff(q1), np.diff(q2)
    checks = {
        "q1_concave": chk(np.min(-np.diff(q1, 2))),
        "sum_concave": chk(np.min(-np.diff(s, 2))),
        "gap_convex": chk(np.min(np.diff(gap, 2))),
        "gap_min_at_T": chk(np.min(gap[:-1]) - gap[-1]),
        "speed_order": chk(np.min(np.abs(d1) - np.abs(d2))),
        "q1_nondecreasing": chk(np.min(d1)),
        "q2_nonincreasing": chk(np.min(-d2)),
        "q1_max_at_T": chk(q1[-1] - np.max(q1[:-1])),
        "sum_max_at_T": chk(s[-1] - np.max(s[:-1])),
    }
    return PropertyReport(checks, crossing_diagnostic(traj, ctx))


def crossing_diagnostic(traj: Trajectory, ctx: ActionContext) -> Dict[str, float]:
    """Diagnostic ``q1 >= (nu - 1)/nu q2`` where ``f(q2) <= g(gap)``.

    ``nu = (f(s_bar)/g(s_bar))**(1/alpha)``; reported, never gating.
    """
    fam = ctx.sp.family
    sb = np.float64(fam.s_bar)
    fb, gb = float(fam.f(sb)), float(fam.g(sb))
    out = {"nu_alpha": float("nan"), "crossing_nodes": 0.0, "crossing_margin": 0.0}
    if not (gb > 0 and fb > gb):
        return out
    nu = (fb / gb) ** (1.0 / fam.alpha)
    gap = traj.q2 - traj.q1
    with np.errstate(all="ignore"):
        sel = (fam.f(traj.q2) - fam.g(gap) <= 0) & (gap > 0)
    out["nu_alpha"] = float(nu)
    out["crossing_nodes"] = float(np.count_nonzero(sel))
    if sel.any():
        out["crossing_margin"] = float(np.min(traj.q1[sel] - (nu - 1) / nu * traj.q2[sel]))
    return out


@dataclass(frozen=True)
class EnergyBounds:
    lower: float
    upper: float
    lower_margin: float
    upper_margin: float
    passed: bool


def energy_bounds_check(sol: OrbitSolution, slack: float = ENERGY_SLACK) -> EnergyBounds:
    """``-c/T <= h <= (alpha - 2) c / ((2 + alpha) T)`` with slack ``slack |h|``."""
    if sol.c_est is None:
        raise ValueError("energy bounds need the minimax level c_est")
    a, T, c, h = sol.ctx.sp.alpha, sol.ctx.T, sol.c_est, sol.h
    lo = -c / T
    hi = (a - 2.0) * c / ((2.0 + a) * T)
    s = slack * abs(h)
    lm = h - (lo - s)
    um = (hi + s) - h
    return EnergyBounds(lo, hi, float(lm), float(um), bool(lm >= 0 and um >= 0))


def conformance(sol: OrbitSolution, grad_tol: float = GRAD_GATE) -> PropertyReport:
    """The composite gate: criticality, residual, boundary, energy and shape checks."""
    traj, ctx = sol.traj, sol.ctx
    traj.require_domain()
    g = action_gradient(ctx, traj).max_abs()
    res = ode_residual(sol)
    prof = energy_profile(sol)
    checks = {
        "gradient": Check(g < grad_tol, grad_tol - g),
        "residual": Check(res.max_3pt < 10 * grad_tol * traj.n ** 2,
                          10 * grad_tol * traj.n ** 2 - res.max_3pt),
        "energy_negative": Check(prof.h_mean < 0, -prof.h_mean),
        "energy_drift": Check(prof.drift < drift_gate(traj.n) * abs(prof.h_mean),
                              drift_gate(traj.n) * abs(prof.h_mean) - prof.drift),
    }
    diag = {"grad_inf": g, "h_mean": prof.h_mean, "drift": prof.drift,
            "drift_rel": prof.drift / abs(prof.h_mean),
            "terminal_energy": terminal_energy(sol),
            "min_gap": min_gap(traj)[0], "gap_T": float(traj.gap[-1]),
            "q1_T": float(traj.q1[-1])}
    diag.update({f"residual_{k}": v for k, v in res.to_dict().items()})
    if sol.c_est is not None:
        eb = energy_bounds_check(sol)
        checks["energy_lower_bound"] = Check(eb.lower_margin >= 0, eb.lower_margin)
        checks["energy_upper_bound"] = Check(eb.upper_margin >= 0, eb.upper_margin)
        diag.update({"energy_lower": eb.lower, "energy_upper": eb.upper})
    report = PropertyReport(checks, diag)
    return report.merged(boundary_check(sol)).merged(qualitative_checks(sol))


def populate(sol: OrbitSolution) -> OrbitSolution:
    """Return a copy of ``sol`` carrying its conformance report."""
    return sol.with_checks(conformance(sol))


def c2_distance(a: Trajectory, b: Trajectory, lo: float, hi: Optional[float] = None):
    """C0 and discrete C2 distances on ``[lo, hi]`` between same-grid trajectories.

    The C2 proxy is the max over the window of the nodal differences and
    of their first and second divided differences.
    """
    if a.n != b.n or a.T != b.T:
        raise ValueError("trajectories must share the grid")
    w = window_slice(a.n, a.T, lo, hi)
    dt = a.dt
    c0 = 0.0
    c2 = 0.0
    for x, y in ((a.q1, b.q1), (a.q2, b.q2)):
        d = (x - y)[w]
        c0 = max(c0, float(np.abs(d).max()))
        c2 = max(c2, float(np.abs(d).max()), float(np.abs(np.diff(d)).max() / dt),
                 float(np.abs(np.diff(d, 2)).max() / dt ** 2))
    return c0, c2
