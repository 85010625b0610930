"""Mountain-pass search for critical points of the regularized action.

Pipeline: pinned endpoints built from the brake orbit, a linear path
between them, a discrete deformation that lowers the path maximum, and a
damped Newton refinement of the path maximizer.

The deformation moves a band of near-maximal nodes along normalized
descent directions.  Directions are Riesz representatives of the gradient
in the discrete H1 inner product ``<u, v> = sum du dv / dt + sum dt w u v / T^2``
with the component tangent to the path removed, so nodes relax towards the
ridge without sliding along the path.  Node density near the ridge is
restored by periodic action-weighted arclength reparametrization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded
from scipy.sparse.linalg import spsolve

from . import _backend
from .action import ActionContext, batch_evaluate
from .errors import ConfigError, DomainError, NoConvergenceError, StagnationError
from .kepler import BrakeOrbit
from .trajectory import PathOfTrajectories, Trajectory, min_gap
from .verify import OrbitSolution, make_solution

PS_FLAG = "PS-suspect step-size floor"
MAX_ADJUST = 60


@dataclass(frozen=True)
class MinimaxConfig:
    """Settings of the minimax search.

    ``c_lo``/``C_hi`` are the constant levels of the second coordinate on
    the endpoints, ``None`` for automatic choices.  ``step0`` is in H1 units.
    ``tol_grad`` bounds the H1-dual gradient norm at the path maximizer.
    """

    M: int = 64
    c_lo: Optional[float] = None
    C_hi: Optional[float] = None
    step0: float = 0.05
    tol_grad: float = 1e-3
    max_iters: int = 2000
    reparam_every: int = 10
    band: float = 0.2
    max_move: float = 0.25
    ridge_weight: float = 20.0
    step_min: float = 1e-9
    stall_iters: int = 100
    stall_rtol: float = 1e-9
    max_rejections: int = 40
    refine_tol: float = 1e-10
    refine_max_iters: int = 200

    def __post_init__(self):
        if int(self.M) < 32:
            raise ConfigError(f"M must be >= 32, got {self.M}")
        for k in ("step0", "tol_grad", "step_min"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"{k} must be positive")
        if self.c_lo is not None and not self.c_lo > 0:
            raise ConfigError("c_lo must be positive")
        if self.C_hi is not None and self.c_lo is not None and not self.C_hi > self.c_lo:
            raise ConfigError("C_hi must exceed c_lo")
        if int(self.reparam_every) < 1 or int(self.max_iters) < 0:
            raise ConfigError("reparam_every must be >= 1 and max_iters >= 0")
        if not (0.0 < self.band <= 1.0):
            raise ConfigError("band must lie in (0, 1]")


@dataclass
class MinimaxReport:
    c_est: float
    maximizer: Trajectory
    grad_norm_at_max: float
    level_history: np.ndarray
    a_eps: float
    iters: int = 0
    status: str = ""
    grad_inf_at_max: float = float("nan")
    max_index: int = -1
    rejections: int = 0
    reparams: int = 0
    flags: List[str] = field(default_factory=list)
    endpoints: Dict[str, float] = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.c_est - self.a_eps

    def to_dict(self) -> dict:
        return {"c_est": self.c_est, "a_eps": self.a_eps,
                "grad_norm_at_max": self.grad_norm_at_max,
                "grad_inf_at_max": self.grad_inf_at_max, "iters": self.iters,
                "level_history": [float(x) for x in self.level_history],
                "margin": self.margin, "status": self.status,
                "max_index": self.max_index, "rejections": self.rejections,
                "reparams": self.reparams, "flags": list(self.flags),
                "endpoints": dict(self.endpoints)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class H1Metric:
    """Discrete H1 inner product on the free coordinates.

    Vectors are full nodal arrays ``(v1, v2)`` of shape ``(k, n + 1)``; the
    slot ``v1[:, 0]`` is held at zero (Dirichlet).  The ``1/T^2`` weight of
    the mass term keeps the metric invariant under time rescaling.
    """

    def __init__(self, T: float, n: int):
        self.T, self.n = float(T), int(n)
        dt = self.T / self.n
        w = np.ones(self.n + 1)
        w[0] = w[-1] = 0.5
        mass = dt * w / self.T ** 2
        kd = np.full(self.n + 1, 2.0 / dt)
        kd[0] = kd[-1] = 1.0 / dt
        self.diag2 = kd + mass
        self.diag1 = self.diag2[1:].copy()
        self.diag1[0] = 2.0 / dt + mass[1]
        self.off = -1.0 / dt
        self._c1 = cholesky_banded(self._ab(self.diag1))
        self._c2 = cholesky_banded(self._ab(self.diag2))

    def _ab(self, diag):
        ab = np.empty((2, diag.size))
        ab[0, 0] = 0.0
        ab[0, 1:] = self.off
        ab[1] = diag
        return ab

    def _apply(self, diag, v):
        out = v * diag
        out[:, 1:] += self.off * v[:, :-1]
        out[:, :-1] += self.off * v[:, 1:]
        return out

    def apply(self, v1, v2):
        v1 = np.atleast_2d(v1)
        v2 = np.atleast_2d(v2)
        a1 = np.zeros_like(v1)
        a1[:, 1:] = self._apply(self.diag1, v1[:, 1:])
        return a1, self._apply(self.diag2, v2)

    def inner(self, a, b) -> np.ndarray:
        """Row-wise ``<a, b>`` for pairs of stacked nodal arrays."""
        g1, g2 = self.apply(*b)
        return np.sum(np.atleast_2d(a[0])[:, 1:] * g1[:, 1:], axis=1) + \
            np.sum(np.atleast_2d(a[1]) * g2, axis=1)

    def norm(self, v) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(v, v), 0.0))

    def riesz(self, G1, G2):
        """Solve ``<u, .> = G`` row-wise; ``G`` holds full nodal gradients."""
        G1 = np.atleast_2d(G1)
        G2 = np.atleast_2d(G2)
        u1 = np.zeros_like(G1)
        u1[:, 1:] = cho_solve_banded((self._c1, False), G1[:, 1:].T).T
        u2 = cho_solve_banded((self._c2, False), G2.T).T
        return u1, u2

    def dual_norm(self, G1, G2) -> np.ndarray:
        u1, u2 = self.riesz(G1, G2)
        G1 = np.atleast_2d(G1)
        G2 = np.atleast_2d(G2)
        return np.sqrt(np.maximum(np.sum(G1[:, 1:] * u1[:, 1:], axis=1)
                                  + np.sum(G2 * u2, axis=1), 0.0))


def _values(ctx, Q1, Q2):
    return batch_evaluate(ctx, Q1, Q2, grad=False)[0]


def _const_path_value(ctx, q, c):
    return float(_values(ctx, q[None, :], np.full((1, q.size), c))[0])


def build_endpoints(brake: BrakeOrbit, ctx: ActionContext, cfg: MinimaxConfig,
                    return_info: bool = False):
    """Pinned endpoints ``(q_eps, c_lo)`` and ``(q_eps, C_hi)``.

    ``c_lo`` is pulled halfway towards the brake amplitude until its action
    is below the brake level; ``C_hi`` is doubled until its action is within
    a tenth of the expected gap above the brake level.  The expected gap is
    the largest excess over the brake level along constant second
    coordinates between the two levels.
    """
    if brake.n != ctx.n or brake.T != ctx.T:
        raise ConfigError("brake orbit grid does not match the context")
    q = brake.q
    w = brake.w
    a_eps = float(brake.a)
    c_lo = cfg.c_lo if cfg.c_lo is not None else 1.5 * w
    if not c_lo > w:
        raise ConfigError(f"c_lo = {c_lo} must exceed the brake amplitude {w}")
    for _ in range(MAX_ADJUST):
        if not c_lo - w > 1e-12 * w:
            raise ConfigError("c_lo collapsed onto the brake amplitude before "
                              "A(endpoint_lo) dropped below the brake level")
        A_lo = _const_path_value(ctx, q, c_lo)
        if A_lo < a_eps:
            break
        c_lo = w + 0.5 * (c_lo - w)
    else:
        raise ConfigError("could not bring A(endpoint_lo) below the brake level")
    C_hi = cfg.C_hi if cfg.C_hi is not None else 8.0 * c_lo
    if not C_hi > c_lo:
        raise ConfigError("C_hi must exceed c_lo")
    history = []
    for _ in range(MAX_ADJUST):
        cs = np.geomspace(c_lo, C_hi, 65)
        vals = _values(ctx, np.broadcast_to(q, (cs.size, q.size)),
                       np.repeat(cs[:, None], q.size, axis=1))
        gap_est = float(vals.max() - a_eps)
        A_hi = float(vals[-1])
        history.append((C_hi, A_hi - a_eps))
        if gap_est > 0 and A_hi - a_eps <= 0.1 * gap_est:
            break
        C_hi *= 2.0
    else:
        raise ConfigError("could not bring A(endpoint_hi) near the brake level")
    lo = Trajectory(ctx.T, q, np.full(q.size, c_lo))
    hi = Trajectory(ctx.T, q, np.full(q.size, C_hi))
    if not return_info:
        return lo, hi
    info = {"c_lo": c_lo, "C_hi": C_hi, "A_lo": A_lo, "A_hi": A_hi, "a_eps": a_eps,
            "gap_est": gap_est, "w": w}
    return lo, hi, info


def initial_path(lo: Trajectory, hi: Trajectory, M: int, ctx: Optional[ActionContext] = None,
                 ridge_weight: float = 0.0, samples: int = 16) -> PathOfTrajectories:
    """Straight path from ``lo`` to ``hi`` with ``M + 1`` nodes.

    Without ``ctx`` nodes are equispaced.  With ``ctx`` they are placed by
    action-weighted arclength along the segment (``samples * M`` probe
    points), concentrating nodes where the action is near its maximum.
    """
    if ctx is None or ridge_weight <= 0:
        return PathOfTrajectories.linear(lo, hi, M)
    s = np.linspace(0.0, 1.0, samples * M + 1)
    Q1 = (1 - s)[:, None] * lo.q1 + s[:, None] * hi.q1
    Q2 = (1 - s)[:, None] * lo.q2 + s[:, None] * hi.q2
    vals = _values(ctx, Q1, Q2)
    rho = _ridge_density(vals, ridge_weight)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]))])
    sk = np.interp(np.linspace(0.0, cum[-1], M + 1), cum, s)
    nodes = [lo]
    for x in sk[1:-1]:
        nodes.append(Trajectory(lo.T, (1 - x) * lo.q1 + x * hi.q1, (1 - x) * lo.q2 + x * hi.q2))
    nodes.append(hi)
    return PathOfTrajectories(tuple(nodes))


def _ridge_density(vals, beta):
    vmax, vmed = vals.max(), np.median(vals)
    span = vmax - vmed
    r = np.clip((vals - vmed) / span, 0.0, 1.0) if span > 0 else np.zeros_like(vals)
    return 1.0 + beta * r ** 2


def diagnostics_crossing(path: PathOfTrajectories) -> np.ndarray:
    """Minimum gap of every path node."""
    path.require_domain()
    return np.array([min_gap(x)[0] for x in path.nodes])


def _reparam(metric, Q1, Q2, vals, beta):
    """Action-weighted arclength redistribution; endpoints are kept as is."""
    M = Q1.shape[0] - 1
    d1 = np.diff(Q1, axis=0)
    d2 = np.diff(Q2, axis=0)
    L = metric.norm((d1, d2))
    rho = _ridge_density(vals, beta)
    s = np.concatenate([[0.0], np.cumsum(L * 0.5 * (rho[1:] + rho[:-1]))])
    if not s[-1] > 0:
        return Q1, Q2
    target = np.linspace(0.0, s[-1], M + 1)
    j = np.clip(np.searchsorted(s, target[1:-1], side="right") - 1, 0, M - 1)
    th = ((target[1:-1] - s[j]) / np.where(s[j + 1] > s[j], s[j + 1] - s[j], 1.0))[:, None]
    N1 = Q1.copy()
    N2 = Q2.copy()
    N1[1:-1] = Q1[j] + th * d1[j]
    N2[1:-1] = Q2[j] + th * d2[j]
    N1[1:-1, 0] = 0.0 if np.all(Q1[:, 0] == 0.0) else N1[1:-1, 0]
    return N1, N2


def _midpoints(Q1, Q2, idx):
    return 0.5 * (Q1[idx] + Q1[idx + 1]), 0.5 * (Q2[idx] + Q2[idx + 1])


def _level(vals, mvals):
    """Path level and its location: ``(value, kind, index)``, nodes first on ties."""
    i, j = int(np.argmax(vals)), int(np.argmax(mvals))
    if mvals[j] > vals[i]:
        return float(mvals[j]), "mid", j
    return float(vals[i]), "node", i


def deform(path: PathOfTrajectories, ctx: ActionContext, cfg: MinimaxConfig,
           a_eps: float = float("nan")):
    """Lower the path maximum by banded normalized descent steps.

    The path level is the largest action over the nodes and the segment
    midpoints, so moves that let the chain cut across the ridge between two
    nodes are seen and refused.  Steps that leave the admissible set or raise
    the level (beyond ``1e-12`` relative) are rejected and the step halved;
    accepted steps grow it by 10% up to ``step0``.  More than
    ``cfg.max_rejections`` consecutive exits from the admissible set raise
    :class:`StagnationError`.  Returns ``(path, MinimaxReport)``.
    """
    if path.T != ctx.T or path.n != ctx.n:
        raise ValueError("path grid does not match the context")
    path.require_domain()
    metric = H1Metric(ctx.T, ctx.n)
    Q1, Q2 = path.arrays()
    Q1 = Q1.copy()
    Q2 = Q2.copy()
    M = Q1.shape[0] - 1
    allseg = np.arange(M)
    vals = _values(ctx, Q1, Q2)
    mvals = _values(ctx, *_midpoints(Q1, Q2, allseg))
    step = float(cfg.step0)
    level, kind, where = _level(vals, mvals)
    history = [level]
    flags: List[str] = []
    status = "max_iters"
    rejections = domain_streak = reparams = 0
    ref_it, ref_val = 0, level
    it = 0

    def at_level(kind, where):
        if kind == "node":
            return Q1[where], Q2[where]
        m1, m2 = _midpoints(Q1, Q2, np.array([where]))
        return m1[0], m2[0]

    while True:
        level, kind, where = _level(vals, mvals)
        x1, x2 = at_level(kind, where)
        _, G1, G2 = batch_evaluate(ctx, x1[None, :], x2[None, :], grad=True)
        G1[:, 0] = 0.0
        gnorm = float(metric.dual_norm(G1, G2)[0])
        ginf = float(max(np.abs(G1).max(), np.abs(G2).max()))
        if gnorm < cfg.tol_grad:
            status = "converged"
            break
        if it >= cfg.max_iters:
            break
        if level < ref_val - cfg.stall_rtol * abs(level):
            ref_it, ref_val = it, level
        if it - ref_it > cfg.stall_iters:
            status = "stalled"
            break
        if step < cfg.step_min:
            status = "step_floor"
            if gnorm > 10 * cfg.tol_grad:
                flags.append(PS_FLAG)
            break
        it += 1
        vmax = float(vals.max())
        imax = int(np.argmax(vals))
        if imax in (0, M):
            raise StagnationError("path maximum sits on a pinned endpoint",
                                  best=PathOfTrajectories.from_arrays(ctx.T, Q1, Q2),
                                  diagnostics={"iters": it, "max_index": imax})
        thr = vmax - cfg.band * (vmax - float(np.median(vals)))
        hot = vals >= thr
        hot[:-1] |= mvals >= thr
        hot[1:] |= mvals >= thr
        band = 1 + np.flatnonzero(hot[1:-1])
        _, G1, G2 = batch_evaluate(ctx, Q1[band], Q2[band], grad=True)
        G1[:, 0] = 0.0
        u1, u2 = metric.riesz(G1, G2)
        t1 = Q1[band + 1] - Q1[band - 1]
        t2 = Q2[band + 1] - Q2[band - 1]
        tn = metric.norm((t1, t2))
        tn = np.where(tn > 0, tn, 1.0)
        t1 /= tn[:, None]
        t2 /= tn[:, None]
        proj = metric.inner((u1, u2), (t1, t2))
        p1 = u1 - proj[:, None] * t1
        p2 = u2 - proj[:, None] * t2
        pn = metric.norm((p1, p2))
        seglen = metric.norm((np.diff(Q1, axis=0), np.diff(Q2, axis=0)))
        cap = cfg.max_move * np.minimum(seglen[band - 1], seglen[band])
        scale = np.minimum(step, cap) / np.maximum(pn, cfg.tol_grad)
        N1 = Q1.copy()
        N2 = Q2.copy()
        N1[band] -= scale[:, None] * p1
        N2[band] -= scale[:, None] * p2
        N1[band, 0] = Q1[band, 0]
        if not np.all(N2[band] - N1[band] > 0):
            rejections += 1
            domain_streak += 1
            step *= 0.5
            history.append(level)
            if domain_streak > cfg.max_rejections:
                raise StagnationError(
                    "deformation keeps leaving the admissible set",
                    best=PathOfTrajectories.from_arrays(ctx.T, Q1, Q2),
                    diagnostics={"iters": it, "step": step, "grad_norm_at_max": gnorm})
            continue
        domain_streak = 0
        seg = np.union1d(band - 1, band)
        tv = vals.copy()
        tm = mvals.copy()
        tv[band] = _values(ctx, N1[band], N2[band])
        tm[seg] = _values(ctx, *_midpoints(N1, N2, seg))
        tol = 1e-12 * max(1.0, abs(level))
        new_level = max(tv.max(), tm.max())
        if new_level <= level + tol:
            Q1, Q2, vals, mvals = N1, N2, tv, tm
            step = min(step * 1.1, cfg.step0)
        else:
            rejections += 1
            step *= 0.5
        if it % cfg.reparam_every == 0:
            R1, R2 = _reparam(metric, Q1, Q2, vals, cfg.ridge_weight)
            rv = _values(ctx, R1, R2)
            rm = _values(ctx, *_midpoints(R1, R2, allseg))
            cur = max(vals.max(), mvals.max())
            if max(rv.max(), rm.max()) <= cur + 1e-12 * max(1.0, abs(cur)):
                Q1, Q2, vals, mvals = R1, R2, rv, rm
                reparams += 1
        history.append(max(float(vals.max()), float(mvals.max())))
    out = PathOfTrajectories.from_arrays(ctx.T, Q1, Q2,
                                         keep=[path.endpoint_lo] + [None] * (M - 1) + [path.endpoint_hi])
    x1, x2 = at_level(kind, where)
    maximizer = out.nodes[where] if kind == "node" else Trajectory(ctx.T, x1, x2)
    report = MinimaxReport(
        c_est=level, maximizer=maximizer, grad_norm_at_max=gnorm,
        level_history=np.asarray(history), a_eps=float(a_eps), iters=it, status=status,
        grad_inf_at_max=ginf, max_index=where if kind == "node" else -1,
        rejections=rejections, reparams=reparams, flags=flags)
    return out, report


def _pack(g1, g2):
    x = np.empty(2 * g1.size - 1)
    x[0] = g2[0]
    x[1::2] = g1[1:]
    x[2::2] = g2[1:]
    return x


def _unpack(x):
    n = (x.size - 1) // 2
    d1 = np.concatenate([[0.0], x[1::2]])
    d2 = np.concatenate([[x[0]], x[2::2]])
    assert d1.size == n + 1
    return d1, d2


def jacobian_bands(ctx: ActionContext, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Jacobian of the packed gradient in ``solve_banded`` form, bandwidth (2, 2).

    Unknowns are interleaved as ``[q2_0, q1_1, q2_1, ..., q1_n, q2_n]``.
    """
    n = q1.size - 1
    dt = ctx.dt
    d11, d22, d12 = _backend.hessian_diagonals(ctx.sp, ctx.mu, dt, q1, q2)
    kd = np.full(n + 1, 2.0 / dt)
    kd[0] = kd[-1] = 1.0 / dt
    N = 2 * n + 1
    ab = np.zeros((5, N))
    diag = np.empty(N)
    diag[0] = kd[0] + d22[0]
    diag[1::2] = kd[1:] + d11[1:]
    diag[2::2] = kd[1:] + d22[1:]
    ab[2] = diag
    up1 = np.zeros(N - 1)
    up1[1::2] = d12[1:]
    ab[1, 1:] = up1
    ab[3, :-1] = up1
    ab[0, 2:] = -1.0 / dt
    ab[4, :-2] = -1.0 / dt
    return ab


def _banded_to_sparse(ab):
    N = ab.shape[1]
    diags = [ab[0, 2:], ab[1, 1:], ab[2], ab[3, :-1], ab[4, :-2]]
    return sparse.diags(diags, [2, 1, 0, -1, -2], shape=(N, N), format="csc")


def _residual(ctx, q1, q2):
    _, G1, G2 = batch_evaluate(ctx, q1[None, :], q2[None, :], grad=True)
    return _pack(G1[0], G2[0])


def roundoff_floor(ctx: ActionContext, q1: np.ndarray, q2: np.ndarray) -> float:
    """Attainable ``|grad A|_inf`` in double precision: ``8 eps max|q| / dt``."""
    return 8.0 * np.finfo(float).eps * float(np.abs(q1).max() + np.abs(q2).max()) / ctx.dt


def refine_critical_point(traj0: Trajectory, ctx: ActionContext, tol: float = 1e-10,
                          c_est: Optional[float] = None, max_iters: int = 200,
                          loose: float = float("inf"), stall: int = 50) -> OrbitSolution:
    """Damped Newton on ``grad A = 0`` with backtracking on ``|grad A|``.

    Pure Newton steps are tried first; when backtracking cannot reduce the
    residual a Levenberg-Marquardt step on the normal equations is used.
    Stops when ``|grad A|_inf < tol``, or once it is below the rounding
    floor of the kinetic differences (:func:`roundoff_floor`) and a step no
    longer halves it.  ``stall`` consecutive steps without
    decrease raise :class:`NoConvergenceError` carrying the best iterate.
    """
    ctx.check(traj0)
    if not traj0.pinned:
        raise DomainError("refinement needs q1(0) = 0")
    q1 = traj0.q1.copy()
    q2 = traj0.q2.copy()
    r = _residual(ctx, q1, q2)
    if np.abs(r).max() > loose:
        raise ValueError(f"initial gradient {np.abs(r).max():.3e} exceeds {loose:.3e}")
    best = (np.abs(r).max(), q1.copy(), q2.copy())
    bad = 0
    nu = None
    it = lm_steps = 0
    prev = np.inf
    while np.abs(r).max() >= tol:
        g = np.abs(r).max()
        if g < roundoff_floor(ctx, q1, q2) and g > 0.5 * prev:
            break
        prev = g
        if it >= max_iters or bad >= stall:
            raise NoConvergenceError(
                f"refinement stalled at |grad|_inf = {best[0]:.3e}",
                best=Trajectory(ctx.T, best[1], best[2]),
                diagnostics={"iters": it, "grad_inf": best[0], "lm_steps": lm_steps})
        it += 1
        ab = jacobian_bands(ctx, q1, q2)
        rn = np.linalg.norm(r)
        moved = False
        try:
            dx = solve_banded((2, 2), ab, -r)
        except (np.linalg.LinAlgError, ValueError):
            dx = None
        if dx is not None and np.all(np.isfinite(dx)):
            d1, d2 = _unpack(dx)
            lam = 1.0
            for _ in range(30):
                t1, t2 = q1 + lam * d1, q2 + lam * d2
                if np.all(t2 - t1 > 0):
                    rt = _residual(ctx, t1, t2)
                    if np.linalg.norm(rt) < (1.0 - 1e-4 * lam) * rn:
                        q1, q2, r = t1, t2, rt
                        moved = True
                        break
                lam *= 0.5
        if not moved:
            J = _banded_to_sparse(ab)
            JtJ = (J.T @ J).tocsc()
            D = JtJ.diagonal()
            nu = 1e-3 if nu is None else nu
            for _ in range(12):
                A = JtJ + sparse.diags(nu * np.maximum(D, 1e-300), format="csc")
                dx = spsolve(A, -(J.T @ r))
                d1, d2 = _unpack(dx)
                t1, t2 = q1 + d1, q2 + d2
                if np.all(t2 - t1 > 0):
                    rt = _residual(ctx, t1, t2)
                    if np.linalg.norm(rt) < rn:
                        q1, q2, r = t1, t2, rt
                        nu = max(nu / 10.0, 1e-12)
                        moved = True
                        lm_steps += 1
                        break
                nu = min(nu * 10.0, 1e16)
        g = np.abs(r).max()
        if moved and g < best[0]:
            best = (g, q1.copy(), q2.copy())
            bad = 0
        else:
            bad += 1
    traj = Trajectory(ctx.T, q1, q2)
    return make_solution(traj, ctx, c_est,
                         {"iters": it, "grad_inf": float(np.abs(r).max()), "lm_steps": lm_steps})


@dataclass
class MinimaxResult:
    solution: OrbitSolution
    report: MinimaxReport
    path: PathOfTrajectories
    brake: BrakeOrbit


def solve(ctx: ActionContext, cfg: MinimaxConfig = MinimaxConfig(),
          brake: Optional[BrakeOrbit] = None) -> MinimaxResult:
    """Full pipeline: brake orbit, endpoints, deformation and refinement."""
    from .kepler import brake_orbit

    if brake is None:
        brake = brake_orbit(ctx.sp, ctx.T, ctx.n)
    lo, hi, info = build_endpoints(brake, ctx, cfg, return_info=True)
    path = initial_path(lo, hi, cfg.M, ctx, cfg.ridge_weight)
    path, report = deform(path, ctx, cfg, a_eps=brake.a)
    report.endpoints = info
    sol = refine_critical_point(report.maximizer, ctx, tol=cfg.refine_tol,
                                c_est=report.c_est, max_iters=cfg.refine_max_iters)
    return MinimaxResult(sol, report, path, brake)
