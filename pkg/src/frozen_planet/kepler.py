"""One-dimensional regularized Kepler problem ``q'' = f_eps'(q)``.

A brake orbit leaves the centre at ``t = 0`` and stops at its amplitude
``w`` at ``t = T``.  The half period as a function of the amplitude is

    T(w) = int_0^w dx / sqrt(2 (f_eps(x) - f_eps(w)))

and is evaluated with the substitution ``x = w sin(theta)**2``, which turns
the inverse square-root endpoint singularity into a bounded integrand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solveh_banded
from scipy.optimize import brentq

from .errors import DomainError, EvaluationError, NoConvergenceError
from .potentials import SmoothedPotentials
from .trajectory import CSV_FMT, Trajectory

GL_NODES = 200
RTOL = 1e-13

_gl_cache = {}


def _gauss_legendre(m: int):
    if m not in _gl_cache:
        _gl_cache[m] = np.polynomial.legendre.leggauss(m)
    return _gl_cache[m]


def _theta_quadrature(sp: SmoothedPotentials, w: float, m: int):
    """Nodes ``theta`` and weights on [0, pi/2], split where ``x = eps1``."""
    x, wt = _gauss_legendre(m)
    edges = [0.0, np.pi / 2]
    if sp.eps1 < w:
        edges = [0.0, float(np.arcsin(np.sqrt(sp.eps1 / w))), np.pi / 2]
    th, ww = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        th.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ww.append(0.5 * (b - a) * wt)
    return np.concatenate(th), np.concatenate(ww)


def _drop(sp: SmoothedPotentials, w: float, theta: np.ndarray) -> np.ndarray:
    s = np.sin(theta)
    x = w * s * s
    d = sp.f_eps(x) - sp.f_eps(w)
    if np.any(~(d > 0)):
        k = int(np.argmax(~(d > 0)))
        raise EvaluationError(f"f_eps is not strictly decreasing on [0, w]: "
                              f"f_eps({x[k]!r}) - f_eps({w!r}) = {d[k]!r}")
    return d


def period_of_amplitude(sp: SmoothedPotentials, w: float, nodes: int = GL_NODES) -> float:
    """Half period of the brake orbit with amplitude ``w > eps1``."""
    w = float(w)
    if not w > sp.eps1:
        raise DomainError(f"amplitude must exceed eps1={sp.eps1}, got {w}")
    theta, wt = _theta_quadrature(sp, w, nodes)
    d = _drop(sp, w, theta)
    integrand = 2.0 * w * np.sin(theta) * np.cos(theta) / np.sqrt(2.0 * d)
    return float(np.dot(wt, integrand))


def level_of_amplitude(sp: SmoothedPotentials, w: float, nodes: int = GL_NODES) -> float:
    """Continuum value of ``F_eps = int 1/2 q'^2 + f_eps(q)`` on the brake orbit.

    Uses energy conservation ``1/2 q'^2 = f_eps(q) - f_eps(w)``.
    """
    w = float(w)
    if not w > sp.eps1:
        raise DomainError(f"amplitude must exceed eps1={sp.eps1}, got {w}")
    theta, wt = _theta_quadrature(sp, w, nodes)
    d = _drop(sp, w, theta)
    s = np.sin(theta)
    fx = sp.f_eps(w * s * s)
    integrand = (2.0 * fx - sp.f_eps(w)) * 2.0 * w * s * np.cos(theta) / np.sqrt(2.0 * d)
    return float(np.dot(wt, integrand))


def amplitude_of_period(sp: SmoothedPotentials, T: float, nodes: int = GL_NODES) -> float:
    """Invert the (strictly increasing) period map: ``T(w) = T``."""
    T = float(T)
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")

    def F(w):
        return period_of_amplitude(sp, w, nodes) - T

    hi = max(2.0 * sp.eps1, 1.0)
    tries = 0
    while F(hi) < 0:
        hi *= 2.0
        tries += 1
        if tries > 60:
            raise NoConvergenceError("period map bracket expansion failed upward",
                                     diagnostics={"T": T, "w_hi": hi})
    lo = hi
    tries = 0
    while F(lo) > 0:
        lo = sp.eps1 + 0.5 * (lo - sp.eps1)
        tries += 1
        if tries > 60:
            raise NoConvergenceError("period map bracket expansion failed downward",
                                     diagnostics={"T": T, "w_lo": lo, "eps1": sp.eps1})
    if lo == hi:
        return hi
    w = brentq(F, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(F(w)) > 1e-10 * T:
        raise NoConvergenceError("period inversion missed tolerance",
                                 diagnostics={"T": T, "w": w, "residual": F(w)})
    return float(w)


def period_monotonicity_margin(sp: SmoothedPotentials, grid) -> float:
    """Smallest decrease of ``2 f_eps(s) - s f_eps'(s)`` between grid points.

    Positive values certify the sampled sufficient condition for an
    increasing period map.
    """
    s = np.asarray(grid, dtype=float)
    v = 2.0 * sp.f_eps(s) - s * sp.df_eps(s)
    return float(np.min(-np.diff(v)))


# --- brake orbits --------------------------------------------------------------

def _rhs(sp):
    def rhs(_, y):
        return np.array([y[1], sp.df_eps(y[0])])
    return rhs


class _Fall:
    """Reversed-time fall from rest at ``w`` to the centre.

    The smooth part ``q >= eps1`` is integrated with DOP853 up to the
    junction; below it the force is the constant ``f'(eps1)`` and the motion
    is an exact parabola, so no high-order step straddles the kink of
    ``f_eps'``.
    """

    def __init__(self, sp: SmoothedPotentials, w: float, t_max: float):
        e = sp.eps1

        def junction(_, y):
            return y[0] - e
        junction.terminal = True
        junction.direction = -1

        self.sp, self.w = sp, w
        if w > e:
            vmax = float(np.sqrt(2.0 * (sp.f_eps(0.0) - sp.f_eps(w))))
            # very small eps1 can defeat the tightest tolerance near the
            # centre; relax it stepwise rather than fail
            for rtol in (RTOL, 10 * RTOL, 100 * RTOL, 1000 * RTOL):
                sol = solve_ivp(_rhs(sp), (0.0, t_max), np.array([w, 0.0]),
                                method="DOP853", rtol=rtol,
                                atol=rtol * 1e-2 * np.array([w, vmax]),
                                events=junction, dense_output=True)
                if sol.status >= 0:
                    break
            else:
                raise EvaluationError(f"brake integration failed: {sol.message}")
            self.rtol = rtol
            self._sol = sol.sol
            if sol.t_events[0].size == 0:
                self.tau_e = None
                self.tau = None
                return
            self.tau_e = float(sol.t_events[0][0])
            # the located event state, not eps1 itself: a position offset of
            # 1e-14 would cost ~|f'(eps1)| * 1e-14 in energy
            self.q_e = float(sol.y_events[0][0][0])
            self.p_e = float(sol.y_events[0][0][1])
        else:
            self._sol = None
            self.tau_e, self.q_e, self.p_e = 0.0, w, 0.0
        # q_e + p_e s + c s^2 / 2 = 0 with c = f'(eps1) < 0, p_e <= 0
        c = float(sp.df_eps(e))
        disc = self.p_e ** 2 - 2.0 * c * self.q_e
        self.c = c
        self.tau = self.tau_e + (-self.p_e - np.sqrt(disc)) / c
        # exact state at the centre (reversed time: p < 0)
        self.p_end = -float(np.sqrt(disc))

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.tau_e is None:
            return self._sol(tau)
        q = np.empty(tau.shape)
        p = np.empty(tau.shape)
        smooth = tau <= self.tau_e
        if np.any(smooth):
            y = self._sol(tau[smooth])
            q[smooth], p[smooth] = y[0], y[1]
        s = tau[~smooth] - self.tau_e
        q[~smooth] = self.q_e + self.p_e * s + 0.5 * self.c * s * s
        p[~smooth] = self.p_e + self.c * s
        return np.vstack([q, p])


def fall_time(sp: SmoothedPotentials, w: float) -> float:
    """Time to reach the centre from rest at ``w`` by direct integration."""
    guess = period_of_amplitude(sp, w)
    tau = _Fall(sp, w, 2.0 * guess).tau
    if tau is None:
        raise EvaluationError("orbit did not reach the centre")
    return tau


def discrete_F(sp: SmoothedPotentials, T: float, q: np.ndarray) -> float:
    """Discrete ``F_eps`` with the collision-node convention of the action."""
    q = np.asarray(q, dtype=float)
    n = q.size - 1
    dt = T / n
    d = np.diff(q)
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    if q[0] == 0.0:
        w[0] = 0.0
    return float(0.5 * np.dot(d, d) / dt + dt * np.dot(w, sp.f_eps(q)))


@dataclass(frozen=True, eq=False)
class BrakeOrbit:
    """Half brake orbit on ``[0, T]`` sampled on the ``n``-cell grid.

    Attributes
    ----------
    T, w : float
        Half period and amplitude ``w = q(T)``.
    q, v : ndarray
        Position and velocity at ``t_i = i T / n``; ``q[0] == 0`` exactly.
    a : float
        Discrete ``F_eps`` of the samples.
    h : float
        Energy ``-f_eps(w)`` of ``1/2 q'^2 - f_eps(q)``.
    """

    sp: SmoothedPotentials
    T: float
    w: float
    q: np.ndarray
    v: np.ndarray
    a: float
    h: float
    dense: Optional[Callable] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.q.size - 1

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    def state(self, t):
        """Position and velocity at arbitrary times in ``[0, 2T]``.

        Times beyond ``T`` use the reflection symmetry about the brake point.
        """
        t = np.asarray(t, dtype=float)
        if self.dense is None:
            raise ValueError("orbit has no dense output")
        r = np.where(t > self.T, 2.0 * self.T - t, t)
        y = self.dense(self.T - r)
        sign = np.where(t > self.T, 1.0, -1.0)
        return y[0], sign * y[1]

    def pair_with(self, c: float) -> Trajectory:
        """Trajectory ``(q, c)`` with a constant outer electron."""
        return Trajectory(self.T, self.q, np.full(self.n + 1, float(c)))

    def to_csv(self, path: str) -> None:
        np.savetxt(path, np.column_stack([self.t, self.q]), delimiter=",",
                   header="t,q1", comments="", fmt=CSV_FMT)


def brake_orbit(sp: SmoothedPotentials, T: float, n: int) -> BrakeOrbit:
    """Brake orbit with half period ``T`` by backward integration from the brake point.

    The amplitude from :func:`amplitude_of_period` is corrected by a few
    secant steps so that the integrated fall time equals ``T`` to 1e-13
    relative; the correction is of the order of the quadrature error.
    """
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    if int(n) < 16:
        raise DomainError(f"n must be >= 16, got {n}")
    n = int(n)
    w0 = amplitude_of_period(sp, T)
    ws = [w0]
    taus = [_Fall(sp, w0, 2.0 * T).tau]
    for _ in range(8):
        if taus[-1] is not None and abs(taus[-1] - T) <= 1e-13 * T:
            break
        if len(ws) == 1 or taus[-2] is None:
            w = ws[-1] * (T / taus[-1]) ** (2.0 / 3.0)
        else:
            w = ws[-1] - (taus[-1] - T) * (ws[-1] - ws[-2]) / (taus[-1] - taus[-2])
        ws.append(w)
        taus.append(_Fall(sp, w, 2.0 * T).tau)
    w = ws[-1]
    fall = _Fall(sp, w, 2.0 * T)
    if fall.tau is None or abs(fall.tau - T) > 1e-9 * T:
        raise EvaluationError(f"shooting on the fall time failed: tau={fall.tau}, T={T}")
    t = np.linspace(0.0, T, n + 1)
    # map the grid onto the exact fall interval (a relative change ~1e-13)
    # so that t = 0 samples the collision itself
    y = fall((T - t) * (fall.tau / T))
    q = y[0].copy()
    v = -y[1]
    if abs(q[0]) > 1e-8 * w:
        raise EvaluationError(f"brake orbit misses the centre: q(0) = {q[0]!r}")
    if np.any(q[1:] <= 0) or np.any(q > w * (1 + 1e-10)):
        raise EvaluationError("integration left [0, w]")
    q[0] = 0.0
    if fall.tau_e is not None:
        v[0] = -fall.p_end
    q[-1] = w
    v[-1] = 0.0
    return BrakeOrbit(sp, float(T), float(w), q, v, discrete_F(sp, T, q),
                      float(-sp.f_eps(w)), dense=fall)


def brake_residual(orbit: BrakeOrbit, lo: Optional[float] = None,
                   hi: Optional[float] = None, step: Optional[float] = None) -> float:
    """Max of ``|v' - f_eps'(q)|`` on ``[lo, hi]`` (default ``[T/10, T]``).

    ``v'`` is a fourth-order centred difference of the dense velocity with
    step ``3e-4 T``.
    """
    T = orbit.T
    lo = T / 10 if lo is None else lo
    hi = T if hi is None else hi
    dh = 3e-4 * T if step is None else step
    ts = orbit.t[(orbit.t >= lo - 1e-12) & (orbit.t <= hi + 1e-12)]
    vs = [orbit.state(ts + k * dh)[1] for k in (-2, -1, 1, 2)]
    acc = (vs[0] - 8 * vs[1] + 8 * vs[2] - vs[3]) / (12 * dh)
    q, _ = orbit.state(ts)
    return float(np.max(np.abs(acc - orbit.sp.df_eps(q))))


def energy_drift(orbit: BrakeOrbit) -> float:
    """Max relative deviation of ``1/2 v^2 - f_eps(q)`` from ``h`` on the samples."""
    e = 0.5 * orbit.v ** 2 - orbit.sp.f_eps(orbit.q)
    return float(np.max(np.abs(e - orbit.h)) / abs(orbit.h))


def minimize_discrete_F(sp: SmoothedPotentials, T: float, n: int,
                        q0: Optional[np.ndarray] = None, tol: float = 1e-12,
                        maxiter: int = 200) -> np.ndarray:
    """Direct Newton minimization of the (strictly convex) discrete ``F_eps``.

    Unknowns are ``q[1:]`` with ``q[0] = 0``.  Returns the minimizing nodal
    values.
    """
    dt = T / n
    if q0 is None:
        w = amplitude_of_period(sp, T)
        q = w * np.sin(0.5 * np.pi * np.linspace(0.0, 1.0, n + 1)) ** (2.0 / 3.0)
    else:
        q = np.array(q0, dtype=float)
    q[0] = 0.0
    wt = np.ones(n + 1)
    wt[-1] = 0.5

    def grad(q):
        d = np.diff(q) / dt
        g = dt * wt * sp.df_eps(q)
        g[:-1] -= d
        g[1:] += d
        return g[1:]

    F = discrete_F(sp, T, q)
    g = grad(q)
    for _ in range(maxiter):
        scale = max(1.0, float(np.max(np.abs(sp.df_eps(q)))) * dt)
        if np.max(np.abs(g)) < tol * scale:
            return q
        diag = np.full(n, 2.0 / dt)
        diag[-1] = 1.0 / dt
        diag += dt * wt[1:] * sp.d2f_eps(q[1:])
        ab = np.zeros((2, n))
        ab[0, 1:] = -1.0 / dt
        ab[1] = diag
        step = solveh_banded(ab, -g)
        # Newton step at the rounding floor: no further progress possible
        if np.max(np.abs(step)) < 1e-13 * np.max(np.abs(q)):
            return q
        lam = 1.0
        for _ in range(60):
            trial = q.copy()
            trial[1:] += lam * step
            Ft = discrete_F(sp, T, trial)
            if Ft <= F:
                break
            lam *= 0.5
        else:
            raise NoConvergenceError("line search failed in discrete F minimization",
                                     best=q)
        q, F = trial, Ft
        g = grad(q)
    raise NoConvergenceError("discrete F minimization did not converge", best=q)


def brake_level_convergence(sps: Sequence[SmoothedPotentials], T: float,
                            n: Optional[int] = None) -> np.ndarray:
    """Brake levels ``a_eps`` for a sequence of potentials with decreasing eps1.

    With ``n`` omitted the continuum level (quadrature) is returned;
    otherwise the discrete level of the sampled orbit on the ``n``-grid.
    """
    eps = [sp.eps1 for sp in sps]
    if any(b >= a for a, b in zip(eps[:-1], eps[1:])):
        raise ValueError("eps1 must be strictly decreasing")
    out = []
    for sp in sps:
        w = amplitude_of_period(sp, T)
        out.append(level_of_amplitude(sp, w) if n is None else brake_orbit(sp, T, n).a)
    return np.array(out)
