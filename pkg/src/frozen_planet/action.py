"""Discrete regularized action and its exact gradient.

For a piecewise-linear trajectory on a uniform grid the action is

    A = sum_i (|dq1_i|^2 + |dq2_i|^2) / (2 dt)
        + dt * sum_i w_i [f_eps(q1_i) + f_eps(q2_i) - mu g_eps(q2_i - q1_i)]

with trapezoid weights ``w``.  On pinned trajectories (``q1[0] == 0``) the
term ``w_0 f_eps(q1_0)`` is a constant of the admissible set and is left
out, so that levels do not carry an O(dt / eps1) offset from the collision
node.  The free coordinates are ``q1[1:]`` and all of ``q2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import _backend
from .errors import DomainError
from .potentials import SmoothedPotentials
from .trajectory import Trajectory, l2_norm_dot


@dataclass(frozen=True)
class ActionContext:
    """Potentials, charge factor and grid for action evaluation."""

    sp: SmoothedPotentials
    mu: float
    T: float
    n: int

    def __post_init__(self):
        if not (0.0 <= self.mu <= 1.0):
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.n) < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self) -> float:
        return self.T / self.n

    def with_grid(self, T: float = None, n: int = None) -> "ActionContext":
        return ActionContext(self.sp, self.mu, self.T if T is None else T,
                             self.n if n is None else n)

    def with_mu(self, mu: float) -> "ActionContext":
        return ActionContext(self.sp, mu, self.T, self.n)

    def with_eps(self, eps1: float, eps2: float) -> "ActionContext":
        return ActionContext(self.sp.with_eps(eps1, eps2), self.mu, self.T, self.n)

    def check(self, traj: Trajectory) -> None:
        if traj.n != self.n or traj.T != self.T:
            raise ValueError(f"trajectory grid (T={traj.T}, n={traj.n}) does not match "
                             f"context (T={self.T}, n={self.n})")
        traj.require_gap()

    def describe(self) -> dict:
        return {"family": self.sp.family.describe(), "eps1": self.sp.eps1,
                "eps2": self.sp.eps2, "mu": self.mu, "T": self.T, "n": self.n}


@dataclass(frozen=True)
class GradientVector:
    """Gradient with respect to the free coordinates ``q1[1:]`` and ``q2``."""

    g_q1: np.ndarray
    g_q2: np.ndarray

    def __post_init__(self):
        if self.g_q2.size != self.g_q1.size + 1:
            raise ValueError("g_q2 must have one more entry than g_q1")

    def flat(self) -> np.ndarray:
        return np.concatenate([self.g_q1, self.g_q2])

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.g_q1)), np.max(np.abs(self.g_q2))))

    def dot(self, traj_like: Tuple[np.ndarray, np.ndarray]) -> float:
        """Pairing with a direction given as full nodal arrays (slot q1[0] ignored)."""
        v1, v2 = traj_like
        return float(np.dot(self.g_q1, v1[1:]) + np.dot(self.g_q2, v2))


def evaluate(ctx: ActionContext, traj: Trajectory, grad: bool = True):
    """Return ``(value, GradientVector or None)``."""
    ctx.check(traj)
    vals, G1, G2 = _backend.action_batch(ctx.sp, ctx.mu, ctx.dt, traj.q1[None, :],
                                         traj.q2[None, :], [traj.pinned], grad)
    if not grad:
        return float(vals[0]), None
    return float(vals[0]), GradientVector(G1[0, 1:].copy(), G2[0].copy())


def action_value(ctx: ActionContext, traj: Trajectory) -> float:
    """Discrete action of ``traj``; raises :class:`DomainError` if any gap <= 0."""
    return evaluate(ctx, traj, grad=False)[0]


def action_gradient(ctx: ActionContext, traj: Trajectory) -> GradientVector:
    """Exact gradient of :func:`action_value` with respect to the free nodal values."""
    return evaluate(ctx, traj, grad=True)[1]


def batch_evaluate(ctx: ActionContext, Q1: np.ndarray, Q2: np.ndarray, grad: bool = True):
    """Action values (and full nodal gradients) for stacked trajectories.

    Rows with ``Q1[:, 0] == 0`` use the pinned convention.  Raises
    :class:`DomainError` if any row leaves the admissible set.
    """
    Q1 = np.atleast_2d(Q1)
    Q2 = np.atleast_2d(Q2)
    if Q1.shape != Q2.shape or Q1.shape[1] != ctx.n + 1:
        raise ValueError("batch shape does not match the context grid")
    bad = ~(Q2 - Q1 > 0)
    if bad.any():
        r, i = np.argwhere(bad)[0]
        raise DomainError(f"row {r} left the admissible set at node {i}")
    return _backend.action_batch(ctx.sp, ctx.mu, ctx.dt, Q1, Q2, Q1[:, 0] == 0.0, grad)


def fd_check(ctx: ActionContext, traj: Trajectory, trials: int = 10,
             h: float = 1e-5, seed: int = 0) -> float:
    """Worst relative mismatch between the gradient and central differences.

    Directions are random unit vectors in the free coordinates (the q1[0]
    slot is always zero).  The relative error is measured against
    ``max(|analytic|, |fd|, |grad| / sqrt(N))``: the last term is the typical
    size of a directional derivative along a random unit vector in ``N``
    coordinates, so directions nearly orthogonal to the gradient do not
    inflate the ratio.
    """
    rng = np.random.default_rng(seed)
    _, g = evaluate(ctx, traj)
    gflat = g.flat()
    typical = float(np.linalg.norm(gflat)) / np.sqrt(gflat.size)
    worst = 0.0
    n = traj.n
    for _ in range(int(trials)):
        v = rng.standard_normal(2 * n + 1)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        v /= nv
        v1 = np.concatenate([[0.0], v[:n]])
        v2 = v[n:]
        plus = Trajectory(traj.T, traj.q1 + h * v1, traj.q2 + h * v2)
        minus = Trajectory(traj.T, traj.q1 - h * v1, traj.q2 - h * v2)
        fd = (action_value(ctx, plus) - action_value(ctx, minus)) / (2 * h)
        an = float(np.dot(gflat, v))
        den = max(abs(an), abs(fd), typical, 1e-300)
        worst = max(worst, float(abs(fd - an) / den))
    return worst


def homogeneity_pairing(ctx: ActionContext, traj: Trajectory) -> float:
    """The pairing ``dA(q)[q]`` with the q1[0] slot of the direction set to 0."""
    g = action_gradient(ctx, traj)
    return g.dot((traj.q1, traj.q2))


def pairing_margin(ctx: ActionContext, traj: Trajectory) -> float:
    """``dA(q)[q] - ((2 + alpha)/2 |q'|^2 - alpha A(q))``; nonnegative by homogeneity."""
    value, g = evaluate(ctx, traj)
    k2 = l2_norm_dot(traj) ** 2
    a = ctx.sp.alpha
    return g.dot((traj.q1, traj.q2)) - ((2.0 + a) / 2.0 * k2 - a * value)


def kinetic(traj: Trajectory) -> float:
    return 0.5 * l2_norm_dot(traj) ** 2
