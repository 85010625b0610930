"""Gridded trajectories, paths of trajectories and their file formats.

A trajectory is a piecewise-linear pair ``(q1, q2)`` sampled on the uniform
grid ``t_i = i T / n``.  The admissible set requires ``q1[0] == 0`` and
``q1 < q2`` at every node; trajectories outside it can still be represented
(limit objects touch its boundary), and evaluators check membership.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError

CSV_FMT = "%.17g"


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Nodal values of a piecewise-linear curve on ``[0, T]``.

    Parameters
    ----------
    T : float
        Half period.
    q1, q2 : array_like
        Nodal values, both of length ``n + 1``.
    """

    T: float
    q1: np.ndarray
    q2: np.ndarray

    def __post_init__(self):
        q1, q2 = _frozen(self.q1), _frozen(self.q2)
        if q1.ndim != 1 or q1.shape != q2.shape or q1.size < 2:
            raise ValueError("q1 and q2 must be 1-d arrays of equal length >= 2")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive, got {self.T}")
        if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(q2))):
            raise ValueError("trajectory values must be finite")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "q2", q2)

    @property
    def n(self) -> int:
        return self.q1.size - 1

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    @property
    def gap(self) -> np.ndarray:
        return self.q2 - self.q1

    @property
    def pinned(self) -> bool:
        """True when the first electron sits at the nucleus at ``t = 0``."""
        return self.q1[0] == 0.0

    @property
    def in_domain(self) -> bool:
        return bool(self.pinned and np.all(self.q2 > self.q1))

    def require_gap(self) -> None:
        """Raise :class:`DomainError` if any node has ``q2 <= q1``."""
        gap = self.q2 - self.q1
        if not np.all(gap > 0):
            i = int(np.argmax(~(gap > 0)))
            raise DomainError(f"trajectory left the admissible set: "
                              f"gap {gap[i]!r} at node {i}")

    def require_domain(self) -> None:
        if not self.pinned:
            raise DomainError(f"q1[0] must be 0, got {self.q1[0]!r}")
        self.require_gap()

    def stacked(self) -> np.ndarray:
        return np.vstack([self.q1, self.q2])

    def replace(self, q1=None, q2=None, T=None) -> "Trajectory":
        return Trajectory(self.T if T is None else T,
                          self.q1 if q1 is None else q1,
                          self.q2 if q2 is None else q2)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.T == other.T and np.array_equal(self.q1, other.q1)
                and np.array_equal(self.q2, other.q2))

    __hash__ = None

    @classmethod
    def constant(cls, T: float, n: int, c1: float, c2: float) -> "Trajectory":
        return cls(T, np.full(n + 1, float(c1)), np.full(n + 1, float(c2)))

    # file format
    def to_csv(self, path: str) -> None:
        data = np.column_stack([self.t, self.q1, self.q2])
        np.savetxt(path, data, delimiter=",", header="t,q1,q2", comments="", fmt=CSV_FMT)

    @classmethod
    def from_csv(cls, path: str) -> "Trajectory":
        with open(path) as fh:
            header = fh.readline().strip()
        if header != "t,q1,q2":
            raise ValueError(f"{path}: expected header 't,q1,q2', got {header!r}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(float(data[-1, 0]), data[:, 1], data[:, 2])


def l2_norm_dot(traj: Trajectory) -> float:
    """Exact L2 norm of the time derivative of the piecewise-linear interpolant."""
    d1 = np.diff(traj.q1)
    d2 = np.diff(traj.q2)
    return float(np.sqrt((np.dot(d1, d1) + np.dot(d2, d2)) / traj.dt))


def min_gap(traj: Trajectory) -> Tuple[float, int]:
    """Minimum of ``q2 - q1`` over the nodes and its first argmin."""
    gap = traj.q2 - traj.q1
    i = int(np.argmin(gap))
    return float(gap[i]), i


def refine(traj: Trajectory) -> Trajectory:
    """Nested subdivision to ``2n`` cells; old nodes keep their values."""
    def mid(q):
        out = np.empty(2 * q.size - 1)
        out[0::2] = q
        out[1::2] = 0.5 * (q[:-1] + q[1:])
        return out
    return Trajectory(traj.T, mid(traj.q1), mid(traj.q2))


def resample(traj: Trajectory, n: int) -> Trajectory:
    """Linear resampling onto an ``n``-cell grid of the same interval."""
    t_new = np.linspace(0.0, traj.T, n + 1)
    t = traj.t
    return Trajectory(traj.T, np.interp(t_new, t, traj.q1), np.interp(t_new, t, traj.q2))


def window_slice(n: int, T: float, lo: float, hi: Optional[float] = None) -> slice:
    """Node indices with ``lo <= t_i <= hi`` on the ``n``-cell grid.

    Bounds are rounded to the nearest node to avoid floating ties.
    """
    i0 = int(np.ceil(lo / T * n - 1e-9))
    i1 = n if hi is None else int(np.floor(hi / T * n + 1e-9))
    return slice(max(i0, 0), min(i1, n) + 1)


@dataclass(frozen=True, eq=False)
class PathOfTrajectories:
    """Ordered chain of trajectories with pinned first and last nodes."""

    nodes: Tuple[Trajectory, ...]

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(nodes) < 2:
            raise ValueError("a path needs at least two nodes")
        T, n = nodes[0].T, nodes[0].n
        for k, node in enumerate(nodes):
            if node.T != T or node.n != n:
                raise ValueError(f"node {k} does not share (T, n) = ({T}, {n})")
        object.__setattr__(self, "nodes", nodes)

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    @property
    def T(self) -> float:
        return self.nodes[0].T

    @property
    def n(self) -> int:
        return self.nodes[0].n

    @property
    def endpoint_lo(self) -> Trajectory:
        return self.nodes[0]

    @property
    def endpoint_hi(self) -> Trajectory:
        return self.nodes[-1]

    def require_domain(self) -> None:
        for k, node in enumerate(self.nodes):
            try:
                node.require_domain()
            except DomainError as exc:
                raise DomainError(f"path node {k}: {exc}") from None

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Stacked ``(M+1, n+1)`` arrays of q1 and q2."""
        return (np.vstack([nd.q1 for nd in self.nodes]),
                np.vstack([nd.q2 for nd in self.nodes]))

    @classmethod
    def from_arrays(cls, T: float, Q1: np.ndarray, Q2: np.ndarray,
                    keep: Optional[Sequence[Optional[Trajectory]]] = None):
        """Build a path; entries of ``keep`` that are not None are reused as is."""
        nodes = []
        for k in range(Q1.shape[0]):
            if keep is not None and keep[k] is not None:
                nodes.append(keep[k])
            else:
                nodes.append(Trajectory(T, Q1[k], Q2[k]))
        return cls(tuple(nodes))

    @classmethod
    def linear(cls, lo: Trajectory, hi: Trajectory, M: int) -> "PathOfTrajectories":
        """Straight segment from ``lo`` to ``hi`` with ``M + 1`` equispaced nodes."""
        s = np.linspace(0.0, 1.0, M + 1)
        nodes = [lo]
        for sk in s[1:-1]:
            nodes.append(Trajectory(lo.T, (1 - sk) * lo.q1 + sk * hi.q1,
                                    (1 - sk) * lo.q2 + sk * hi.q2))
        nodes.append(hi)
        return cls(tuple(nodes))

    # file format
    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        names = []
        for k, node in enumerate(self.nodes):
            name = f"node_{k:04d}.csv"
            node.to_csv(os.path.join(directory, name))
            names.append(name)
        manifest = {"order": names, "T": self.T, "n": self.n, "M": self.M}
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, directory: str) -> "PathOfTrajectories":
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        nodes = tuple(Trajectory.from_csv(os.path.join(directory, name))
                      for name in manifest["order"])
        path = cls(nodes)
        if path.M != manifest["M"] or path.n != manifest["n"]:
            raise ValueError(f"{directory}: manifest does not match node files")
        return path


def interp(path: PathOfTrajectories, s: float) -> Trajectory:
    """Piecewise-linear interpolation along the path parameter ``s`` in [0, 1]."""
    if not (0.0 <= s <= 1.0):
        raise DomainError(f"path parameter must lie in [0, 1], got {s}")
    if s == 0.0:
        return path.endpoint_lo
    if s == 1.0:
        return path.endpoint_hi
    x = s * path.M
    k = min(int(np.floor(x)), path.M - 1)
    w = x - k
    a, b = path.nodes[k], path.nodes[k + 1]
    if w == 0.0:
        return a
    return Trajectory(a.T, (1 - w) * a.q1 + w * b.q1, (1 - w) * a.q2 + w * b.q2)


def gap_profile(trajs: Iterable[Trajectory]) -> np.ndarray:
    return np.array([min_gap(tr)[0] for tr in trajs])
