"""Potential families, hypothesis validation and the regularized potentials.

A family is a pair ``(f, g)`` of positive, decreasing, convex functions on
``(0, inf)`` with analytic first and second derivatives.  ``f`` is the
nucleus attraction and ``g`` the electron repulsion.  The regularized
attraction ``f_eps`` replaces the singular part of ``f`` below ``eps1`` by a
tangent line on ``[0, eps1]`` and a parabola on ``[-eps1, 0]`` and is constant
further left.  The regularized repulsion is ``g_eps = g + psi / s**2`` with a
piecewise quadratic cutoff ``psi`` supported on ``s < eps2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from .errors import DomainError, EvaluationError

ArrayFn = Callable[[np.ndarray], np.ndarray]

HYPOTHESES = ("decay", "monotone_convex", "homogeneity", "mountain_pass")


def _as_out(x, like):
    """Return a Python float when the input was a scalar."""
    if np.ndim(like) == 0:
        return float(x)
    return x


@dataclass(frozen=True)
class PotentialFamily:
    """A pair of potentials with analytic derivatives.

    Parameters
    ----------
    f, df, d2f : callable
        Attraction and its first two derivatives, vectorized over arrays.
    g, dg, d2g : callable
        Repulsion and its first two derivatives.
    alpha : float
        Homogeneity exponent in ``s f' + alpha f >= 0`` and
        ``s g' + alpha g <= 0``.
    s_bar : float
        Witness point for ``0 < g(s_bar) < f(s_bar)``.
    kind : str
        Family name.  ``"power_law"`` families are evaluated by the compiled
        kernels when available.
    params : dict
        Named constants of the family.
    """

    f: ArrayFn
    df: ArrayFn
    d2f: ArrayFn
    g: ArrayFn
    dg: ArrayFn
    d2g: ArrayFn
    alpha: float
    s_bar: float
    kind: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def describe(self) -> dict:
        return {"name": self.kind, "params": dict(self.params),
                "alpha": float(self.alpha), "s_bar": float(self.s_bar)}

    @property
    def is_power_law(self) -> bool:
        return self.kind == "power_law"


def power_law(a: float = 2.0, alpha: float = 1.0, b: float = 1.0,
              beta: float = 1.0, s_bar: Optional[float] = None) -> PotentialFamily:
    """Family ``f(s) = a / s**alpha``, ``g(s) = b / s**beta``.

    When ``s_bar`` is omitted it is placed where ``g/f = 1/2`` (or at 1 when
    ``alpha == beta``, where the ratio is constant).
    """
    a, alpha, b, beta = float(a), float(alpha), float(b), float(beta)
    for name, v in (("a", a), ("alpha", alpha), ("b", b), ("beta", beta)):
        if not np.isfinite(v) or v <= 0:
            raise ValueError(f"power_law parameter {name} must be positive, got {v}")
    if s_bar is None:
        if alpha == beta:
            s_bar = 1.0
        else:
            s_bar = (a / (2.0 * b)) ** (1.0 / (alpha - beta))
    s_bar = float(s_bar)
    if not s_bar > 0:
        raise ValueError("s_bar must be positive")

    def f(s):
        return a * np.power(s, -alpha)

    def df(s):
        return -a * alpha * np.power(s, -alpha - 1.0)

    def d2f(s):
        return a * alpha * (alpha + 1.0) * np.power(s, -alpha - 2.0)

    def g(s):
        return b * np.power(s, -beta)

    def dg(s):
        return -b * beta * np.power(s, -beta - 1.0)

    def d2g(s):
        return b * beta * (beta + 1.0) * np.power(s, -beta - 2.0)

    return PotentialFamily(f, df, d2f, g, dg, d2g, alpha=alpha, s_bar=s_bar,
                           kind="power_law",
                           params={"a": a, "alpha": alpha, "b": b, "beta": beta})


def helium() -> PotentialFamily:
    """Collinear helium: ``f = 2/s``, ``g = 1/s``, ``alpha = 1``, ``s_bar = 1``."""
    return power_law(2.0, 1.0, 1.0, 1.0, s_bar=1.0)


_FAMILIES: Dict[str, Callable[..., PotentialFamily]] = {"power_law": power_law, "helium": helium}


def register_family(name: str, factory: Callable[..., PotentialFamily]) -> None:
    """Make a custom family constructible by name from run configurations."""
    _FAMILIES[name] = factory


def make_family(name: str, params: Optional[Mapping[str, float]] = None,
                **overrides) -> PotentialFamily:
    """Build a registered family from its name and keyword parameters."""
    try:
        factory = _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown potential family {name!r}; "
                         f"known: {sorted(_FAMILIES)}") from None
    kw = dict(params or {})
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return factory(**kw)


# --- hypothesis validation -------------------------------------------------

@dataclass(frozen=True)
class HypothesisCheck:
    passed: bool
    worst_s: float
    worst_margin: float
    detail: str = ""


@dataclass(frozen=True)
class HypothesisReport:
    checks: Dict[str, HypothesisCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self):
        return [k for k, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": {k: {"passed": c.passed, "worst_s": c.worst_s,
                               "worst_margin": c.worst_margin, "detail": c.detail}
                           for k, c in self.checks.items()}}


def _evaluate(fn: ArrayFn, s: np.ndarray, label: str) -> np.ndarray:
    with np.errstate(all="ignore"):
        v = np.asarray(fn(s), dtype=float)
    v = np.broadcast_to(v, s.shape)
    bad = ~np.isfinite(v)
    if bad.any():
        raise EvaluationError(f"{label} is not finite at s={s[np.argmax(bad)]!r}")
    return v


def _worst(margins: np.ndarray, s: np.ndarray):
    k = int(np.argmin(margins))
    return float(s[k]), float(margins[k])


DECAY_SPAN = 1e6
DECAY_TOL = 1e-8
DECAY_SLOPE = 1e-2


def validate_hypotheses(family: PotentialFamily, grid) -> HypothesisReport:
    """Check the structural hypotheses on sampled points.

    Parameters
    ----------
    family : PotentialFamily
    grid : sequence of float
        Nonempty, strictly positive and increasing sample points.

    Returns
    -------
    HypothesisReport
        One entry per hypothesis: ``decay`` (f, f', g, g' vanish at
        infinity), ``monotone_convex`` (f, g, -f', -g', f'', g'' >= 0),
        ``homogeneity`` (alpha in (0, 2) and the two Euler-type
        inequalities) and ``mountain_pass`` (0 < g(s_bar) < f(s_bar)).
    """
    s = np.asarray(grid, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("grid must be nonempty")
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise ValueError("grid must be strictly positive")
    if np.any(np.diff(s) <= 0):
        raise ValueError("grid must be strictly increasing")

    fam = family
    vals = {name: _evaluate(getattr(fam, name), s, name)
            for name in ("f", "df", "d2f", "g", "dg", "d2g")}
    checks: Dict[str, HypothesisCheck] = {}

    # Decay: monotone decrease of |v| on a geometric grid out to
    # DECAY_SPAN * s_bar, ending either below DECAY_TOL or with a
    # log-log slope bounded away from zero over the last decade.
    far = np.geomspace(fam.s_bar, DECAY_SPAN * fam.s_bar, 121)
    worst = (float(far[0]), np.inf)
    ok = True
    notes = []
    for name in ("f", "df", "g", "dg"):
        v = np.abs(_evaluate(getattr(fam, name), far, name))
        dv = np.diff(v)
        mono = dv <= 1e-14 * v[:-1]
        if not mono.all():
            k = int(np.argmin(mono))
            ok = False
            notes.append(f"|{name}| increases near s={far[k]:.6g}")
            worst = min(worst, (float(far[k]), float(-dv[k])), key=lambda t: t[1])
            continue
        tail = v[-1]
        if tail < DECAY_TOL:
            margin = DECAY_TOL - tail
        else:
            if v[-21] > 0 and tail > 0:
                slope = np.log(tail / v[-21]) / np.log(far[-1] / far[-21])
            else:
                slope = 0.0
            margin = -DECAY_SLOPE - slope
            if margin < 0:
                ok = False
                notes.append(f"|{name}| does not decay (tail slope {slope:.3g})")
        worst = min(worst, (float(far[-1]), float(margin)), key=lambda t: t[1])
    checks["decay"] = HypothesisCheck(ok, worst[0], worst[1], "; ".join(notes))

    stack = np.vstack([vals["f"], vals["g"], -vals["df"], -vals["dg"],
                       vals["d2f"], vals["d2g"]])
    m = stack.min(axis=0)
    ws, wm = _worst(m, s)
    checks["monotone_convex"] = HypothesisCheck(bool(wm >= 0), ws, wm)

    alpha = float(fam.alpha)
    mf = s * vals["df"] + alpha * vals["f"]
    mg = -(s * vals["dg"] + alpha * vals["g"])
    sf = np.abs(s * vals["df"]) + alpha * np.abs(vals["f"])
    sg = np.abs(s * vals["dg"]) + alpha * np.abs(vals["g"])
    with np.errstate(all="ignore"):
        rel = np.minimum(np.where(sf > 0, mf / sf, mf), np.where(sg > 0, mg / sg, mg))
    ws, wm = _worst(rel, s)
    in_range = 0.0 < alpha < 2.0
    detail = "" if in_range else f"alpha={alpha} outside (0, 2)"
    if not in_range:
        # distance outside the open interval; 0 on its boundary
        wm = min(wm, -max(-alpha, alpha - 2.0, 0.0))
    checks["homogeneity"] = HypothesisCheck(bool(in_range and rel.min() >= -1e-12),
                                            ws, float(wm), detail)

    sb = np.array([fam.s_bar])
    fb = float(_evaluate(fam.f, sb, "f")[0])
    gb = float(_evaluate(fam.g, sb, "g")[0])
    mp = min(gb, fb - gb)
    checks["mountain_pass"] = HypothesisCheck(bool(gb > 0 and gb < fb), float(fam.s_bar), mp)
    return HypothesisReport(checks)


# --- cutoff and regularized potentials ---------------------------------------

def psi(eps2: float, s):
    """Cutoff: 1 left of ``-eps2``, 0 right of ``eps2``, C^1 piecewise quadratic."""
    if not eps2 > 0:
        raise ValueError("eps2 must be positive")
    x = np.asarray(s, dtype=float)
    u = x / eps2
    out = np.where(x <= -eps2, 1.0,
                   np.where(x <= 0.0, 1.0 - 0.5 * (1.0 + u) ** 2,
                            np.where(x < eps2, 0.5 * (1.0 - u) ** 2, 0.0)))
    return _as_out(out, s)


def dpsi(eps2: float, s):
    x = np.asarray(s, dtype=float)
    u = x / eps2
    out = np.where(x <= -eps2, 0.0,
                   np.where(x <= 0.0, -(1.0 + u) / eps2,
                            np.where(x < eps2, -(1.0 - u) / eps2, 0.0)))
    return _as_out(out, s)


def d2psi(eps2: float, s):
    x = np.asarray(s, dtype=float)
    c = 1.0 / eps2 ** 2
    out = np.where(x < -eps2, 0.0,
                   np.where(x < 0.0, -c, np.where(x < eps2, c, 0.0)))
    return _as_out(out, s)


@dataclass(frozen=True)
class SmoothedPotentials:
    """A family together with its regularization radii ``eps1`` and ``eps2``."""

    family: PotentialFamily
    eps1: float
    eps2: float

    def __post_init__(self):
        for name in ("eps1", "eps2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        e = float(self.eps1)
        fe = float(self.family.f(np.float64(e)))
        dfe = float(self.family.df(np.float64(e)))
        if not (np.isfinite(fe) and np.isfinite(dfe)):
            raise EvaluationError(f"f or f' not finite at eps1={e!r}")
        object.__setattr__(self, "_fe", fe)
        object.__setattr__(self, "_dfe", dfe)

    @property
    def alpha(self) -> float:
        return self.family.alpha

    def with_eps(self, eps1: float, eps2: float) -> "SmoothedPotentials":
        return SmoothedPotentials(self.family, eps1, eps2)

    def kernel_params(self):
        """``(a, alpha, b, beta, eps1, eps2)`` for power laws, else ``None``."""
        if not self.family.is_power_law:
            return None
        p = self.family.params
        return (p["a"], p["alpha"], p["b"], p["beta"], float(self.eps1), float(self.eps2))

    # attraction
    def f_eps(self, s):
        x = np.asarray(s, dtype=float)
        e, fe, dfe = self.eps1, self._fe, self._dfe
        with np.errstate(all="ignore"):
            far = self.family.f(np.maximum(x, e))
        out = np.where(x >= e, far,
                       np.where(x >= 0.0, fe + dfe * (x - e),
                                np.where(x >= -e, fe - dfe * e + dfe * x + dfe / (2 * e) * x * x,
                                         fe - 1.5 * dfe * e)))
        return _as_out(out, s)

    def df_eps(self, s):
        x = np.asarray(s, dtype=float)
        e, dfe = self.eps1, self._dfe
        with np.errstate(all="ignore"):
            far = self.family.df(np.maximum(x, e))
        out = np.where(x >= e, far,
                       np.where(x >= 0.0, dfe,
                                np.where(x >= -e, dfe + dfe / e * x, 0.0)))
        return _as_out(out, s)

    def d2f_eps(self, s):
        x = np.asarray(s, dtype=float)
        e, dfe = self.eps1, self._dfe
        with np.errstate(all="ignore"):
            far = self.family.d2f(np.maximum(x, e))
        out = np.where(x >= e, far,
                       np.where(x >= 0.0, 0.0, np.where(x >= -e, dfe / e, 0.0)))
        return _as_out(out, s)

    # repulsion
    def _check_positive(self, x):
        if np.any(~(x > 0)):
            bad = x[~(x > 0)] if x.ndim else x
            raise DomainError(f"g_eps requires s > 0, got {np.ravel(bad)[0]!r}")

    def g_eps(self, s):
        x = np.asarray(s, dtype=float)
        self._check_positive(x)
        p = psi(self.eps2, x)
        out = self.family.g(x) + p / (x * x)
        return _as_out(out, s)

    def dg_eps(self, s):
        x = np.asarray(s, dtype=float)
        self._check_positive(x)
        p, dp = psi(self.eps2, x), dpsi(self.eps2, x)
        out = self.family.dg(x) + dp / x ** 2 - 2.0 * p / x ** 3
        return _as_out(out, s)

    def d2g_eps(self, s):
        x = np.asarray(s, dtype=float)
        self._check_positive(x)
        p, dp, d2p = psi(self.eps2, x), dpsi(self.eps2, x), d2psi(self.eps2, x)
        out = self.family.d2g(x) + d2p / x ** 2 - 4.0 * dp / x ** 3 + 6.0 * p / x ** 4
        return _as_out(out, s)


def f_eps(sp: SmoothedPotentials, s):
    """Regularized attraction, total on the real line."""
    return sp.f_eps(s)


def f_eps_prime(sp: SmoothedPotentials, s):
    return sp.df_eps(s)


def g_eps(sp: SmoothedPotentials, s):
    """Regularized repulsion ``g(s) + psi(s)/s**2`` for ``s > 0``."""
    return sp.g_eps(s)


def g_eps_prime(sp: SmoothedPotentials, s):
    return sp.dg_eps(s)


def cutoff_homogeneity_range(sp: SmoothedPotentials, grid, tol: float = 1e-12):
    """Largest sampled ``s`` up to which ``s g_eps' + alpha g_eps <= 0`` holds.

    The inequality is checked in relative form on every grid point not
    exceeding the returned value.  Returns ``(s_max, margins)`` where
    ``margins`` are the normalized values ``-(s g_eps' + alpha g_eps)/scale``;
    ``s_max`` is ``None`` if the first grid point already violates it.
    """
    s = np.asarray(grid, dtype=float).ravel()
    if s.size == 0 or np.any(s <= 0) or np.any(np.diff(s) <= 0):
        raise ValueError("grid must be nonempty, positive and increasing")
    a = sp.alpha
    dg = sp.dg_eps(s)
    gv = sp.g_eps(s)
    scale = np.abs(s * dg) + a * np.abs(gv)
    margins = -(s * dg + a * gv) / np.where(scale > 0, scale, 1.0)
    ok = margins >= -tol
    if not ok[0]:
        return None, margins
    if ok.all():
        return float(s[-1]), margins
    return float(s[int(np.argmin(ok)) - 1]), margins
