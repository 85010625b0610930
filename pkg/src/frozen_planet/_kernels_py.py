"""Numpy implementation of the discrete action kernels.

Works for any potential family through the evaluators of
:class:`~frozen_planet.potentials.SmoothedPotentials`.  The compiled module
``_kernels`` provides the same entry points for power-law families.
"""

import numpy as np


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    return w


def action_batch(sp, mu, dt, Q1, Q2, pinned, grad=True):
    """Discrete action (and nodal gradient) for a stack of trajectories.

    Parameters
    ----------
    sp : SmoothedPotentials
    mu : float
    dt : float
    Q1, Q2 : ndarray, shape (m, n+1)
    pinned : ndarray of bool, shape (m,)
        Rows whose ``q1[0]`` term is omitted from the potential sum.
    grad : bool

    Returns
    -------
    values : ndarray (m,)
    G1, G2 : ndarray (m, n+1) or None
        Derivatives with respect to every nodal value.
    """
    Q1 = np.atleast_2d(Q1)
    Q2 = np.atleast_2d(Q2)
    m, n1 = Q1.shape
    w = trapezoid_weights(n1 - 1)
    W1 = np.broadcast_to(w, (m, n1)).copy()
    W1[np.asarray(pinned, dtype=bool), 0] = 0.0
    D1 = np.diff(Q1, axis=1)
    D2 = np.diff(Q2, axis=1)
    gap = Q2 - Q1
    kin = 0.5 / dt * (np.sum(D1 * D1, axis=1) + np.sum(D2 * D2, axis=1))
    fq1 = sp.f_eps(Q1)
    fq2 = sp.f_eps(Q2)
    gg = sp.g_eps(gap)
    pot = dt * (np.sum(W1 * fq1, axis=1) + np.sum(w * (fq2 - mu * gg), axis=1))
    values = kin + pot
    if not grad:
        return values, None, None
    dgg = sp.dg_eps(gap)
    G1 = dt * w * (sp.df_eps(Q1) + mu * dgg)
    G2 = dt * w * (sp.df_eps(Q2) - mu * dgg)
    for G, D in ((G1, D1), (G2, D2)):
        G[:, :-1] -= D / dt
        G[:, 1:] += D / dt
    return values, G1, G2


def hessian_diagonals(sp, mu, dt, q1, q2):
    """Weighted second derivatives of the potential part at each node.

    Returns ``(d11, d22, d12)`` with ``d11 = dt w (f''(q1) - mu g'')``,
    ``d22 = dt w (f''(q2) - mu g'')`` and ``d12 = dt w mu g''``.
    """
    w = dt * trapezoid_weights(q1.size - 1)
    gap = q2 - q1
    d2g = mu * sp.d2g_eps(gap)
    return (w * (sp.d2f_eps(q1) - d2g), w * (sp.d2f_eps(q2) - d2g), w * d2g)
