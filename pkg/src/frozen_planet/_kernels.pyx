# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled action kernels for power-law families.

Mirrors ``_kernels_py`` with the potentials ``f = a/s**alpha`` and
``g = b/s**beta`` inlined.  Loops release the GIL so callers may split
rows across threads.
"""

import numpy as np
from libc.math cimport pow


cdef struct Fam:
    double a
    double alpha
    double b
    double beta
    double e1
    double e2
    double fe
    double dfe


cdef Fam make_fam(double a, double alpha, double b, double beta,
                  double e1, double e2):
    cdef Fam p
    p.a = a
    p.alpha = alpha
    p.b = b
    p.beta = beta
    p.e1 = e1
    p.e2 = e2
    p.fe = a * pow(e1, -alpha)
    p.dfe = -a * alpha * pow(e1, -alpha - 1.0)
    return p


cdef inline double spow(double s, double e) noexcept nogil:
    # libm pow is the bottleneck; small negative integer exponents cover alpha = beta = 1
    if e == -1.0:
        return 1.0 / s
    if e == -2.0:
        return 1.0 / (s * s)
    if e == -3.0:
        return 1.0 / (s * s * s)
    return pow(s, e)


cdef inline double f_eps(const Fam* p, double s) noexcept nogil:
    if s >= p.e1:
        return p.a * spow(s, -p.alpha)
    if s >= 0.0:
        return p.fe + p.dfe * (s - p.e1)
    if s >= -p.e1:
        return p.fe - p.dfe * p.e1 + p.dfe * s + p.dfe / (2.0 * p.e1) * s * s
    return p.fe - 1.5 * p.dfe * p.e1


cdef inline double df_eps(const Fam* p, double s) noexcept nogil:
    if s >= p.e1:
        return -p.a * p.alpha * spow(s, -p.alpha - 1.0)
    if s >= 0.0:
        return p.dfe
    if s >= -p.e1:
        return p.dfe + p.dfe / p.e1 * s
    return 0.0


cdef inline double d2f_eps(const Fam* p, double s) noexcept nogil:
    if s >= p.e1:
        return p.a * p.alpha * (p.alpha + 1.0) * spow(s, -p.alpha - 2.0)
    if s >= 0.0:
        return 0.0
    if s >= -p.e1:
        return p.dfe / p.e1
    return 0.0


cdef inline void psi3(double e, double s, double* v, double* d, double* dd) noexcept nogil:
    cdef double u = s / e
    if s <= -e:
        v[0] = 1.0
        d[0] = 0.0
        dd[0] = 0.0
    elif s <= 0.0:
        v[0] = 1.0 - 0.5 * (1.0 + u) * (1.0 + u)
        d[0] = -(1.0 + u) / e
        dd[0] = -1.0 / (e * e)
    elif s < e:
        v[0] = 0.5 * (1.0 - u) * (1.0 - u)
        d[0] = -(1.0 - u) / e
        dd[0] = 1.0 / (e * e)
    else:
        v[0] = 0.0
        d[0] = 0.0
        dd[0] = 0.0


cdef inline double g_eps(const Fam* p, double s) noexcept nogil:
    cdef double v, d, dd
    cdef double out = p.b * spow(s, -p.beta)
    if s < p.e2:
        psi3(p.e2, s, &v, &d, &dd)
        out += v / (s * s)
    return out


cdef inline double dg_eps(const Fam* p, double s) noexcept nogil:
    cdef double v, d, dd
    cdef double out = -p.b * p.beta * spow(s, -p.beta - 1.0)
    if s < p.e2:
        psi3(p.e2, s, &v, &d, &dd)
        out += d / (s * s) - 2.0 * v / (s * s * s)
    return out


cdef inline double d2g_eps(const Fam* p, double s) noexcept nogil:
    cdef double v, d, dd
    cdef double s2 = s * s
    cdef double out = p.b * p.beta * (p.beta + 1.0) * spow(s, -p.beta - 2.0)
    if s < p.e2:
        psi3(p.e2, s, &v, &d, &dd)
        out += dd / s2 - 4.0 * d / (s2 * s) + 6.0 * v / (s2 * s2)
    return out


def action_batch(params, double mu, double dt, Q1, Q2, pinned, bint grad=True):
    """Compiled counterpart of ``_kernels_py.action_batch``.

    ``params`` is ``(a, alpha, b, beta, eps1, eps2)``.
    """
    cdef const double[:, ::1] q1 = np.ascontiguousarray(np.atleast_2d(Q1), dtype=np.float64)
    cdef const double[:, ::1] q2 = np.ascontiguousarray(np.atleast_2d(Q2), dtype=np.float64)
    cdef const unsigned char[::1] pin = np.ascontiguousarray(pinned, dtype=np.uint8)
    cdef Py_ssize_t m = q1.shape[0], n1 = q1.shape[1]
    values_arr = np.empty(m)
    cdef double[::1] values = values_arr
    G1_arr = np.zeros((m, n1)) if grad else None
    G2_arr = np.zeros((m, n1)) if grad else None
    cdef double[:, ::1] g1
    cdef double[:, ::1] g2
    if grad:
        g1 = G1_arr
        g2 = G2_arr
    cdef Fam p = make_fam(params[0], params[1], params[2], params[3],
                          params[4], params[5])
    cdef Py_ssize_t r, i
    cdef double kin, pot, d, w, s, dg, idt = 1.0 / dt
    with nogil:
        for r in range(m):
            kin = 0.0
            for i in range(n1 - 1):
                d = q1[r, i + 1] - q1[r, i]
                kin = kin + d * d
                d = q2[r, i + 1] - q2[r, i]
                kin = kin + d * d
            pot = 0.0
            for i in range(n1):
                w = 0.5 if (i == 0 or i == n1 - 1) else 1.0
                s = q2[r, i] - q1[r, i]
                if not (i == 0 and pin[r]):
                    pot = pot + w * f_eps(&p, q1[r, i])
                pot = pot + w * (f_eps(&p, q2[r, i]) - mu * g_eps(&p, s))
                if grad:
                    dg = dg_eps(&p, s)
                    g1[r, i] = dt * w * (df_eps(&p, q1[r, i]) + mu * dg)
                    g2[r, i] = dt * w * (df_eps(&p, q2[r, i]) - mu * dg)
            values[r] = 0.5 * idt * kin + dt * pot
            if grad:
                for i in range(n1 - 1):
                    d = (q1[r, i + 1] - q1[r, i]) * idt
                    g1[r, i] -= d
                    g1[r, i + 1] += d
                    d = (q2[r, i + 1] - q2[r, i]) * idt
                    g2[r, i] -= d
                    g2[r, i + 1] += d
    return values_arr, G1_arr, G2_arr


def hessian_diagonals(params, double mu, double dt, q1_in, q2_in):
    """Compiled counterpart of ``_kernels_py.hessian_diagonals``."""
    cdef const double[::1] q1 = np.ascontiguousarray(q1_in, dtype=np.float64)
    cdef const double[::1] q2 = np.ascontiguousarray(q2_in, dtype=np.float64)
    cdef Py_ssize_t n1 = q1.shape[0], i
    d11_arr = np.empty(n1)
    d22_arr = np.empty(n1)
    d12_arr = np.empty(n1)
    cdef double[::1] d11 = d11_arr
    cdef double[::1] d22 = d22_arr
    cdef double[::1] d12 = d12_arr
    cdef Fam p = make_fam(params[0], params[1], params[2], params[3],
                          params[4], params[5])
    cdef double w, c
    with nogil:
        for i in range(n1):
            w = dt * (0.5 if (i == 0 or i == n1 - 1) else 1.0)
            c = mu * d2g_eps(&p, q2[i] - q1[i])
            d11[i] = w * (d2f_eps(&p, q1[i]) - c)
            d22[i] = w * (d2f_eps(&p, q2[i]) - c)
            d12[i] = w * c
    return d11_arr, d22_arr, d12_arr
