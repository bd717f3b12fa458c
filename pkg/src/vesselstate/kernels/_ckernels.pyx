# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels for the wave-augmented nonlinear model.

Mirrors ``_fallback`` exactly; see that module for the contract.
"""
import numpy as np

from libc.math cimport cos, fabs, sin
from libc.stdlib cimport free, malloc


cdef struct Model:
    const double* minv
    const double* damping
    const double* restoring
    const double* added_mass
    double mass
    const double* inertia
    const long* axis_of
    const double* gammas
    Py_ssize_t ncomp
    double tol


cdef int _deriv(const double* x, double* out, const Model* m) noexcept nogil:
    cdef double phi = x[3], th = x[4], psi = x[5]
    cdef double u = x[6], v = x[7], w = x[8], p = x[9], q = x[10], r = x[11]
    cdef double cphi = cos(phi), sphi = sin(phi)
    cdef double cth = cos(th), sth = sin(th)
    cdef double cpsi = cos(psi), spsi = sin(psi)
    cdef double tth, c[6], nu[6], cnu[6], rhs[6], iw[3]
    cdef Py_ssize_t i, j, k
    cdef const double* wk

    if fabs(cth) < m.tol:
        return 1
    tth = sth / cth

    out[0] = (cpsi * cth * u + (-spsi * cphi + cpsi * sth * sphi) * v
              + (spsi * sphi + cpsi * cphi * sth) * w)
    out[1] = (spsi * cth * u + (cpsi * cphi + sphi * sth * spsi) * v
              + (-cpsi * sphi + sth * spsi * cphi) * w)
    out[2] = -sth * u + cth * sphi * v + cth * cphi * w
    out[3] = p + sphi * tth * q + cphi * tth * r
    out[4] = cphi * q - sphi * r
    out[5] = (sphi * q + cphi * r) / cth

    for i in range(6):
        nu[i] = x[6 + i]
    for i in range(3):
        iw[i] = (m.inertia[3 * i] * p + m.inertia[3 * i + 1] * q
                 + m.inertia[3 * i + 2] * r)
    # rigid-body Coriolis: (m w x v, w x (Ib w))
    cnu[0] = m.mass * (q * w - r * v)
    cnu[1] = m.mass * (r * u - p * w)
    cnu[2] = m.mass * (p * v - q * u)
    cnu[3] = q * iw[2] - r * iw[1]
    cnu[4] = r * iw[0] - p * iw[2]
    cnu[5] = p * iw[1] - q * iw[0]
    for i in range(6):
        c[i] = 0.0
        for j in range(6):
            c[i] += m.added_mass[6 * i + j] * nu[j]
    cnu[0] += -c[2] * q + c[1] * r
    cnu[1] += c[2] * p - c[0] * r
    cnu[2] += -c[1] * p + c[0] * q
    cnu[3] += -c[2] * v + c[1] * w - c[5] * q + c[4] * r
    cnu[4] += c[2] * u - c[0] * w + c[5] * p - c[3] * r
    cnu[5] += -c[1] * u + c[0] * v - c[4] * p + c[3] * q

    for i in range(6):
        rhs[i] = -cnu[i]
        for j in range(6):
            rhs[i] -= m.damping[6 * i + j] * nu[j] + m.restoring[6 * i + j] * x[j]
    for i in range(6):
        out[6 + i] = 0.0
        for j in range(6):
            out[6 + i] += m.minv[6 * i + j] * rhs[j]

    for k in range(m.ncomp):
        wk = x + 12 + 3 * k
        out[12 + 3 * k] = wk[1]
        out[13 + 3 * k] = -wk[2] * sin(wk[0]) - m.gammas[k] * wk[1]
        out[14 + 3 * k] = 0.0
        out[6 + m.axis_of[k]] += wk[1]
    return 0


cdef Model _model(const double[:, ::1] minv, const double[:, ::1] damping, const double[:, ::1] restoring,
                  const double[:, ::1] added_mass, double mass, const double[:, ::1] inertia,
                  const long[::1] axis_of, const double[::1] gammas, double tol):
    cdef Model m
    m.minv = &minv[0, 0]
    m.damping = &damping[0, 0]
    m.restoring = &restoring[0, 0]
    m.added_mass = &added_mass[0, 0]
    m.mass = mass
    m.inertia = &inertia[0, 0]
    m.ncomp = gammas.shape[0]
    m.axis_of = &axis_of[0] if m.ncomp > 0 else NULL
    m.gammas = &gammas[0] if m.ncomp > 0 else NULL
    m.tol = tol
    return m


def derivative_batch(double[:, ::1] X, minv, damping, restoring, added_mass,
                     double mass, inertia, axis_of, gammas, double tol):
    cdef Model m = _model(minv, damping, restoring, added_mass, mass, inertia,
                          axis_of, gammas, tol)
    cdef Py_ssize_t nrow = X.shape[0], i
    out_arr = np.empty((X.shape[0], X.shape[1]))
    cdef double[:, ::1] out = out_arr
    cdef int bad = -1
    with nogil:
        for i in range(nrow):
            if _deriv(&X[i, 0], &out[i, 0], &m):
                bad = <int>i
                break
    if bad >= 0:
        return None, bad
    return out_arr, -1


def rk4_batch(double[:, ::1] X, double dt, int nsub, minv, damping, restoring,
              added_mass, double mass, inertia, axis_of, gammas, double tol):
    cdef Model m = _model(minv, damping, restoring, added_mass, mass, inertia,
                          axis_of, gammas, tol)
    cdef Py_ssize_t nrow = X.shape[0], n = X.shape[1], i, j
    cdef int s, bad = -1
    cdef double h2 = 0.5 * dt, h6 = dt / 6.0
    cdef double* buf = <double*> malloc(5 * n * sizeof(double))
    cdef double *k1, *k2, *k3, *k4, *tmp, *x
    if buf == NULL:
        raise MemoryError()
    k1 = buf
    k2 = buf + n
    k3 = buf + 2 * n
    k4 = buf + 3 * n
    tmp = buf + 4 * n
    try:
        with nogil:
            for i in range(nrow):
                x = &X[i, 0]
                for s in range(nsub):
                    if _deriv(x, k1, &m):
                        bad = <int>i
                        break
                    for j in range(n):
                        tmp[j] = x[j] + h2 * k1[j]
                    if _deriv(tmp, k2, &m):
                        bad = <int>i
                        break
                    for j in range(n):
                        tmp[j] = x[j] + h2 * k2[j]
                    if _deriv(tmp, k3, &m):
                        bad = <int>i
                        break
                    for j in range(n):
                        tmp[j] = x[j] + dt * k3[j]
                    if _deriv(tmp, k4, &m):
                        bad = <int>i
                        break
                    for j in range(n):
                        x[j] += h6 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if bad >= 0:
                    break
    finally:
        free(buf)
    return bad
