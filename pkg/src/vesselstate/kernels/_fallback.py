"""Pure numpy batch kernels for the wave-augmented nonlinear model.

Same contract as the compiled ``_ckernels`` module: states are rows of a
C-contiguous ``(k, n)`` float64 array and ``rk4_batch`` updates them in place.
"""
import numpy as np


def derivative_batch(X, minv, damping, restoring, added_mass, mass, inertia,
                     axis_of, gammas, tol):
    """Row-wise state derivative. Returns ``(dX, bad_row)``; ``bad_row`` is -1 if ok."""
    eta = X[:, :6]
    nu = X[:, 6:12]
    phi, th, psi = eta[:, 3], eta[:, 4], eta[:, 5]
    u, v, w, p, q, r = nu.T

    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(th), np.sin(th)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    bad = np.flatnonzero(np.abs(cth) < tol)
    if bad.size:
        return None, int(bad[0])

    out = np.empty_like(X)
    out[:, 0] = (cpsi * cth * u + (-spsi * cphi + cpsi * sth * sphi) * v
                 + (spsi * sphi + cpsi * cphi * sth) * w)
    out[:, 1] = (spsi * cth * u + (cpsi * cphi + sphi * sth * spsi) * v
                 + (-cpsi * sphi + sth * spsi * cphi) * w)
    out[:, 2] = -sth * u + cth * sphi * v + cth * cphi * w
    tth = sth / cth
    out[:, 3] = p + sphi * tth * q + cphi * tth * r
    out[:, 4] = cphi * q - sphi * r
    out[:, 5] = (sphi * q + cphi * r) / cth

    # rigid-body Coriolis: (m w x v, w x (Ib w))
    cnu = np.empty_like(nu)
    cnu[:, :3] = mass * np.cross(nu[:, 3:], nu[:, :3])
    cnu[:, 3:] = np.cross(nu[:, 3:], nu[:, 3:] @ inertia.T)
    # added-mass Coriolis
    c1, c2, c3, c4, c5, c6 = (nu @ added_mass.T).T
    cnu[:, 0] += -c3 * q + c2 * r
    cnu[:, 1] += c3 * p - c1 * r
    cnu[:, 2] += -c2 * p + c1 * q
    cnu[:, 3] += -c3 * v + c2 * w - c6 * q + c5 * r
    cnu[:, 4] += c3 * u - c1 * w + c6 * p - c4 * r
    cnu[:, 5] += -c2 * u + c1 * v - c5 * p + c4 * q

    rhs = -cnu - nu @ damping.T - eta @ restoring.T
    out[:, 6:12] = rhs @ minv.T

    if gammas.size:
        W = X[:, 12:].reshape(X.shape[0], -1, 3)
        dW = out[:, 12:].reshape(X.shape[0], -1, 3)
        dW[:, :, 0] = W[:, :, 1]
        dW[:, :, 1] = -W[:, :, 2] * np.sin(W[:, :, 0]) - gammas * W[:, :, 1]
        dW[:, :, 2] = 0.0
        for axis in range(6):
            sel = axis_of == axis
            if sel.any():
                out[:, 6 + axis] += W[:, sel, 1].sum(axis=1)
    return out, -1


def rk4_batch(X, dt, nsub, minv, damping, restoring, added_mass, mass, inertia,
              axis_of, gammas, tol):
    """Advance every row by ``nsub`` RK4 steps of size ``dt`` in place.

    Returns -1 on success or the index of the first row that hit the
    Euler-rate singularity.
    """
    args = (minv, damping, restoring, added_mass, mass, inertia, axis_of, gammas, tol)
    h2 = 0.5 * dt
    for _ in range(nsub):
        k1, bad = derivative_batch(X, *args)
        if bad >= 0:
            return bad
        k2, bad = derivative_batch(X + h2 * k1, *args)
        if bad >= 0:
            return bad
        k3, bad = derivative_batch(X + h2 * k2, *args)
        if bad >= 0:
            return bad
        k4, bad = derivative_batch(X + dt * k3, *args)
        if bad >= 0:
            return bad
        X += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return -1
