"""Independent reference computations shared by the unit and acceptance tests."""
import math

import numpy as np
from scipy import integrate


def chi2_cdf_by_quadrature(x, dof):
    """Chi-square CDF by adaptive quadrature of the density, written out independently."""
    a = dof / 2.0
    log_norm = -a * math.log(2.0) - math.lgamma(a)

    def pdf_u(u):
        # substitute x = u^2 to remove the endpoint singularity at x = 0
        return 2.0 * u * math.exp((a - 1.0) * math.log(u * u) - 0.5 * u * u + log_norm) if u > 0 else (
            2.0 * math.exp(log_norm) if dof == 1 else 0.0)

    mode = max(dof - 2.0, 0.0)
    pts = [math.sqrt(mode)] if 0 < mode < x else None
    val, _ = integrate.quad(pdf_u, 0.0, math.sqrt(x), points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def chi2_quantile_by_bisection(dof, p):
    lo, hi = 0.0, max(10.0, 10.0 * dof)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if chi2_cdf_by_quadrature(mid, dof) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def linear_structure(n_lc, A_vp, banks):
    """Assemble the augmented matrix block by block with explicit loops."""
    dim = 12 + 12 * n_lc
    A = np.zeros((dim, dim))
    A[:12, :12] = A_vp
    for axis, bank in enumerate(banks):
        for k, (w0, lam) in enumerate(bank):
            col = 12 + 2 * n_lc * axis + 2 * k
            A[6 + axis, col + 1] = 1.0
            A[col, col + 1] = 1.0
            A[col + 1, col] = -w0 ** 2
            A[col + 1, col + 1] = -2 * lam * w0
    return A
