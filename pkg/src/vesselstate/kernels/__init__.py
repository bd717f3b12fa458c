"""Hot loops of the nonlinear model, compiled when available.

The Cython extension ``_ckernels`` is used if it imports; otherwise the numpy
implementation in ``_fallback`` is selected. Set ``VESSELSTATE_PURE_PYTHON=1``
to force the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..errors import SingularityError
from ..vessel import SINGULARITY_TOL, VesselParams
from ..waves import NonlinearLayout
from . import _fallback

_compiled = None
if os.environ.get("VESSELSTATE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["cython"] = _compiled
BACKEND = "cython" if _compiled is not None else "python"


@dataclass(frozen=True)
class KernelModel:
    """Flat arrays of the wave-augmented model in the layout kernels expect."""

    minv: np.ndarray
    damping: np.ndarray
    restoring: np.ndarray
    added_mass: np.ndarray
    mass: float
    inertia: np.ndarray
    axis_of: np.ndarray
    gammas: np.ndarray
    dim: int
    tol: float = SINGULARITY_TOL

    @classmethod
    def from_params(cls, params: VesselParams, layout: NonlinearLayout,
                    tol: float = SINGULARITY_TOL) -> KernelModel:
        def c(a):
            return np.ascontiguousarray(a, dtype=np.float64)

        axis_of = np.repeat(np.arange(6), layout.counts).astype(np.int64)
        return cls(
            minv=c(params.mass_inverse),
            damping=c(params.damping),
            restoring=c(params.restoring),
            added_mass=c(params.added_mass),
            mass=float(params.mass),
            inertia=c(params.inertia),
            axis_of=np.ascontiguousarray(axis_of),
            gammas=c(layout.gammas),
            dim=layout.dim,
            tol=tol,
        )

    def args(self):
        return (self.minv, self.damping, self.restoring, self.added_mass, self.mass,
                self.inertia, self.axis_of, self.gammas, self.tol)


def _impl(backend):
    return BACKENDS[backend or BACKEND]


def _as_batch(X, dim):
    X = np.array(X, dtype=np.float64, order="C", ndmin=2)
    if X.shape[1] != dim:
        raise ValueError(f"state dimension {X.shape[1]} does not match model dimension {dim}")
    return X


def derivative_batch(X, model: KernelModel, backend: str | None = None) -> np.ndarray:
    """Derivative of each row of ``X``; raises :class:`SingularityError`."""
    X = _as_batch(X, model.dim)
    out, bad = _impl(backend).derivative_batch(X, *model.args())
    if bad >= 0:
        raise SingularityError(f"Euler rate transform singular at theta={X[bad, 4]!r}")
    return out


def rk4_batch(X, dt: float, model: KernelModel, nsub: int = 1,
              backend: str | None = None) -> np.ndarray:
    """Return a copy of ``X`` advanced by ``nsub`` RK4 steps of ``dt``."""
    X = _as_batch(X, model.dim)
    start = X.copy()
    bad = _impl(backend).rk4_batch(X, float(dt), int(nsub), *model.args())
    if bad >= 0:
        raise SingularityError(f"Euler rate transform singular near theta={start[bad, 4]!r}")
    return X
