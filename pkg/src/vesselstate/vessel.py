"""Rigid-body vessel model: kinematics, equations of motion and the LTI form.

State conventions
-----------------
Pose ``eta = (x, y, z, phi, theta, psi)`` lives in the global frame, twist
``nu = (u, v, w, p, q, r)`` in the body frame (origin at the centre of
gravity). All matrices use the index order above.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .errors import DomainError, NonInvertibleMassError, SingularityError

#: ``|cos(theta)|`` below this raises :class:`SingularityError` in J2.
SINGULARITY_TOL = 1e-6
#: Maximum accepted condition number of the assembled mass matrix.
MAX_MASS_CONDITION = 1e12

# Non-zero pattern of the linear damping matrix (row, col).
DAMPING_PATTERN = frozenset(
    [
        (0, 0),
        (1, 1), (1, 3), (1, 5),
        (2, 2), (2, 4),
        (3, 1), (3, 3), (3, 5),
        (4, 2), (4, 4),
        (5, 1), (5, 3), (5, 5),
    ]
)
_DAMPING_NAMES = {
    "X_u": (0, 0),
    "Y_v": (1, 1), "Y_p": (1, 3), "Y_r": (1, 5),
    "Z_w": (2, 2), "Z_q": (2, 4),
    "K_v": (3, 1), "K_p": (3, 3), "K_r": (3, 5),
    "M_w": (4, 2), "M_q": (4, 4),
    "N_v": (5, 1), "N_p": (5, 3), "N_r": (5, 5),
}


def wrap_angle(a):
    """Wrap angle(s) to the half-open interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def normalize_euler(phi: float, theta: float, psi: float) -> tuple[float, float, float]:
    """Return an equivalent angle triple with theta in [-pi/2, pi/2].

    Roll and yaw end up in (-pi, pi].
    """
    theta = float(wrap_angle(theta))
    if theta > math.pi / 2 or theta < -math.pi / 2:
        # (phi, theta, psi) and (phi + pi, pi - theta, psi + pi) are the same rotation
        phi, theta, psi = phi + math.pi, math.pi - theta, psi + math.pi
        theta = float(wrap_angle(theta))
    return float(wrap_angle(phi)), theta, float(wrap_angle(psi))


def _check_finite(name: str, values) -> None:
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{name} must be finite, got {values!r}")


@dataclass(frozen=True)
class EulerPose:
    """Global position (m) and intrinsic z-y-x Euler angles (rad)."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        _check_finite("EulerPose", [self.x, self.y, self.z, self.phi, self.theta, self.psi])
        phi, theta, psi = normalize_euler(self.phi, self.theta, self.psi)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def from_array(cls, eta: ArrayLike) -> EulerPose:
        return cls(*map(float, np.asarray(eta, dtype=float)[:6]))

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.x, self.y, self.z, self.phi, self.theta, self.psi])

    @property
    def position(self) -> NDArray[np.float64]:
        return np.array([self.x, self.y, self.z])

    @property
    def angles(self) -> NDArray[np.float64]:
        return np.array([self.phi, self.theta, self.psi])


@dataclass(frozen=True)
class BodyTwist:
    """Body-frame linear (m/s) and angular (rad/s) velocity."""

    u: float = 0.0
    v: float = 0.0
    w: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        _check_finite("BodyTwist", [self.u, self.v, self.w, self.p, self.q, self.r])

    @classmethod
    def from_array(cls, nu: ArrayLike) -> BodyTwist:
        return cls(*map(float, np.asarray(nu, dtype=float)[:6]))

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.u, self.v, self.w, self.p, self.q, self.r])


@dataclass(frozen=True)
class Wrench:
    """Body-frame forces (N) and torques (N m)."""

    tau_x: float = 0.0
    tau_y: float = 0.0
    tau_z: float = 0.0
    tau_phi: float = 0.0
    tau_theta: float = 0.0
    tau_psi: float = 0.0

    def __post_init__(self):
        _check_finite(
            "Wrench",
            [self.tau_x, self.tau_y, self.tau_z, self.tau_phi, self.tau_theta, self.tau_psi],
        )

    def as_array(self) -> NDArray[np.float64]:
        return np.array(
            [self.tau_x, self.tau_y, self.tau_z, self.tau_phi, self.tau_theta, self.tau_psi]
        )


def _frozen(a: ArrayLike, shape: tuple[int, ...], name: str) -> NDArray[np.float64]:
    arr = np.array(a, dtype=float)
    if arr.shape != shape:
        raise DomainError(f"{name} must have shape {shape}, got {arr.shape}")
    _check_finite(name, arr)
    arr.setflags(write=False)
    return arr


def damping_from_coefficients(**coeffs: float) -> NDArray[np.float64]:
    """Assemble the 6x6 linear damping matrix from named hydrodynamic derivatives.

    Accepted names are ``X_u, Y_v, Y_p, Y_r, Z_w, Z_q, K_v, K_p, K_r, M_w, M_q,
    N_v, N_p, N_r``; missing ones are zero.
    """
    D = np.zeros((6, 6))
    for name, value in coeffs.items():
        if name not in _DAMPING_NAMES:
            raise DomainError(f"unknown damping coefficient {name!r}")
        D[_DAMPING_NAMES[name]] = value
    return D


def restoring_matrix(Z_z: float, Z_theta: float, K_phi: float, M_z: float, M_theta: float):
    """Linear restoring matrix ``G`` so that ``g(eta) = G @ eta``."""
    G = np.zeros((6, 6))
    G[2, 2] = -Z_z
    G[2, 4] = -Z_theta
    G[3, 3] = -K_phi
    G[4, 2] = -M_z
    G[4, 4] = -M_theta
    return G


@dataclass(frozen=True)
class VesselParams:
    """Mass, added mass, damping and restoring coefficients of one vessel.

    The assembled mass matrix ``M = M_RB + M_A`` is checked for symmetry and
    positive definiteness and inverted once at construction.

    Parameters
    ----------
    mass : float
        Rigid-body mass in kg.
    inertia : (3, 3) array_like
        Body inertia tensor about the centre of gravity.
    added_mass : (6, 6) array_like
        Hydrodynamic added-mass coefficients, rows X..N, columns u_dot..r_dot.
    damping : (6, 6) array_like
        Linear damping matrix; only the entries in :data:`DAMPING_PATTERN`
        may be non-zero.
    Z_z, Z_theta, K_phi, M_z, M_theta : float
        Restoring coefficients. Negative ``Z_z``, ``K_phi`` and ``M_theta``
        give restoring (stable) heave, roll and pitch.
    """

    mass: float
    inertia: NDArray[np.float64]
    added_mass: NDArray[np.float64]
    damping: NDArray[np.float64]
    Z_z: float = 0.0
    Z_theta: float = 0.0
    K_phi: float = 0.0
    M_z: float = 0.0
    M_theta: float = 0.0
    _cho: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.mass) and self.mass > 0):
            raise DomainError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "inertia", _frozen(self.inertia, (3, 3), "inertia"))
        object.__setattr__(self, "added_mass", _frozen(self.added_mass, (6, 6), "added_mass"))
        object.__setattr__(self, "damping", _frozen(self.damping, (6, 6), "damping"))
        _check_finite("restoring", [self.Z_z, self.Z_theta, self.K_phi, self.M_z, self.M_theta])

        Ib = self.inertia
        if not np.allclose(Ib, Ib.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Ib).max())):
            raise DomainError("inertia matrix must be symmetric")
        if np.linalg.eigvalsh(Ib).min() <= 0:
            raise DomainError("inertia matrix must be positive definite")
        bad = [ij for ij in zip(*np.nonzero(self.damping)) if ij not in DAMPING_PATTERN]
        if bad:
            raise DomainError(f"damping matrix has entries outside the allowed pattern: {bad}")

        M = self.mass_matrix
        if not np.allclose(M, M.T, rtol=0, atol=1e-12 * np.abs(M).max()):
            raise NonInvertibleMassError("mass matrix M_RB + M_A is not symmetric")
        try:
            cho = linalg.cho_factor(M, lower=True)
        except linalg.LinAlgError as exc:
            raise NonInvertibleMassError("mass matrix is not positive definite") from exc
        if np.linalg.cond(M) > MAX_MASS_CONDITION:
            raise NonInvertibleMassError("mass matrix condition number exceeds 1e12")
        object.__setattr__(self, "_cho", cho)

    @cached_property
    def rigid_body_mass(self) -> NDArray[np.float64]:
        M = np.zeros((6, 6))
        M[:3, :3] = self.mass * np.eye(3)
        M[3:, 3:] = self.inertia
        return M

    @cached_property
    def mass_matrix(self) -> NDArray[np.float64]:
        M = self.rigid_body_mass + self.added_mass
        M.setflags(write=False)
        return M

    @cached_property
    def mass_inverse(self) -> NDArray[np.float64]:
        Minv = linalg.cho_solve(self._cho, np.eye(6))
        Minv = 0.5 * (Minv + Minv.T)
        Minv.setflags(write=False)
        return Minv

    @cached_property
    def restoring(self) -> NDArray[np.float64]:
        G = restoring_matrix(self.Z_z, self.Z_theta, self.K_phi, self.M_z, self.M_theta)
        G.setflags(write=False)
        return G


def default_vessel_params() -> VesselParams:
    """Desk-scale catamaran used by the reference scenario.

    Added mass is 10 % of the rigid-body terms. Restoring and damping give
    heave / roll / pitch natural periods of 3.0 / 2.5 / 3.5 s with a damping
    ratio of 0.15. These numbers are a reference configuration, not measured
    vessel data.
    """
    mass = 180.0
    inertia = np.diag([40.0, 90.0, 100.0])
    rigid = np.array([mass, mass, mass, 40.0, 90.0, 100.0])
    added = 0.1 * rigid
    total = rigid + added

    def stiffness(i, period):
        return total[i] * (2 * math.pi / period) ** 2

    def damp(i, period, zeta=0.15):
        return 2 * zeta * total[i] * (2 * math.pi / period)

    D = damping_from_coefficients(
        X_u=0.5 * total[0],
        Y_v=0.8 * total[1],
        Z_w=damp(2, 3.0),
        K_p=damp(3, 2.5),
        M_q=damp(4, 3.5),
        N_r=0.5 * total[5],
    )
    return VesselParams(
        mass=mass,
        inertia=inertia,
        added_mass=np.diag(added),
        damping=D,
        Z_z=-stiffness(2, 3.0),
        K_phi=-stiffness(3, 2.5),
        M_theta=-stiffness(4, 3.5),
    )


def _angles(angles) -> tuple[float, float, float]:
    if isinstance(angles, EulerPose):
        return angles.phi, angles.theta, angles.psi
    a = np.asarray(angles, dtype=float).ravel()
    if a.size == 6:
        a = a[3:]
    if a.size != 3:
        raise DomainError("expected three Euler angles")
    _check_finite("angles", a)
    return float(a[0]), float(a[1]), float(a[2])


def rot_x(a: float) -> NDArray[np.float64]:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> NDArray[np.float64]:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> NDArray[np.float64]:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_j1(angles) -> NDArray[np.float64]:
    """Body-to-global rotation ``R_z(psi) R_y(theta) R_x(phi)``.

    ``angles`` may be an :class:`EulerPose`, a 3-vector ``(phi, theta, psi)``
    or a full 6-vector pose.
    """
    phi, theta, psi = _angles(angles)
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cpsi * cth, -spsi * cphi + cpsi * sth * sphi, spsi * sphi + cpsi * cphi * sth],
            [spsi * cth, cpsi * cphi + sphi * sth * spsi, -cpsi * sphi + sth * spsi * cphi],
            [-sth, cth * sphi, cth * cphi],
        ]
    )


def angular_jacobian_j2(angles, tol: float = SINGULARITY_TOL) -> NDArray[np.float64]:
    """Map body rates ``(p, q, r)`` to Euler-angle rates.

    Raises
    ------
    SingularityError
        If ``|cos(theta)| < tol``.
    """
    phi, theta, _ = _angles(angles)
    cth = math.cos(theta)
    if abs(cth) < tol:
        raise SingularityError(f"Euler rate transform singular at theta={theta!r}")
    cphi, sphi = math.cos(phi), math.sin(phi)
    tth = math.sin(theta) / cth
    return np.array(
        [
            [1.0, sphi * tth, cphi * tth],
            [0.0, cphi, -sphi],
            [0.0, sphi / cth, cphi / cth],
        ]
    )


def kinematics(pose, twist) -> NDArray[np.float64]:
    """Pose derivative ``eta_dot = J(eta) nu`` (6-vector)."""
    eta = pose.as_array() if isinstance(pose, EulerPose) else np.asarray(pose, dtype=float)
    nu = twist.as_array() if isinstance(twist, BodyTwist) else np.asarray(twist, dtype=float)
    out = np.empty(6)
    out[:3] = rotation_j1(eta[3:6]) @ nu[:3]
    out[3:] = angular_jacobian_j2(eta[3:6]) @ nu[3:6]
    return out


def skew(a: ArrayLike) -> NDArray[np.float64]:
    """Cross-product matrix: ``skew(a) @ b == cross(a, b)``."""
    x, y, z = np.asarray(a, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rigid_body_coriolis(nu: ArrayLike, mass: float, inertia: ArrayLike) -> NDArray[np.float64]:
    """Rigid-body Coriolis/centripetal matrix with the CG at the body origin."""
    nu = np.asarray(nu, dtype=float)
    Sv = skew(nu[:3])
    C = np.zeros((6, 6))
    C[:3, 3:] = -mass * Sv
    C[3:, :3] = -mass * Sv
    C[3:, 3:] = -skew(np.asarray(inertia, dtype=float) @ nu[3:])
    return C


def added_mass_coriolis(nu: ArrayLike, added_mass: ArrayLike) -> NDArray[np.float64]:
    """Hydrodynamic Coriolis matrix built from ``C_k = (M_A @ nu)_k``."""
    c1, c2, c3, c4, c5, c6 = np.asarray(added_mass, dtype=float) @ np.asarray(nu, dtype=float)
    return np.array(
        [
            [0.0, 0.0, 0.0, 0.0, -c3, c2],
            [0.0, 0.0, 0.0, c3, 0.0, -c1],
            [0.0, 0.0, 0.0, -c2, c1, 0.0],
            [0.0, -c3, c2, 0.0, -c6, c5],
            [c3, 0.0, -c1, c6, 0.0, -c4],
            [-c2, c1, 0.0, -c5, c4, 0.0],
        ]
    )


def coriolis_matrix(twist, params: VesselParams) -> NDArray[np.float64]:
    """Total Coriolis/centripetal matrix ``C(nu) = C_RB(nu) + C_A(nu)``."""
    nu = twist.as_array() if isinstance(twist, BodyTwist) else np.asarray(twist, dtype=float)
    return rigid_body_coriolis(nu, params.mass, params.inertia) + added_mass_coriolis(
        nu, params.added_mass
    )


def twist_derivative(eta: ArrayLike, nu: ArrayLike, params: VesselParams, tau=None):
    """``nu_dot = M^-1 (tau - C(nu) nu - D nu - G eta)``."""
    eta = np.asarray(eta, dtype=float)
    nu = np.asarray(nu, dtype=float)
    rhs = -coriolis_matrix(nu, params) @ nu - params.damping @ nu - params.restoring @ eta
    if tau is not None:
        rhs = rhs + (tau.as_array() if isinstance(tau, Wrench) else np.asarray(tau, dtype=float))
    return params.mass_inverse @ rhs


def nonlinear_derivative(pose, twist, params: VesselParams, tau=None) -> NDArray[np.float64]:
    """12-vector ``(eta_dot, nu_dot)`` of the unforced nonlinear model."""
    eta = pose.as_array() if isinstance(pose, EulerPose) else np.asarray(pose, dtype=float)
    nu = twist.as_array() if isinstance(twist, BodyTwist) else np.asarray(twist, dtype=float)
    return np.concatenate([kinematics(eta, nu), twist_derivative(eta, nu, params, tau)])


def yaw_transform(psi: float) -> NDArray[np.float64]:
    """6x6 ``J_psi``: planar yaw rotation on position, identity on angles."""
    J = np.eye(6)
    J[:3, :3] = rot_z(psi)
    return J


def vessel_parallel(pose) -> NDArray[np.float64]:
    """Express a global pose in vessel-parallel coordinates ``J_psi^T eta``."""
    eta = pose.as_array() if isinstance(pose, EulerPose) else np.asarray(pose, dtype=float)
    return yaw_transform(eta[5]).T @ eta


def vessel_parallel_inverse(psi: float, eta_l: ArrayLike) -> NDArray[np.float64]:
    """Map vessel-parallel coordinates back to the global pose vector."""
    return yaw_transform(psi) @ np.asarray(eta_l, dtype=float)


def build_linear_system(params: VesselParams) -> NDArray[np.float64]:
    """12x12 LTI matrix ``[[0, I], [-M^-1 G, -M^-1 D]]`` in vessel-parallel form."""
    Minv = params.mass_inverse
    A = np.zeros((12, 12))
    A[:6, 6:] = np.eye(6)
    A[6:, :6] = -Minv @ params.restoring
    A[6:, 6:] = -Minv @ params.damping
    return A
