"""Gaussian belief propagation for the nonlinear and linear vessel models.

The unscented filter works on batches: sigma points are rows of a 2-D array
and a model either exposes ``propagate(X, dt)`` or is a derivative callable
accepting such a batch. The linear filter uses a discrete transition obtained
from one RK4 step of the continuous model, so both filters share the same
discretization and agree exactly on linear problems.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .errors import CovarianceNotPDError, DimensionMismatchError, DomainError
from .validation import InnovationRecord
from .vessel import wrap_angle

POSE_ANGLES = (3, 4, 5)
PSD_RTOL = 1e-9
JITTER_START = 1e-12
JITTER_ATTEMPTS = 3


def _symmetrize(P: NDArray[np.float64]) -> NDArray[np.float64]:
    return 0.5 * (P + P.T)


def _check_psd(P, name="covariance", rtol=PSD_RTOL):
    """Raise unless the smallest eigenvalue of ``P`` is at least ``-rtol * trace(P)``.

    Implemented as a Cholesky factorization of the shifted matrix, which is
    an order of magnitude cheaper than an eigendecomposition.
    """
    if P.size == 0:
        return
    shift = rtol * max(np.trace(P), np.finfo(float).tiny)
    try:
        linalg.cholesky(P + shift * np.eye(P.shape[0]), lower=True, check_finite=False)
    except linalg.LinAlgError:
        w = linalg.eigvalsh(P)
        raise CovarianceNotPDError(f"{name} has eigenvalue {w[0]:.3e}") from None


@dataclass(frozen=True)
class GaussianBelief:
    """Mean and covariance of the state at time ``t``.

    Angle entries of the mean (``angle_indices``) are normalized to (-pi, pi]
    and the covariance is symmetrized on construction.
    """

    mean: NDArray[np.float64]
    covariance: NDArray[np.float64]
    t: float = 0.0
    angle_indices: tuple[int, ...] = POSE_ANGLES
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        x = np.array(self.mean, dtype=float).ravel()
        P = np.array(self.covariance, dtype=float)
        n = x.size
        if P.shape != (n, n):
            raise DimensionMismatchError(f"mean has {n} entries, covariance is {P.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
            raise DomainError("belief contains non-finite values")
        idx = [i for i in self.angle_indices if i < n]
        x[idx] = wrap_angle(x[idx])
        P = _symmetrize(P)
        if self.check:
            _check_psd(P)
        x.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "mean", x)
        object.__setattr__(self, "covariance", P)
        object.__setattr__(self, "angle_indices", tuple(self.angle_indices))

    @property
    def dim(self) -> int:
        return self.mean.size

    def replace(self, mean=None, covariance=None, t=None, check=None) -> GaussianBelief:
        return GaussianBelief(
            self.mean if mean is None else mean,
            self.covariance if covariance is None else covariance,
            self.t if t is None else t,
            self.angle_indices,
            self.check if check is None else check,
        )


def _validate_q(Q, n=None):
    Q = np.array(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatchError(f"Q must be square, got {Q.shape}")
    if n is not None and Q.shape[0] != n:
        raise DimensionMismatchError(f"Q is {Q.shape}, state dimension is {n}")
    if not np.allclose(Q, Q.T, rtol=1e-12, atol=0.0):
        raise DomainError("Q must be symmetric")
    _check_psd(Q, "Q")
    Q.setflags(write=False)
    return Q


@dataclass(frozen=True)
class UkfConfig:
    """Sigma-point spread, process noise and nominal step of the unscented filter."""

    Q: NDArray[np.float64]
    dt: float
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (self.dt > 0):
            raise DomainError(f"dt must be positive, got {self.dt}")
        Q = _validate_q(self.Q)
        object.__setattr__(self, "Q", Q)
        if Q.shape[0] + self.kappa <= 0:
            raise DomainError("n + kappa must be positive")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def weights(self):
        """Return ``(c, Wm, Wc)`` with ``c = n + lambda``."""
        n = self.n
        lam = self.alpha ** 2 * (n + self.kappa) - n
        c = n + lam
        Wm = np.full(2 * n + 1, 0.5 / c)
        Wc = Wm.copy()
        Wm[0] = lam / c
        Wc[0] = lam / c + 1.0 - self.alpha ** 2 + self.beta
        return c, Wm, Wc


def rk4_matrix(A: ArrayLike, dt: float) -> NDArray[np.float64]:
    """Transition matrix of one classical RK4 step of ``x' = A x``."""
    A = np.asarray(A, dtype=float)
    hA = dt * A
    I = np.eye(A.shape[0])
    hA2 = hA @ hA
    return I + hA + hA2 / 2.0 + hA2 @ hA / 6.0 + hA2 @ hA2 / 24.0


@dataclass(frozen=True)
class LkfConfig:
    """Discrete transition ``A_bar``, process noise and step of the linear filter.

    ``A`` (the continuous matrix) is optional; when present, prediction over
    intervals other than ``dt`` re-discretizes it.
    """

    A_bar: NDArray[np.float64]
    Q: NDArray[np.float64]
    dt: float
    A: NDArray[np.float64] | None = None

    def __post_init__(self):
        if not (self.dt > 0):
            raise DomainError(f"dt must be positive, got {self.dt}")
        Ab = np.array(self.A_bar, dtype=float)
        if Ab.ndim != 2 or Ab.shape[0] != Ab.shape[1]:
            raise DimensionMismatchError(f"A_bar must be square, got {Ab.shape}")
        Ab.setflags(write=False)
        object.__setattr__(self, "A_bar", Ab)
        object.__setattr__(self, "Q", _validate_q(self.Q, Ab.shape[0]))
        if self.A is not None:
            A = np.array(self.A, dtype=float)
            if A.shape != Ab.shape:
                raise DimensionMismatchError("A and A_bar differ in shape")
            A.setflags(write=False)
            object.__setattr__(self, "A", A)

    @classmethod
    def from_continuous(cls, A: ArrayLike, Q: ArrayLike, dt: float) -> LkfConfig:
        return cls(rk4_matrix(A, dt), Q, dt, np.asarray(A, dtype=float))

    def transition(self, dt: float) -> NDArray[np.float64]:
        if np.isclose(dt, self.dt, rtol=1e-12, atol=0.0):
            return self.A_bar
        if self.A is None:
            raise DomainError("off-step prediction needs the continuous matrix A")
        return rk4_matrix(self.A, dt)


def rk4_step(derivative_fn: Callable, state: ArrayLike, dt: float):
    """One classical fourth-order Runge-Kutta step.

    ``state`` may be any array the derivative accepts (a single state or a
    batch of row states).
    """
    if not (dt > 0):
        raise DomainError(f"dt must be positive, got {dt}")
    x = np.asarray(state, dtype=float)
    k1 = derivative_fn(x)
    k2 = derivative_fn(x + 0.5 * dt * k1)
    k3 = derivative_fn(x + 0.5 * dt * k2)
    k4 = derivative_fn(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class LinearModel:
    """Batch propagator for ``x' = A x`` with the same RK4 discretization as the LKF."""

    def __init__(self, A: ArrayLike):
        self.A = np.asarray(A, dtype=float)

    def derivative(self, X):
        return X @ self.A.T

    def propagate(self, X, dt):
        return rk4_step(self.derivative, X, dt)


def _propagate(model, X, dt):
    if hasattr(model, "propagate"):
        return model.propagate(X, dt)
    return rk4_step(model, X, dt)


def jittered_cholesky(P: NDArray[np.float64], attempts: int = JITTER_ATTEMPTS,
                      start: float = JITTER_START) -> NDArray[np.float64]:
    """Lower Cholesky factor of ``P``, adding escalating diagonal jitter on failure.

    The jitter starts at ``start * trace(P)`` and grows tenfold per attempt.
    """
    try:
        return linalg.cholesky(P, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    scale = max(np.trace(P), np.finfo(float).tiny)
    eps = start * scale
    I = np.eye(P.shape[0])
    for _ in range(attempts):
        try:
            return linalg.cholesky(P + eps * I, lower=True, check_finite=False)
        except linalg.LinAlgError:
            eps *= 10.0
    raise CovarianceNotPDError(f"Cholesky failed after {attempts} jitter attempts")


def sigma_points(belief: GaussianBelief, c: float) -> NDArray[np.float64]:
    """``2n + 1`` sigma points as rows: mean, then mean plus and minus columns of ``sqrt(c P)``."""
    L = jittered_cholesky(c * belief.covariance)
    x = belief.mean
    return np.vstack([x, x + L.T, x - L.T])


def _wrapped_deviation(Y, center, angles):
    D = Y - center
    if angles:
        D[:, angles] = wrap_angle(D[:, angles])
    return D


def unscented_mean(Y, Wm, angles=()):
    """Weighted mean of rows; angle columns are averaged as wrapped offsets from row 0.

    Without seam crossings this is exactly the arithmetic weighted mean.
    """
    angles = list(angles)
    if not angles:
        return Wm @ Y
    D = _wrapped_deviation(Y, Y[0], angles)
    mean = Y[0] + Wm @ D
    mean[angles] = wrap_angle(mean[angles])
    return mean


def ukf_predict(belief: GaussianBelief, model, cfg: UkfConfig, horizon_dt: float | None = None,
                q_scale: float = 1.0) -> GaussianBelief:
    """Unscented prediction over ``horizon_dt`` (default ``cfg.dt``).

    Each sigma point is advanced by one RK4 step; ``q_scale * Q`` is added
    to the propagated covariance.
    """
    dt = cfg.dt if horizon_dt is None else float(horizon_dt)
    if belief.dim != cfg.n:
        raise DimensionMismatchError(f"belief has {belief.dim} states, Q has {cfg.n}")
    c, Wm, Wc = cfg.weights()
    X = sigma_points(belief, c)
    Y = _propagate(model, X, dt)
    angles = list(belief.angle_indices)
    mean = unscented_mean(Y, Wm, angles)
    D = _wrapped_deviation(Y, mean, angles)
    P = (D.T * Wc) @ D
    if q_scale:
        P = P + q_scale * cfg.Q
    return belief.replace(mean=mean, covariance=P, t=belief.t + dt)


def _measurement_parts(measurement):
    y = np.asarray(measurement.value, dtype=float).ravel()
    R = np.asarray(measurement.covariance, dtype=float)
    if R.shape != (y.size, y.size):
        raise DimensionMismatchError(f"measurement of size {y.size} has R of shape {R.shape}")
    angles = [i for i, a in enumerate(getattr(measurement, "angle_mask", ())) if a]
    return y, R, angles


def _gain(Pxy, S):
    try:
        cS = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as exc:
        raise CovarianceNotPDError("innovation covariance is not positive definite") from exc
    return linalg.cho_solve(cS, Pxy.T).T


def ukf_correct(belief: GaussianBelief, measurement, h: Callable, cfg: UkfConfig):
    """Unscented measurement update.

    Parameters
    ----------
    belief : GaussianBelief
    measurement
        Object with ``value``, ``covariance``, ``t``, ``sensor`` and
        ``angle_mask`` attributes (see :class:`vesselstate.sensors.Measurement`).
    h : callable
        Maps a batch of row states to a batch of predicted measurements.
    cfg : UkfConfig

    Returns
    -------
    GaussianBelief, InnovationRecord
    """
    y, R, yang = _measurement_parts(measurement)
    c, Wm, Wc = cfg.weights()
    X = sigma_points(belief, c)
    Yp = np.atleast_2d(h(X))
    if Yp.shape != (X.shape[0], y.size):
        raise DimensionMismatchError(f"h returned {Yp.shape}, expected ({X.shape[0]}, {y.size})")
    y_hat = unscented_mean(Yp, Wm, yang)
    dY = _wrapped_deviation(Yp, y_hat, yang)
    dX = _wrapped_deviation(X, belief.mean, list(belief.angle_indices))
    S = _symmetrize((dY.T * Wc) @ dY + R)
    Pxy = (dX.T * Wc) @ dY
    K = _gain(Pxy, S)
    zeta = y - y_hat
    zeta[yang] = wrap_angle(zeta[yang])
    mean = belief.mean + K @ zeta
    # expanded symmetric form, the sigma-point counterpart of the Joseph update
    KPyx = K @ Pxy.T
    P = belief.covariance - KPyx - KPyx.T + K @ S @ K.T
    record = InnovationRecord(measurement.t, str(measurement.sensor), zeta, S)
    return belief.replace(mean=mean, covariance=P), record


def lkf_predict(belief: GaussianBelief, cfg: LkfConfig, horizon_dt: float | None = None,
                q_scale: float = 1.0) -> GaussianBelief:
    """``x <- A_bar x``, ``P <- A_bar P A_bar' + q_scale Q``."""
    if belief.dim != cfg.A_bar.shape[0]:
        raise DimensionMismatchError(f"belief has {belief.dim} states, A_bar is {cfg.A_bar.shape}")
    dt = cfg.dt if horizon_dt is None else float(horizon_dt)
    A = cfg.transition(dt)
    P = A @ belief.covariance @ A.T
    if q_scale:
        P = P + q_scale * cfg.Q
    return belief.replace(mean=A @ belief.mean, covariance=P, t=belief.t + dt)


def lkf_correct(belief: GaussianBelief, measurement, H: ArrayLike):
    """Kalman update with the Joseph-form covariance.

    Returns the posterior belief and the :class:`InnovationRecord`.
    """
    y, R, yang = _measurement_parts(measurement)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape != (y.size, belief.dim):
        raise DimensionMismatchError(f"H is {H.shape}, expected ({y.size}, {belief.dim})")
    P = belief.covariance
    PHt = P @ H.T
    S = _symmetrize(H @ PHt + R)
    K = _gain(PHt, S)
    zeta = y - H @ belief.mean
    zeta[yang] = wrap_angle(zeta[yang])
    I_KH = np.eye(belief.dim) - K @ H
    P_post = I_KH @ P @ I_KH.T + K @ R @ K.T
    record = InnovationRecord(measurement.t, str(measurement.sensor), zeta, S)
    return belief.replace(mean=belief.mean + K @ zeta, covariance=P_post), record


def predict_horizon(belief: GaussianBelief, steps: int,
                    predictor: Callable[[GaussianBelief], GaussianBelief]) -> list[GaussianBelief]:
    """Apply ``predictor`` repeatedly; element ``k`` is ``k + 1`` steps ahead."""
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    out: list[GaussianBelief] = []
    b = belief
    for _ in range(int(steps)):
        b = predictor(b)
        out.append(b)
    return out


def horizon_steps(horizon: float, dt: float) -> int:
    """Number of prediction steps covering ``horizon`` seconds."""
    if horizon < dt * (1 - 1e-9):
        raise DomainError("horizon must be at least one filter step")
    return int(round(horizon / dt))


def belief_trace_series(beliefs: Sequence[GaussianBelief]) -> NDArray[np.float64]:
    return np.array([np.trace(b.covariance) for b in beliefs])
