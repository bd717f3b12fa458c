"""Stateful estimators built on the belief operations of :mod:`estimation`.

Both estimators expose the same small interface used by the harness:
``predict_to``, ``correct``, ``snapshot`` and ``forecast``. Snapshots and
forecasts are always reported in the global frame: pose ``eta``, body twist
``nu`` and the estimator's wave states.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import kernels
from .errors import DimensionMismatchError, DomainError
from .estimation import (
    GaussianBelief,
    LkfConfig,
    UkfConfig,
    lkf_correct,
    lkf_predict,
    ukf_correct,
    ukf_predict,
)
from .sensors import Measurement, SensorId, measurement_function, selector_matrix
from .vessel import VesselParams, rot_z
from .waves import NonlinearLayout, build_full_linear_system, linear_state_names

TIME_EPS = 1e-9


class KernelPropagator:
    """Batch RK4 propagation of the wave-augmented nonlinear model."""

    def __init__(self, params: VesselParams, layout: NonlinearLayout, backend: str | None = None):
        self.model = kernels.KernelModel.from_params(params, layout)
        self.backend = backend

    def propagate(self, X, dt):
        return kernels.rk4_batch(X, dt, self.model, backend=self.backend)


class _Estimator:
    """Shared bookkeeping: time, process noise on tick boundaries, snapshots."""

    kind = ""

    def __init__(self, belief: GaussianBelief, dt: float):
        self.belief = belief
        self.dt = float(dt)
        self._last_q_tick = int(round(belief.t / self.dt))
        self.dropped = 0

    @property
    def t(self) -> float:
        return self.belief.t

    def _tick_of(self, t: float) -> int | None:
        k = round(t / self.dt)
        return k if abs(t - k * self.dt) <= TIME_EPS else None

    def predict_to(self, t: float) -> None:
        """Advance the belief to ``t``.

        Process noise is added once per filter tick, when a prediction ends on
        that tick, which matches how the simulator injects it.
        """
        if t < self.t - TIME_EPS:
            raise DomainError(f"cannot predict backwards from {self.t} to {t}")
        while self.t < t - TIME_EPS:
            next_tick = (math.floor(self.t / self.dt + TIME_EPS) + 1) * self.dt
            target = min(t, next_tick)
            k = self._tick_of(target)
            q = 1.0 if (k is not None and k > self._last_q_tick) else 0.0
            self._step(target - self.t, q)
            if q:
                self._last_q_tick = k
            # pin the clock to the grid to avoid drift from repeated sums
            self.belief = self.belief.replace(t=target)

    def correct(self, measurement: Measurement):
        raise NotImplementedError

    def _step(self, dt: float, q_scale: float):
        raise NotImplementedError

    def global_state(self, mean: NDArray[np.float64]) -> NDArray[np.float64]:
        raise NotImplementedError

    def global_variances(self, belief: GaussianBelief) -> NDArray[np.float64]:
        return np.diag(belief.covariance).copy()

    def snapshot(self):
        """Return ``(t, global state, covariance diagonal)``."""
        b = self.belief
        return b.t, self.global_state(b.mean), self.global_variances(b)

    def forecast(self, steps: int):
        """Predict ``steps`` filter steps ahead without touching the current belief.

        Returns a list of ``(t_target, global state)``.
        """
        if steps < 1:
            raise DomainError(f"steps must be >= 1, got {steps}")
        saved = (self.belief, self._last_q_tick)
        out = []
        try:
            for _ in range(int(steps)):
                self._step(self.dt, 1.0)
                self.belief = self.belief.replace(t=round(self.t / self.dt) * self.dt)
                out.append((self.t, self.global_state(self.belief.mean)))
        finally:
            self.belief, self._last_q_tick = saved
        return out


class NonlinearEstimator(_Estimator):
    """Unscented filter over the wave-augmented nonlinear model."""

    kind = "nonlinear"

    def __init__(self, params: VesselParams, layout: NonlinearLayout, belief: GaussianBelief,
                 cfg: UkfConfig, backend: str | None = None):
        if belief.dim != layout.dim or cfg.n != layout.dim:
            raise DimensionMismatchError("belief, Q and layout dimensions differ")
        super().__init__(belief, cfg.dt)
        self.layout = layout
        self.cfg = cfg
        self.propagator = KernelPropagator(params, layout, backend)
        self._h = {s: measurement_function(s) for s in SensorId}

    def state_names(self) -> list[str]:
        return self.layout.state_names()

    def _step(self, dt, q_scale):
        self.belief = ukf_predict(self.belief, self.propagator, self.cfg, dt, q_scale)

    def correct(self, measurement: Measurement):
        self.belief, rec = ukf_correct(self.belief, measurement, self._h[measurement.sensor], self.cfg)
        return rec

    def global_state(self, mean):
        return np.array(mean, dtype=float)


def _rotate_positions(belief: GaussianBelief, delta: float) -> GaussianBelief:
    """Express vessel-parallel positions in a frame turned by ``delta`` in yaw."""
    if delta == 0.0:
        return belief
    T = rot_z(delta).T
    x = belief.mean.copy()
    P = belief.covariance.copy()
    x[:3] = T @ x[:3]
    P[:3, :] = T @ P[:3, :]
    P[:, :3] = P[:, :3] @ T.T
    return belief.replace(mean=x, covariance=P)


class LinearEstimator(_Estimator):
    """Kalman filter over the wave-augmented LTI model in vessel-parallel coordinates.

    Positions are kept in a yaw frame anchored at the current heading
    estimate. After every predict or correct step the position block is
    re-expressed in the frame of the new heading estimate.
    """

    kind = "linear"

    def __init__(self, params: VesselParams, banks: Sequence[Sequence], belief: GaussianBelief,
                 Q: ArrayLike, dt: float, r_scale: dict | None = None):
        A = build_full_linear_system(params, banks)
        self.cfg = LkfConfig.from_continuous(A, Q, dt)
        if belief.dim != A.shape[0]:
            raise DimensionMismatchError(f"belief has {belief.dim} states, model has {A.shape[0]}")
        self.n_lc = len(banks[0])
        self.anchor = float(belief.mean[5])
        # belief given in global coordinates; move positions to the vessel-parallel frame
        g = belief.mean.copy()
        P = belief.covariance.copy()
        Rt = rot_z(self.anchor).T
        g[:3] = Rt @ g[:3]
        P[:3, :] = Rt @ P[:3, :]
        P[:, :3] = P[:, :3] @ Rt.T
        super().__init__(belief.replace(mean=g, covariance=P), dt)
        self._H = {s: selector_matrix(s, A.shape[0]) for s in SensorId}
        self.r_scale = {SensorId(k) if not isinstance(k, SensorId) else k: float(v)
                        for k, v in (r_scale or {}).items()}

    def state_names(self) -> list[str]:
        return linear_state_names(self.n_lc)

    def _reanchor(self):
        psi = float(self.belief.mean[5])
        delta = psi - self.anchor
        self.belief = _rotate_positions(self.belief, delta)
        self.anchor = psi

    def _step(self, dt, q_scale):
        self.belief = lkf_predict(self.belief, self.cfg, dt, q_scale)
        self._reanchor()

    def _to_local(self, m: Measurement) -> Measurement:
        y = m.value.copy()
        R = m.covariance.copy()
        scale = self.r_scale.get(m.sensor, 1.0)
        if m.sensor is not SensorId.IMU:
            Rz = rot_z(self.anchor)
            y[:3] = Rz.T @ y[:3]
            R[:3, :] = Rz.T @ R[:3, :]
            R[:, :3] = R[:, :3] @ Rz
        return Measurement(m.t, m.sensor, y, scale * R, m.t_avail)

    def correct(self, measurement: Measurement):
        local = self._to_local(measurement)
        self.belief, rec = lkf_correct(self.belief, local, self._H[measurement.sensor])
        self._reanchor()
        return rec

    def global_state(self, mean):
        g = np.array(mean, dtype=float)
        g[:3] = rot_z(g[5]) @ g[:3]
        return g

    def global_variances(self, belief):
        P = belief.covariance
        Rz = rot_z(belief.mean[5])
        d = np.diag(P).copy()
        d[:3] = np.diag(Rz @ P[:3, :3] @ Rz.T)
        return d
