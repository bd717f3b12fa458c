"""Sensor models, the UAV-USV communication link and measurement logs.

GPS and IMU live on the USV and reach the estimator over the radio link;
UVDAR and AprilTag are UAV-onboard relative-pose sensors whose detections
are converted to global USV poses using the UAV pose.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError, DimensionMismatchError, DomainError
from .vessel import EulerPose, rotation_j1, wrap_angle


class SensorId(str, enum.Enum):
    GPS = "GPS"
    IMU = "IMU"
    UVDAR = "UVDAR"
    APRILTAG = "APRILTAG"

    def __str__(self) -> str:
        return self.value


LINKED = frozenset({SensorId.GPS, SensorId.IMU})
RELATIVE = frozenset({SensorId.UVDAR, SensorId.APRILTAG})

#: State indices each sensor observes (pose 0..5, twist 6..11).
STATE_INDICES = {
    SensorId.GPS: (0, 1, 2),
    SensorId.IMU: (3, 4, 5, 9, 10, 11),
    SensorId.UVDAR: (0, 1, 2, 3, 4, 5),
    SensorId.APRILTAG: (0, 1, 2, 3, 4, 5),
}

ANGLE_MASK = {
    SensorId.GPS: (False, False, False),
    SensorId.IMU: (True, True, True, False, False, False),
    SensorId.UVDAR: (False, False, False, True, True, True),
    SensorId.APRILTAG: (False, False, False, True, True, True),
}


def parse_sensor(name) -> SensorId:
    try:
        return SensorId(str(name).strip().upper())
    except ValueError as exc:
        raise ConfigError(f"unknown sensor {name!r}") from exc


@dataclass(frozen=True)
class Measurement:
    """A reading ``value`` with noise covariance taken at ``t``.

    ``t_avail`` is when the estimator can use it (after link latency).
    """

    t: float
    sensor: SensorId
    value: NDArray[np.float64]
    covariance: NDArray[np.float64]
    t_avail: float | None = None

    def __post_init__(self):
        sensor = parse_sensor(self.sensor)
        y = np.array(self.value, dtype=float).ravel()
        R = np.array(self.covariance, dtype=float)
        m = len(STATE_INDICES[sensor])
        if y.size != m:
            raise DimensionMismatchError(f"{sensor} reading needs {m} values, got {y.size}")
        if R.shape != (m, m):
            raise DimensionMismatchError(f"{sensor} covariance needs shape ({m}, {m}), got {R.shape}")
        if not np.allclose(R, R.T) or np.any(np.linalg.eigvalsh(R) <= 0):
            raise DomainError(f"{sensor} covariance must be symmetric positive definite")
        y.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "sensor", sensor)
        object.__setattr__(self, "value", y)
        object.__setattr__(self, "covariance", R)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "t_avail", float(self.t if self.t_avail is None else self.t_avail))

    @property
    def angle_mask(self) -> tuple[bool, ...]:
        return ANGLE_MASK[self.sensor]

    @property
    def state_indices(self) -> tuple[int, ...]:
        return STATE_INDICES[self.sensor]


@dataclass(frozen=True)
class SensorSpec:
    """Rate, per-channel noise and visibility limits of one sensor.

    ``dark`` lists ``(start, end)`` intervals in which the lighting gate is
    closed; only AprilTag honours it.
    """

    rate: float
    stds: tuple[float, ...]
    max_range: float = math.inf
    half_fov: float = math.pi
    dark: tuple[tuple[float, float], ...] = ()
    enabled: bool = True

    def __post_init__(self):
        if not (self.rate > 0):
            raise DomainError(f"rate must be positive, got {self.rate}")
        stds = tuple(float(s) for s in self.stds)
        if not stds or any(not (s > 0) for s in stds):
            raise DomainError("noise standard deviations must be positive")
        if not (self.max_range > 0 and self.half_fov > 0):
            raise DomainError("max_range and half_fov must be positive")
        object.__setattr__(self, "stds", stds)
        object.__setattr__(self, "dark", tuple((float(a), float(b)) for a, b in self.dark))

    @property
    def covariance(self) -> NDArray[np.float64]:
        return np.diag(np.square(self.stds))

    def lit(self, t: float) -> bool:
        return not any(a <= t < b for a, b in self.dark)


@dataclass(frozen=True)
class LinkSpec:
    """Radio link between USV and UAV for GPS/IMU messages."""

    latency: float = 0.0
    drop_prob: float = 0.0
    min_rate: float = 1.0

    def __post_init__(self):
        if self.latency < 0:
            raise DomainError("latency must be non-negative")
        if not (0.0 <= self.drop_prob < 1.0):
            raise DomainError("drop probability must lie in [0, 1)")
        if self.min_rate < 0:
            raise DomainError("min_rate must be non-negative")


def default_specs() -> dict[SensorId, SensorSpec]:
    return {
        SensorId.GPS: SensorSpec(5.0, (0.7, 0.7, 0.7)),
        SensorId.IMU: SensorSpec(20.0, (0.01, 0.01, 0.01, 0.05, 0.05, 0.05)),
        SensorId.UVDAR: SensorSpec(10.0, (0.25, 0.25, 0.25, 0.12, 0.12, 0.12),
                                   max_range=15.0, half_fov=0.6),
        SensorId.APRILTAG: SensorSpec(15.0, (0.04, 0.04, 0.04, 0.06, 0.06, 0.06),
                                      max_range=10.0, half_fov=0.6),
    }


@dataclass(frozen=True)
class UavPose:
    t: float
    x: float
    y: float
    z: float
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        vals = (self.t, self.x, self.y, self.z, self.phi, self.theta, self.psi)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("UAV pose must be finite")
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))
        object.__setattr__(self, "psi", float(wrap_angle(self.psi)))

    @property
    def position(self) -> NDArray[np.float64]:
        return np.array([self.x, self.y, self.z])

    @property
    def rotation(self) -> NDArray[np.float64]:
        return rotation_j1((self.phi, self.theta, self.psi))


def euler_from_rotation(R: ArrayLike) -> NDArray[np.float64]:
    """Inverse of ``rotation_j1`` for ``|theta| < pi/2``."""
    R = np.asarray(R, dtype=float)
    theta = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    phi = math.atan2(R[2, 1], R[2, 2])
    psi = math.atan2(R[1, 0], R[0, 0])
    return np.array([phi, theta, psi])


def _check_spec(spec: SensorSpec, sensor: SensorId):
    m = len(STATE_INDICES[sensor])
    if len(spec.stds) != m:
        raise ConfigError(f"{sensor} needs {m} noise stds, got {len(spec.stds)}")


def gps_measure(truth: EulerPose, spec: SensorSpec, rng: np.random.Generator, t: float = 0.0) -> Measurement:
    """Position plus Gaussian noise."""
    _check_spec(spec, SensorId.GPS)
    y = truth.position + rng.normal(size=3) * np.asarray(spec.stds)
    return Measurement(t, SensorId.GPS, y, spec.covariance)


def imu_measure(truth: EulerPose, twist, spec: SensorSpec, rng: np.random.Generator,
                t: float = 0.0) -> Measurement:
    """Attitude and body rates ``(phi, theta, psi, p, q, r)`` plus noise, angles wrapped."""
    _check_spec(spec, SensorId.IMU)
    rates = twist.as_array()[3:] if hasattr(twist, "as_array") else np.asarray(twist, dtype=float)[3:6]
    y = np.concatenate([truth.angles, rates]) + rng.normal(size=6) * np.asarray(spec.stds)
    y[:3] = wrap_angle(y[:3])
    return Measurement(t, SensorId.IMU, y, spec.covariance)


def in_view(truth: EulerPose, uav: UavPose, spec: SensorSpec) -> bool:
    """Range and field-of-view gate about the UAV's body z (downward) axis."""
    rel = truth.position - uav.position
    dist = float(np.linalg.norm(rel))
    if dist > spec.max_range:
        return False
    if dist == 0.0:
        return True
    axis = uav.rotation[:, 2]
    cosang = float(axis @ rel) / dist
    return cosang >= math.cos(spec.half_fov)


def relative_pose(truth: EulerPose, uav: UavPose):
    """True USV pose in the UAV frame: ``(p_rel, R_rel)``."""
    Ru = uav.rotation
    p_rel = Ru.T @ (truth.position - uav.position)
    R_rel = Ru.T @ rotation_j1(truth.angles)
    return p_rel, R_rel


def global_from_relative(p_rel: ArrayLike, R_rel: ArrayLike, uav: UavPose) -> NDArray[np.float64]:
    """Global 6-vector pose from a relative detection and the UAV pose."""
    Ru = uav.rotation
    pos = uav.position + Ru @ np.asarray(p_rel, dtype=float)
    ang = euler_from_rotation(Ru @ np.asarray(R_rel, dtype=float))
    return np.concatenate([pos, ang])


def relative_pose_measure(kind, truth: EulerPose, uav: UavPose, spec: SensorSpec,
                          rng: np.random.Generator, t: float = 0.0,
                          uav_error: UavPose | None = None) -> Measurement | None:
    """Gated relative-pose detection converted to a global USV pose.

    Noise is added to the relative position (UAV frame) and to the relative
    Euler angles. ``uav_error``, if given, is the UAV pose the estimator
    believes in and is used for the conversion back to the global frame.
    The noise draw happens even when gated so that streams stay aligned.
    """
    kind = parse_sensor(kind)
    if kind not in RELATIVE:
        raise ConfigError(f"{kind} is not a relative-pose sensor")
    _check_spec(spec, kind)
    noise = rng.normal(size=6) * np.asarray(spec.stds)
    if not in_view(truth, uav, spec):
        return None
    if kind is SensorId.APRILTAG and not spec.lit(t):
        return None
    p_rel, R_rel = relative_pose(truth, uav)
    ang_rel = euler_from_rotation(R_rel) + noise[3:]
    R_rel_noisy = rotation_j1(ang_rel)
    ref = uav if uav_error is None else uav_error
    y = global_from_relative(p_rel + noise[:3], R_rel_noisy, ref)
    Ru = ref.rotation
    R = np.zeros((6, 6))
    R[:3, :3] = Ru @ np.diag(np.square(spec.stds[:3])) @ Ru.T
    # exact for a level UAV; a first-order surrogate otherwise
    R[3:, 3:] = np.diag(np.square(spec.stds[3:]))
    return Measurement(t, kind, y, R)


def comm_link_apply(stream: Iterable[Measurement], spec: LinkSpec,
                    rng: np.random.Generator) -> list[Measurement]:
    """Drop and delay GPS/IMU messages; onboard sensors pass through.

    The output is ordered by availability time (ties keep input order).
    """
    out = []
    for m in stream:
        if m.sensor in LINKED:
            if rng.random() < spec.drop_prob:
                continue
            m = Measurement(m.t, m.sensor, m.value, m.covariance, m.t + spec.latency)
        out.append(m)
    out.sort(key=lambda m: m.t_avail)
    return out


def link_rate(stream: Sequence[Measurement], duration: float) -> float:
    """Mean rate of linked messages (per second) in ``stream``."""
    if duration <= 0:
        raise DomainError("duration must be positive")
    return sum(1 for m in stream if m.sensor in LINKED) / duration


def measurement_function(sensor):
    """Batch selector ``h(X)`` for a sensor on the 12 leading states."""
    idx = list(STATE_INDICES[parse_sensor(sensor)])

    def h(X):
        return np.asarray(X)[..., idx]

    return h


def selector_matrix(sensor, n: int) -> NDArray[np.float64]:
    idx = STATE_INDICES[parse_sensor(sensor)]
    H = np.zeros((len(idx), n))
    H[np.arange(len(idx)), idx] = 1.0
    return H


# measurement log

CSV_HEADER = (["t_meas", "t_avail", "sensor"] + [f"y{i}" for i in range(1, 7)]
              + [f"r{i}{i}" for i in range(1, 7)])


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_measurements(stream: Iterable[Measurement]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for m in stream:
        pad = [""] * (6 - m.value.size)
        w.writerow([fmt(m.t), fmt(m.t_avail), m.sensor.value]
                   + [fmt(v) for v in m.value] + pad
                   + [fmt(v) for v in np.diag(m.covariance)] + pad)
    return buf.getvalue()


def parse_measurements(text: str) -> list[Measurement]:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header != CSV_HEADER:
        raise ConfigError("measurement log has an unexpected header")
    out = []
    for row in rows:
        if not row:
            continue
        sensor = parse_sensor(row[2])
        m = len(STATE_INDICES[sensor])
        y = [float(v) for v in row[3:3 + m]]
        r = [float(v) for v in row[9:9 + m]]
        out.append(Measurement(float(row[0]), sensor, y, np.diag(r), float(row[1])))
    return out


def sample_steps(rate: float, duration: float, grid_dt: float) -> NDArray[np.intp]:
    """Grid indices of the sample instants ``k / rate`` in ``(0, duration]``.

    Instants are snapped to the nearest multiple of ``grid_dt``.
    """
    n = int(math.floor(duration * rate + 1e-9))
    steps = np.rint(np.arange(1, n + 1) / (rate * grid_dt)).astype(np.intp)
    return np.unique(steps)
