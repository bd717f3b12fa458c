"""Batch simulation: truth, sensor streams, estimators, reports and artifacts.

Random streams are split from one seed with :class:`numpy.random.SeedSequence`
in a fixed order, so each consumer (wave phases, process noise, each sensor,
the link, UAV pose error) sees the same numbers whatever else is enabled.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .errors import LengthMismatchError, SingularityError
from .estimation import GaussianBelief, UkfConfig, horizon_steps
from .filters import LinearEstimator, NonlinearEstimator, _Estimator
from .scenario import Scenario
from .sensors import (
    LINKED,
    Measurement,
    SensorId,
    UavPose,
    comm_link_apply,
    fmt,
    format_measurements,
    gps_measure,
    imu_measure,
    parse_measurements,
    relative_pose_measure,
    sample_steps,
)
from .validation import (
    STATE_GROUPS,
    InnovationRecord,
    TestReport,
    evaluate_innovations,
    vector_rmse,
)
from .vessel import BodyTwist, EulerPose, wrap_angle
from .waves import linear_state_names, nonlinear_initial_state

STREAMS = ("phases", "process", "GPS", "IMU", "UVDAR", "APRILTAG", "link", "uav")
TWELVE = ["x", "y", "z", "phi", "theta", "psi", "u", "v", "w", "p", "q", "r"]


def spawn_rngs(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {name: np.random.default_rng(c) for name, c in zip(STREAMS, children)}


# truth

@dataclass
class TruthTrajectory:
    """Truth states stored at filter ticks and at every sensor sample instant."""

    scenario: Scenario
    steps: NDArray[np.intp]
    states: NDArray[np.float64]
    names: list[str]
    _row: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._row = {int(s): i for i, s in enumerate(self.steps)}

    def at_step(self, step: int) -> NDArray[np.float64]:
        return self.states[self._row[int(step)]]

    @property
    def tick_stride(self) -> int:
        return self.scenario.substeps

    def ticks(self):
        """``(times, states)`` at filter ticks ``0 .. n_ticks``."""
        sc = self.scenario
        idx = [self._row[k * sc.substeps] for k in range(sc.n_ticks + 1)]
        times = np.arange(sc.n_ticks + 1) * sc.filter_dt
        return times, self.states[idx]


def initial_truth_state(scenario: Scenario, rng: np.random.Generator) -> NDArray[np.float64]:
    x = [0.0] * 12
    for bank in scenario.waves.banks():
        for c in bank:
            # always draw so that fixing one phase leaves the others unchanged
            drawn = rng.uniform(-math.pi, math.pi)
            phase = drawn if c.phase is None else c.phase
            x.extend(nonlinear_initial_state(c.amplitude, c.omega, phase))
    return np.array(x)


def _sensor_steps(scenario: Scenario) -> dict[SensorId, NDArray[np.intp]]:
    specs = scenario.sensors.specs()
    return {sid: sample_steps(spec.rate, scenario.duration, scenario.truth_dt)
            for sid, spec in specs.items() if spec.enabled}


def run_truth(scenario: Scenario, backend: str | None = None) -> TruthTrajectory:
    """Integrate the wave-forced nonlinear model with RK4 at ``truth_dt``.

    At every filter tick a zero-mean Gaussian velocity impulse (std
    ``process_noise.twist_std``) is added to the twist, and optionally a pose
    impulse. Angles are normalized after every stored instant.

    Raises
    ------
    SingularityError
        If the pitch angle reaches the Euler-rate singularity; the message
        carries the simulation time.
    """
    rngs = spawn_rngs(scenario.seed)
    layout = scenario.waves.layout()
    model = kernels.KernelModel.from_params(scenario.vessel.to_params(), layout)
    m = scenario.substeps
    n_steps = scenario.n_ticks * m
    tick_steps = np.arange(0, n_steps + 1, m)
    extra = [s[s <= n_steps] for s in _sensor_steps(scenario).values()]
    steps = np.unique(np.concatenate([tick_steps] + extra)) if extra else tick_steps
    twist_std = np.asarray(scenario.process_noise.twist_std)
    pose_std = np.asarray(scenario.process_noise.pose_std)
    noise_rng = rngs["process"]

    x = initial_truth_state(scenario, rngs["phases"])[None, :]
    out = np.empty((len(steps), layout.dim))
    out[0] = x[0]
    prev = 0
    for i, s in enumerate(steps[1:], start=1):
        try:
            x = kernels.rk4_batch(x, scenario.truth_dt, model, nsub=int(s - prev), backend=backend)
        except SingularityError as exc:
            raise SingularityError(f"truth hit the pitch singularity between t={prev * scenario.truth_dt:.6g} "
                                   f"and t={s * scenario.truth_dt:.6g}: {exc}") from None
        if abs(x[0, 4]) >= 0.5 * math.pi:
            # stepped across gimbal lock without landing inside the |cos(theta)| band
            raise SingularityError(f"truth pitch crossed +-pi/2 between t={prev * scenario.truth_dt:.6g} "
                                   f"and t={s * scenario.truth_dt:.6g}")
        if s % m == 0:
            x[0, 6:12] += noise_rng.normal(size=6) * twist_std
            x[0, :6] += noise_rng.normal(size=6) * pose_std
        x[0, [3, 5]] = wrap_angle(x[0, [3, 5]])
        out[i] = x[0]
        prev = s
    return TruthTrajectory(scenario, steps, out, layout.state_names())


# sensors

def uav_pose_at(truth: TruthTrajectory, t: float) -> UavPose:
    """Level UAV hovering above the USV position at ``t - lag``, with a horizontal offset."""
    sc = truth.scenario
    u = sc.uav
    k = max(0, int(math.floor((t - u.lag) / sc.filter_dt + 1e-9)))
    k = min(k, sc.n_ticks)
    usv = truth.at_step(k * sc.substeps)
    r = u.offset_mean + u.offset_amp * math.sin(2.0 * math.pi * t / u.offset_period)
    return UavPose(t, usv[0] + r * math.cos(u.offset_heading), usv[1] + r * math.sin(u.offset_heading),
                   usv[2] - u.altitude)


def synthesize_measurements(truth: TruthTrajectory) -> list[Measurement]:
    """Sensor readings for every enabled sensor, passed through the link model.

    Returns the stream ordered by availability time.
    """
    sc = truth.scenario
    rngs = spawn_rngs(sc.seed)
    specs = sc.sensors.specs()
    u = sc.uav
    stream: list[Measurement] = []
    for sid, steps in _sensor_steps(sc).items():
        spec = specs[sid]
        rng = rngs[sid.value]
        for s in steps:
            t = s * sc.truth_dt
            x = truth.at_step(s)
            pose = EulerPose.from_array(x[:6])
            if sid is SensorId.GPS:
                stream.append(gps_measure(pose, spec, rng, t))
            elif sid is SensorId.IMU:
                stream.append(imu_measure(pose, BodyTwist.from_array(x[6:12]), spec, rng, t))
            else:
                uav = uav_pose_at(truth, t)
                believed = None
                if u.position_error_std > 0 or u.angle_error_std > 0:
                    e = rngs["uav"].normal(size=6)
                    believed = UavPose(t, uav.x + u.position_error_std * e[0],
                                       uav.y + u.position_error_std * e[1],
                                       uav.z + u.position_error_std * e[2],
                                       uav.phi + u.angle_error_std * e[3],
                                       uav.theta + u.angle_error_std * e[4],
                                       uav.psi + u.angle_error_std * e[5])
                m = relative_pose_measure(sid, pose, uav, spec, rng, t, believed)
                if m is not None:
                    stream.append(m)
    order = {sid: i for i, sid in enumerate(SensorId)}
    stream.sort(key=lambda m: (m.t, order[m.sensor]))
    return comm_link_apply(stream, sc.link.to_spec(), rngs["link"])


def visibility_fraction(truth: TruthTrajectory, sensor=SensorId.APRILTAG) -> float:
    """Share of sample instants at which a relative sensor sees the USV (lighting ignored)."""
    from .sensors import in_view

    sc = truth.scenario
    spec = sc.sensors.specs()[SensorId(sensor)]
    steps = sample_steps(spec.rate, sc.duration, sc.truth_dt)
    seen = [in_view(EulerPose.from_array(truth.at_step(s)[:6]), uav_pose_at(truth, s * sc.truth_dt), spec)
            for s in steps]
    return float(np.mean(seen))


# estimation

def _process_q_twist(sc: Scenario) -> NDArray[np.float64]:
    return np.square(np.r_[sc.process_noise.pose_std, sc.process_noise.twist_std])


def initial_belief(sc: Scenario, kind: str) -> GaussianBelief:
    ini = sc.initial
    mean = [0.0] * 12
    var = list(np.square(ini.pose_std)) + list(np.square(ini.twist_std))
    for bank in sc.waves.banks():
        for c in bank:
            a = ini.wave_scale * c.amplitude
            mean += [0.0, 0.0]
            var += [a ** 2 + 1e-12, (a * c.omega) ** 2 + 1e-12]
            if kind == "nonlinear":
                mean.append(c.omega ** 2)
                var.append((2.0 * ini.frequency_rel_std * c.omega ** 2) ** 2 + 1e-12)
    return GaussianBelief(np.array(mean), np.diag(var), 0.0)


def build_estimator(sc: Scenario, kind: str, backend: str | None = None) -> _Estimator:
    params = sc.vessel.to_params()
    belief = initial_belief(sc, kind)
    Q = np.zeros((belief.dim, belief.dim))
    Q[:12, :12] = np.diag(_process_q_twist(sc))
    if kind == "nonlinear":
        cfg = UkfConfig(Q, sc.filter_dt, sc.filter.alpha, sc.filter.beta, sc.filter.kappa)
        return NonlinearEstimator(params, sc.waves.layout(), belief, cfg, backend)
    if kind == "linear":
        return LinearEstimator(params, sc.waves.linear_banks(), belief, sc.filter.linear_q_scale * Q,
                               sc.filter_dt, sc.filter.linear_r_scale)
    raise ValueError(f"unknown filter kind {kind!r}")


@dataclass
class EstimationResult:
    kind: str
    names: list[str]
    times: NDArray[np.float64]
    states: NDArray[np.float64]
    variances: NDArray[np.float64]
    innovations: list[InnovationRecord]
    predictions: list[tuple[float, float, NDArray[np.float64]]]
    used: int = 0
    dropped_late: int = 0


def run_estimation(sc: Scenario, measurements: Sequence[Measurement], kind: str = "nonlinear",
                   sensors: Iterable | None = None, predict: bool | None = None,
                   backend: str | None = None) -> EstimationResult:
    """Fuse a measurement stream (ordered by availability) with one estimator.

    Measurements are handled in availability order: the filter predicts to
    the measurement time and corrects. A measurement older than the current
    filter time is dropped and counted. The estimate is recorded at every
    filter tick, and every ``prediction.cadence`` seconds a forecast over
    ``prediction.horizon`` is issued from the current belief.
    """
    sensor_set = set(sc.sensor_ids() if sensors is None else [SensorId(str(s).upper()) for s in sensors])
    est = build_estimator(sc, kind, backend)
    names = TWELVE + (sc.waves.layout().state_names()[12:] if kind == "nonlinear"
                      else linear_state_names(len(sc.waves.linear_banks()[0]))[12:])
    n = sc.n_ticks
    dt = sc.filter_dt
    do_predict = sc.prediction.enabled if predict is None else predict
    cad = max(1, int(round(sc.prediction.cadence / dt)))
    hz = horizon_steps(sc.prediction.horizon, dt)

    times = np.arange(n + 1) * dt
    states = np.empty((n + 1, est.belief.dim))
    variances = np.empty_like(states)
    _, states[0], variances[0] = est.snapshot()
    innovations: list[InnovationRecord] = []
    predictions = []
    queue = [m for m in measurements if m.sensor in sensor_set]
    if any(b.t_avail < a.t_avail for a, b in zip(queue, queue[1:])):
        raise LengthMismatchError("measurement stream must be ordered by availability time")
    qi = used = late = 0
    for k in range(1, n + 1):
        t_k = times[k]
        while qi < len(queue) and queue[qi].t_avail <= t_k + 1e-9:
            m = queue[qi]
            qi += 1
            if m.t < est.t - 1e-9:
                late += 1
                continue
            est.predict_to(m.t)
            innovations.append(est.correct(m))
            used += 1
        est.predict_to(t_k)
        _, states[k], variances[k] = est.snapshot()
        if do_predict and k % cad == 0 and k + hz <= n:
            for t_target, x in est.forecast(hz):
                predictions.append((t_k, t_target, x))
    est.dropped = late
    return EstimationResult(kind, names, times, states, variances, innovations, predictions, used, late)


# reports

def _group_rmse(est: NDArray[np.float64], truth: NDArray[np.float64]) -> dict[str, float]:
    return {name: vector_rmse(est[:, list(idx)], truth[:, list(idx)], angular)
            for name, idx, angular in STATE_GROUPS}


def estimate_rmse(result: EstimationResult, truth: TruthTrajectory, t_min: float = 0.0) -> dict[str, float]:
    t_truth, x_truth = truth.ticks()
    if len(t_truth) != len(result.times):
        raise LengthMismatchError("estimates and truth are sampled differently")
    sel = result.times >= t_min - 1e-9
    return _group_rmse(result.states[sel, :12], x_truth[sel, :12])


def prediction_rmse(result: EstimationResult, truth: TruthTrajectory) -> dict[int, dict[str, float]]:
    """RMSE per horizon offset (in filter steps, starting at 1)."""
    sc = truth.scenario
    t_truth, x_truth = truth.ticks()
    by_offset: dict[int, tuple[list, list]] = {}
    for t_issue, t_target, x in result.predictions:
        j = int(round((t_target - t_issue) / sc.filter_dt))
        k = int(round(t_target / sc.filter_dt))
        e, tr = by_offset.setdefault(j, ([], []))
        e.append(x[:12])
        tr.append(x_truth[k, :12])
    return {j: _group_rmse(np.array(e), np.array(tr)) for j, (e, tr) in sorted(by_offset.items())}


def innovation_reports(result: EstimationResult, sc: Scenario) -> list[TestReport]:
    return evaluate_innovations(result.innovations, t_min=sc.burn_in)


# artifacts

def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise LengthMismatchError(f"{path} is empty")
    return rows[0], rows[1:]


def format_truth(truth: TruthTrajectory) -> str:
    t, x = truth.ticks()
    return format_table(["t"] + truth.names, ([ti, *xi] for ti, xi in zip(t, x)))


def format_estimates(result: EstimationResult) -> str:
    k = len(result.names)
    header = ["t"] + result.names + [f"cov_d{i}" for i in range(1, k + 1)]
    return format_table(header, ([t, *x, *v] for t, x, v in zip(result.times, result.states, result.variances)))


def format_predictions(result: EstimationResult) -> str:
    header = ["t_issue", "t_target"] + result.names
    return format_table(header, ([a, b, *x] for a, b, x in result.predictions))


def format_innovations(result: EstimationResult) -> str:
    header = ["t", "sensor", "m"] + [f"z{i}" for i in range(1, 7)] + [
        f"s{i}{j}" for i in range(1, 7) for j in range(1, 7)]
    rows = []
    for r in result.innovations:
        m = r.m
        S = np.full((6, 6), np.nan)
        S[:m, :m] = r.covariance
        z = list(r.innovation) + [""] * (6 - m)
        s = [v if np.isfinite(v) else "" for v in S.ravel()]
        rows.append([float(r.t), r.sensor, m, *z, *s])
    return format_table(header, rows)


def parse_innovations(text: str) -> list[InnovationRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    out = []
    for row in rows[1:]:
        m = int(row[2])
        z = [float(v) for v in row[3:3 + m]]
        S = np.array([float(row[9 + 6 * i + j]) for i in range(m) for j in range(m)]).reshape(m, m)
        out.append(InnovationRecord(float(row[0]), row[1], z, S))
    return out


def format_test_reports(reports: Sequence[TestReport]) -> str:
    header = ["sensor", "group", "test1_frac", "test2_qbar", "test2_r1", "test2_r2", "test2_pass",
              "test3_frac", "N"]
    return format_table(header, ([r.sensor, r.group, r.test1_frac, r.test2_qbar, r.test2_r1, r.test2_r2,
                            str(r.test2_pass).lower(), r.test3_frac, r.n] for r in reports))


def format_rmse(filter_kind: str, est: dict[str, float], pred: dict[int, dict[str, float]],
                dt: float) -> list[list]:
    rows = [[filter_kind, "estimate", 0.0, g, v] for g, v in est.items()]
    for j, groups in pred.items():
        rows += [[filter_kind, "prediction", j * dt, g, v] for g, v in groups.items()]
    return rows


def format_text_report(sc: Scenario, sections: dict[str, dict]) -> str:
    lines = [f"seed {sc.seed}, duration {fmt(sc.duration)} s, sensors {','.join(sc.sensors_used)}", ""]
    for kind, sec in sections.items():
        lines.append(f"[{kind}]")
        lines.append(f"measurements used {sec['used']}, dropped as late {sec['dropped']}")
        lines.append("estimation RMSE: " + ", ".join(f"{g} {v:.6g}" for g, v in sec["rmse"].items()))
        pred = sec["pred"]
        if pred:
            last = max(pred)
            lines.append(f"prediction RMSE at {fmt(last * sc.filter_dt)} s: "
                         + ", ".join(f"{g} {v:.6g}" for g, v in pred[last].items()))
        lines.append("innovation tests (burn-in excluded):")
        lines.append(f"  {'sensor':9s}{'group':13s}{'test1':>8s}{'qbar':>10s}{'N*qbar':>12s}"
                     f"{'interval':>24s}{'pass2':>7s}{'test3':>8s}{'N':>6s}")
        for r in sec["tests"]:
            interval = f"[{r.test2_r1:.4g}, {r.test2_r2:.4g}]"
            lines.append(f"  {r.sensor:9s}{r.group:13s}{r.test1_frac:8.4f}{r.test2_qbar:10.4g}"
                         f"{r.test2_nqbar:12.6g}{interval:>24s}{str(r.test2_pass):>7s}"
                         f"{r.test3_frac:8.4f}{r.n:6d}")
        lines.append("")
    return "\n".join(lines)


def filter_kinds(kind: str) -> list[str]:
    return ["nonlinear", "linear"] if kind == "both" else [kind]


def linked_rate(measurements: Sequence[Measurement], duration: float) -> float:
    return sum(1 for m in measurements if m.sensor in LINKED) / duration


__all__ = [
    "TruthTrajectory", "EstimationResult", "run_truth", "synthesize_measurements", "run_estimation",
    "estimate_rmse", "prediction_rmse", "innovation_reports", "atomic_write", "format_measurements",
    "parse_measurements", "spawn_rngs", "build_estimator", "initial_belief", "uav_pose_at",
]
