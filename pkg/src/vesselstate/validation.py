"""Estimate accuracy and innovation consistency checks.

Three innovation tests are provided:

1. magnitude bound: share of scalar innovations inside ``+-2 sqrt(S_ii)``;
2. normalized innovation squared: ``N * mean(zeta' S^-1 zeta)`` against the
   central chi-square interval with ``N m`` degrees of freedom;
3. whiteness: share of normalized time-averaged autocorrelations inside
   ``+-2 / sqrt(N)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .chi2 import chi2_interval
from .errors import (
    CovarianceNotPDError,
    DimensionMismatchError,
    EmptyInputError,
    InsufficientDataError,
    LengthMismatchError,
    ZeroEnergyError,
)

DEFAULT_ALPHA = 0.05
DEFAULT_MAX_LAG = 200

#: Channel groups used for reporting, per sensor.
SENSOR_GROUPS: dict[str, dict[str, tuple[int, ...]]] = {
    "GPS": {"position": (0, 1, 2)},
    "IMU": {"orientation": (0, 1, 2), "rates": (3, 4, 5)},
    "UVDAR": {"position": (0, 1, 2), "orientation": (3, 4, 5)},
    "APRILTAG": {"position": (0, 1, 2), "orientation": (3, 4, 5)},
}

#: State groups for RMSE, as (name, indices, angular).
STATE_GROUPS: tuple[tuple[str, tuple[int, ...], bool], ...] = (
    ("xyz", (0, 1, 2), False),
    ("angles", (3, 4, 5), True),
    ("uvw", (6, 7, 8), False),
    ("pqr", (9, 10, 11), False),
)


@dataclass(frozen=True)
class InnovationRecord:
    """Innovation ``zeta = y - y_hat`` and the covariance ``S`` used in the gain."""

    t: float
    sensor: str
    innovation: NDArray[np.float64]
    covariance: NDArray[np.float64]

    def __post_init__(self):
        z = np.array(self.innovation, dtype=float).ravel()
        S = np.array(self.covariance, dtype=float)
        if S.shape != (z.size, z.size):
            raise DimensionMismatchError(
                f"innovation has {z.size} entries but covariance is {S.shape}"
            )
        if not np.allclose(S, S.T, rtol=1e-9, atol=1e-300):
            raise CovarianceNotPDError("innovation covariance is not symmetric")
        z.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "innovation", z)
        object.__setattr__(self, "covariance", S)

    @property
    def m(self) -> int:
        return self.innovation.size

    def subset(self, idx: Sequence[int]) -> InnovationRecord:
        """Marginal record over channels ``idx``."""
        idx = np.asarray(idx)
        return InnovationRecord(
            self.t, self.sensor, self.innovation[idx], self.covariance[np.ix_(idx, idx)]
        )


@dataclass(frozen=True)
class TestReport:
    """Outcome of the three innovation tests for one sensor channel group."""

    __test__ = False  # not a pytest class

    sensor: str
    group: str
    test1_frac: float
    test2_qbar: float
    test2_r1: float
    test2_r2: float
    test2_pass: bool
    test3_frac: float
    n: int
    m: int
    alpha: float

    @property
    def test2_nqbar(self) -> float:
        """``N * qbar``, the statistic compared against raw chi-square quantiles."""
        return self.n * self.test2_qbar

    def passes(self, test1_range=(0.92, 0.98), test3_min=0.93) -> bool:
        lo, hi = test1_range
        return lo <= self.test1_frac <= hi and self.test2_pass and self.test3_frac >= test3_min


def _stack(records: Sequence[InnovationRecord]):
    if len(records) == 0:
        raise EmptyInputError("no innovation records")
    dims = {r.m for r in records}
    if len(dims) != 1:
        raise DimensionMismatchError(f"records have mixed dimensions {sorted(dims)}")
    Z = np.stack([r.innovation for r in records])
    S = np.stack([r.covariance for r in records])
    return Z, S


def vector_rmse(estimates: ArrayLike, truth: ArrayLike, angular: bool | Sequence[bool] = False) -> float:
    """Root mean squared Euclidean error between two aligned series.

    Parameters
    ----------
    estimates, truth : (N, k) array_like
        Aligned series (1-D input is treated as ``k = 1``).
    angular : bool or sequence of bool
        Channels whose differences are wrapped to (-pi, pi].
    """
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.ndim == 1:
        e = e[:, None]
    if t.ndim == 1:
        t = t[:, None]
    if e.shape != t.shape:
        raise LengthMismatchError(f"estimates {e.shape} and truth {t.shape} differ")
    if e.shape[0] < 1:
        raise LengthMismatchError("need at least one sample")
    d = e - t
    mask = np.broadcast_to(np.asarray(angular, dtype=bool), (d.shape[1],))
    if mask.any():
        d[:, mask] = np.pi - np.mod(np.pi - d[:, mask], 2.0 * np.pi)
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def test1_magnitude(records: Sequence[InnovationRecord]) -> float:
    """Share of scalar innovations within two standard deviations, averaged over channels."""
    Z, S = _stack(records)
    sd = np.sqrt(np.einsum("kii->ki", S))
    inside = np.abs(Z) <= 2.0 * sd
    return float(inside.mean(axis=0).mean())


def nis_values(records: Sequence[InnovationRecord]) -> NDArray[np.float64]:
    """Normalized innovation squared ``zeta' S^-1 zeta`` per record."""
    Z, S = _stack(records)
    q = np.empty(len(Z))
    for k, (z, s) in enumerate(zip(Z, S)):
        try:
            c = linalg.cho_factor(s, lower=True)
        except linalg.LinAlgError as exc:
            raise CovarianceNotPDError(f"innovation covariance {k} is not positive definite") from exc
        q[k] = z @ linalg.cho_solve(c, z)
    return q


def test2_nis(records: Sequence[InnovationRecord], alpha: float = DEFAULT_ALPHA):
    """Mean NIS and its acceptance interval.

    Returns
    -------
    qbar : float
    r1, r2 : float
        Central ``1 - alpha`` chi-square interval for ``N m`` degrees of
        freedom, divided by ``N`` so it applies to ``qbar`` directly.
    passed : bool
    """
    q = nis_values(records)
    n, m = len(q), records[0].m
    lo, hi = chi2_interval(n * m, alpha)
    qbar = float(q.mean())
    r1, r2 = lo / n, hi / n
    return qbar, r1, r2, bool(r1 <= qbar <= r2)


def autocorrelation(records: Sequence[InnovationRecord], max_lag: int) -> NDArray[np.float64]:
    """``corr(tau) / corr(0)`` for ``tau = 1 .. max_lag``."""
    Z, _ = _stack(records)
    n = len(Z)
    if max_lag < 1 or n <= max_lag:
        raise InsufficientDataError(f"need more than {max_lag} records, got {n}")
    c0 = np.sum(Z * Z) / n
    if c0 == 0:
        raise ZeroEnergyError("innovation sequence has zero energy")
    return np.array([np.sum(Z[:-tau] * Z[tau:]) / n for tau in range(1, max_lag + 1)]) / c0


def test3_whiteness(records: Sequence[InnovationRecord], max_lag: int | None = None) -> float:
    """Share of normalized autocorrelations inside ``+-2/sqrt(N)``."""
    n = len(records)
    if max_lag is None:
        max_lag = min(n - 1, DEFAULT_MAX_LAG)
    corr = autocorrelation(records, max_lag)
    return float(np.mean(np.abs(corr) <= 2.0 / np.sqrt(n)))


# keep pytest from collecting these when they are imported into test modules
test1_magnitude.__test__ = test2_nis.__test__ = test3_whiteness.__test__ = False


def evaluate_group(records: Sequence[InnovationRecord], sensor: str, group: str,
                   alpha: float = DEFAULT_ALPHA, max_lag: int | None = None) -> TestReport:
    qbar, r1, r2, ok = test2_nis(records, alpha)
    return TestReport(
        sensor=sensor,
        group=group,
        test1_frac=test1_magnitude(records),
        test2_qbar=qbar,
        test2_r1=r1,
        test2_r2=r2,
        test2_pass=ok,
        test3_frac=test3_whiteness(records, max_lag),
        n=len(records),
        m=records[0].m,
        alpha=alpha,
    )


def evaluate_innovations(records: Iterable[InnovationRecord], alpha: float = DEFAULT_ALPHA,
                         max_lag: int | None = None, t_min: float = -np.inf,
                         groups: dict | None = None) -> list[TestReport]:
    """Split records by sensor and channel group and run all three tests.

    Records older than ``t_min`` are ignored (filter burn-in). Groups with
    fewer than three records are skipped.
    """
    groups = SENSOR_GROUPS if groups is None else groups
    by_sensor: dict[str, list[InnovationRecord]] = {}
    for r in records:
        if r.t >= t_min:
            by_sensor.setdefault(r.sensor, []).append(r)
    reports = []
    for sensor in groups:
        recs = by_sensor.get(sensor, [])
        for group, idx in groups[sensor].items():
            if len(recs) < 3:
                continue
            sub = [r.subset(idx) for r in recs]
            reports.append(evaluate_group(sub, sensor, group, alpha, max_lag))
    return reports
