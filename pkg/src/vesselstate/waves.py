"""Wave elevation synthesis and wave-forced vessel models.

Each body-velocity channel ``u, v, w, p, q, r`` is driven by a bank of
oscillator components whose summed output is an additive acceleration on
that channel. The nonlinear component is a damped pendulum with the squared
frequency carried as a (constant) state; the linear component is a damped
harmonic oscillator.

Nonlinear augmented state layout::

    (eta[6], nu[6], bank_u, bank_v, bank_w, bank_p, bank_q, bank_r)

where every bank is ``(x1, x2, x3)`` per component, in order.

Linear augmented state layout::

    (eta_L[6], nu[6], bank_u, ..., bank_r)

with ``(x1, x2)`` per component and the same number of components per axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .errors import DomainError, MismatchedBankSizesError
from .vessel import (
    BodyTwist,
    EulerPose,
    VesselParams,
    build_linear_system,
    nonlinear_derivative,
)

AXES = ("u", "v", "w", "p", "q", "r")


@dataclass(frozen=True)
class NonlinearWaveComponent:
    """One pendulum-type wave oscillator.

    ``x1`` phase state, ``x2`` output (acceleration forcing), ``x3`` squared
    angular frequency, ``gamma`` damping (1/s).
    """

    x1: float
    x2: float
    x3: float
    gamma: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.x1, self.x2, self.x3, self.gamma])):
            raise DomainError("wave component fields must be finite")
        if self.x3 < 0:
            raise DomainError(f"x3 (squared frequency) must be >= 0, got {self.x3}")
        if self.gamma < 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.x1, self.x2, self.x3])


@dataclass(frozen=True)
class NonlinearWaveBank:
    components: tuple[NonlinearWaveComponent, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) < 1:
            raise DomainError("a wave bank needs at least one component")

    def __len__(self):
        return len(self.components)


@dataclass(frozen=True)
class LinearWaveComponent:
    omega0: float
    lam: float = 0.0
    x1: float = 0.0
    x2: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.omega0) and self.omega0 > 0):
            raise DomainError(f"omega0 must be > 0, got {self.omega0}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise DomainError(f"damping ratio must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class WaveSpectrumSample:
    """Tabulated spectrum: frequencies (rad/s), densities (m^2 s), spacing, phases."""

    frequencies: NDArray[np.float64]
    densities: NDArray[np.float64]
    spacing: NDArray[np.float64]
    phases: NDArray[np.float64]

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(a, dtype=float)) for a in
                  (self.frequencies, self.densities, self.spacing, self.phases)]
        n = arrays[0].size
        if any(a.ndim != 1 or a.size != n for a in arrays):
            raise DomainError("spectrum arrays must be 1-D with equal lengths")
        freq, dens, dw, _ = arrays
        if n > 1 and np.any(np.diff(freq) <= 0):
            raise DomainError("frequencies must be strictly increasing")
        if np.any(dens < 0):
            raise DomainError("spectral densities must be >= 0")
        if np.any(dw <= 0):
            raise DomainError("frequency spacing must be > 0")
        for name, a in zip(("frequencies", "densities", "spacing", "phases"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def amplitudes(self) -> NDArray[np.float64]:
        return amplitude_from_spectrum(self.densities, self.spacing)


def amplitude_from_spectrum(density, spacing):
    """Component amplitude from ``A^2 / 2 = S(omega) * d_omega``."""
    density = np.asarray(density, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    if np.any(density < 0):
        raise DomainError("spectral density must be non-negative")
    if np.any(spacing <= 0):
        raise DomainError("frequency spacing must be positive")
    out = np.sqrt(2.0 * density * spacing)
    return float(out) if out.ndim == 0 else out


def wave_elevation(spectrum: WaveSpectrumSample, t) -> float:
    """Surface elevation as a sum of harmonics at time ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    amps = spectrum.amplitudes
    phase = np.multiply.outer(t, spectrum.frequencies) + spectrum.phases
    out = np.cos(phase) @ amps
    return float(out) if out.ndim == 0 else out


def nonlinear_wave_derivative(c: NonlinearWaveComponent) -> tuple[float, float, float]:
    """``(x2, -x3 sin(x1) - gamma x2, 0)``."""
    return c.x2, -c.x3 * math.sin(c.x1) - c.gamma * c.x2, 0.0


def bank_output(bank: NonlinearWaveBank) -> float:
    """Summed output (``x2``) of every component in the bank."""
    return float(sum(c.x2 for c in bank.components))


@dataclass(frozen=True)
class NonlinearLayout:
    """Index bookkeeping for the wave-augmented nonlinear state.

    Parameters
    ----------
    counts : sequence of 6 int
        Number of components per axis ``u, v, w, p, q, r`` (zero allowed).
    gammas : array_like
        Damping term per component, concatenated in axis order.
    """

    counts: tuple[int, ...]
    gammas: NDArray[np.float64] = field(default=None)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 6 or any(c < 0 for c in counts):
            raise DomainError("counts must be six non-negative integers")
        object.__setattr__(self, "counts", counts)
        g = np.zeros(sum(counts)) if self.gammas is None else np.array(self.gammas, dtype=float)
        if g.shape != (sum(counts),) or np.any(g < 0):
            raise DomainError("gammas must hold one non-negative value per component")
        g.setflags(write=False)
        object.__setattr__(self, "gammas", g)

    @property
    def n_components(self) -> int:
        return sum(self.counts)

    @property
    def dim(self) -> int:
        return 12 + 3 * self.n_components

    def bank_slice(self, axis: int) -> slice:
        start = 12 + 3 * sum(self.counts[:axis])
        return slice(start, start + 3 * self.counts[axis])

    @property
    def frequency_indices(self) -> NDArray[np.intp]:
        return 12 + 3 * np.arange(self.n_components) + 2

    @property
    def output_indices(self) -> NDArray[np.intp]:
        return 12 + 3 * np.arange(self.n_components) + 1

    @property
    def angle_indices(self) -> tuple[int, ...]:
        return (3, 4, 5)

    def state_names(self) -> list[str]:
        names = ["x", "y", "z", "phi", "theta", "psi", "u", "v", "w", "p", "q", "r"]
        for axis, n in zip(AXES, self.counts):
            for k in range(1, n + 1):
                names += [f"wave_{axis}{k}_x1", f"wave_{axis}{k}_x2", f"wave_{axis}{k}_x3"]
        return names


@dataclass(frozen=True)
class AugmentedNonlinearState:
    pose: EulerPose
    twist: BodyTwist
    banks: tuple[NonlinearWaveBank | None, ...]

    def layout(self) -> NonlinearLayout:
        counts = [0 if b is None else len(b) for b in self.banks]
        gammas = [c.gamma for b in self.banks if b is not None for c in b.components]
        return NonlinearLayout(tuple(counts), np.array(gammas))

    def as_array(self) -> NDArray[np.float64]:
        parts = [self.pose.as_array(), self.twist.as_array()]
        for b in self.banks:
            if b is not None:
                parts.extend(c.as_array() for c in b.components)
        return np.concatenate(parts)


def _bank_outputs(x: NDArray[np.float64], layout: NonlinearLayout) -> NDArray[np.float64]:
    nu_wave = np.zeros(6)
    for axis in range(6):
        sl = x[layout.bank_slice(axis)]
        nu_wave[axis] = sl[1::3].sum()
    return nu_wave


def full_nonlinear_derivative(state, params: VesselParams, layout: NonlinearLayout | None = None):
    """Derivative of the wave-augmented nonlinear model.

    ``state`` is an :class:`AugmentedNonlinearState` or a flat array laid out
    per ``layout``. Twist derivative gains the six bank outputs; banks evolve
    independently of the vessel.
    """
    if isinstance(state, AugmentedNonlinearState):
        layout = state.layout()
        x = state.as_array()
    else:
        if layout is None:
            raise DomainError("a flat state needs a NonlinearLayout")
        x = np.asarray(state, dtype=float)
    if x.shape != (layout.dim,):
        raise DomainError(f"state has shape {x.shape}, layout expects ({layout.dim},)")

    out = np.empty_like(x)
    out[:12] = nonlinear_derivative(x[:6], x[6:12], params)
    out[6:12] += _bank_outputs(x, layout)
    w = x[12:].reshape(-1, 3)
    dw = out[12:].reshape(-1, 3)
    dw[:, 0] = w[:, 1]
    dw[:, 1] = -w[:, 2] * np.sin(w[:, 0]) - layout.gammas * w[:, 1]
    dw[:, 2] = 0.0
    return out


def linear_component_matrices(omega0: float, lam: float):
    """Return ``(A, C)`` of one linear wave component."""
    if not (math.isfinite(omega0) and omega0 > 0):
        raise DomainError(f"omega0 must be > 0, got {omega0}")
    A = np.array([[0.0, 1.0], [-omega0 ** 2, -2.0 * lam * omega0]])
    C = np.array([[0.0, 1.0]])
    return A, C


def build_linear_wave_bank(components: Sequence) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Block-diagonal ``A_wave_L`` and concatenated ``C_wave_L`` for one axis.

    ``components`` holds ``(omega0, lambda)`` pairs or :class:`LinearWaveComponent`.
    """
    pairs = [(c.omega0, c.lam) if isinstance(c, LinearWaveComponent) else tuple(c)
             for c in components]
    if not pairs:
        return np.zeros((0, 0)), np.zeros((1, 0))
    mats = [linear_component_matrices(w0, lam) for w0, lam in pairs]
    A = linalg.block_diag(*[m[0] for m in mats])
    C = np.hstack([m[1] for m in mats])
    return A, C


def build_wave_output_matrix(banks: Sequence[Sequence]) -> NDArray[np.float64]:
    """``C_wave,nu``: routes each axis's bank output into one twist row (6 x 12 N_lc)."""
    n = _uniform_count(banks)
    C = np.zeros((6, 12 * n))
    for axis, bank in enumerate(banks):
        _, Cb = build_linear_wave_bank(bank)
        C[axis, 2 * n * axis: 2 * n * (axis + 1)] = Cb
    return C


def _uniform_count(banks: Sequence[Sequence]) -> int:
    if len(banks) != 6:
        raise MismatchedBankSizesError(f"need six wave banks, got {len(banks)}")
    counts = {len(b) for b in banks}
    if len(counts) != 1:
        raise MismatchedBankSizesError(f"all banks need the same component count, got {sorted(counts)}")
    return counts.pop()


def build_full_linear_system(
    params: VesselParams, banks: Sequence[Sequence], allow_empty: bool = False
) -> NDArray[np.float64]:
    """Wave-augmented LTI matrix ``A_L,usv`` of dimension ``12 + 12 N_lc``.

    Parameters
    ----------
    params : VesselParams
    banks : sequence of 6 sequences
        ``(omega0, lambda)`` pairs per axis, equal length per axis.
    allow_empty : bool
        If true, ``N_lc = 0`` returns the 12x12 vessel-only matrix instead of
        raising.
    """
    n = _uniform_count(banks)
    if n == 0:
        if allow_empty:
            return build_linear_system(params)
        raise MismatchedBankSizesError("wave banks are empty (N_lc = 0)")
    dim = 12 + 12 * n
    A = np.zeros((dim, dim))
    A[:12, :12] = build_linear_system(params)
    A[6:12, 12:] = build_wave_output_matrix(banks)
    A[12:, 12:] = linalg.block_diag(*[build_linear_wave_bank(b)[0] for b in banks])
    return A


def linear_state_names(n_lc: int) -> list[str]:
    names = ["x", "y", "z", "phi", "theta", "psi", "u", "v", "w", "p", "q", "r"]
    for axis in AXES:
        for k in range(1, n_lc + 1):
            names += [f"wave_{axis}{k}_x1", f"wave_{axis}{k}_x2"]
    return names


def nonlinear_initial_state(amplitude: float, omega: float, phase: float) -> tuple[float, float, float]:
    """Initial ``(x1, x2, x3)`` of a pendulum component.

    ``amplitude`` is the desired velocity-level oscillation amplitude; the
    output ``x2`` then oscillates with amplitude ``amplitude * omega``.
    """
    return (amplitude * math.cos(phase), -amplitude * omega * math.sin(phase), omega ** 2)


def linear_initial_state(amplitude: float, omega: float, phase: float) -> tuple[float, float]:
    return (amplitude * math.cos(phase), -amplitude * omega * math.sin(phase))
