import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import linear_structure as _structure_oracle
from vesselstate.errors import DomainError, MismatchedBankSizesError
from vesselstate.estimation import rk4_step
from vesselstate.vessel import BodyTwist, EulerPose, VesselParams, build_linear_system, nonlinear_derivative
from vesselstate.waves import (
    AugmentedNonlinearState,
    LinearWaveComponent,
    NonlinearLayout,
    NonlinearWaveBank,
    NonlinearWaveComponent,
    WaveSpectrumSample,
    amplitude_from_spectrum,
    bank_output,
    build_full_linear_system,
    build_linear_wave_bank,
    build_wave_output_matrix,
    full_nonlinear_derivative,
    linear_state_names,
    nonlinear_initial_state,
    nonlinear_wave_derivative,
    wave_elevation,
)


def _pendulum(gamma=0.0):
    def f(x):
        return np.array([x[1], -x[2] * math.sin(x[0]) - gamma * x[1], 0.0])
    return f


def _crossing_times(t, y):
    s = np.signbit(y)
    idx = np.nonzero(s[1:] != s[:-1])[0]
    # linear interpolation between samples
    return t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx])


def _bare_params():
    return VesselParams(mass=10.0, inertia=np.eye(3), added_mass=np.zeros((6, 6)),
                        damping=np.zeros((6, 6)))


# spectrum

def test_amplitude_examples():
    assert amplitude_from_spectrum(0.0, 0.3) == 0.0
    assert amplitude_from_spectrum(2.0, 0.25) == pytest.approx(1.0, rel=1e-15)
    assert amplitude_from_spectrum(0.7, 0.1) == pytest.approx(math.sqrt(0.14), rel=1e-15)


def test_amplitude_rejects_negative_density():
    with pytest.raises(DomainError):
        amplitude_from_spectrum(-1.0, 0.1)


def test_elevation_zero_spectrum():
    spec = WaveSpectrumSample([0.5, 1.0], [0.0, 0.0], [0.1, 0.1], [0.3, 1.0])
    np.testing.assert_array_equal(wave_elevation(spec, np.linspace(0, 10, 7)), 0.0)


def test_elevation_single_component():
    # A = 1 needs S * dw = 0.5
    spec = WaveSpectrumSample([2.0], [2.0], [0.25], [0.0])
    assert wave_elevation(spec, 0.0) == pytest.approx(1.0, rel=1e-15)


def test_elevation_matches_loop():
    freqs, dens, dw, eps = [0.6, 1.1, 1.9], [0.4, 0.9, 0.2], [0.2, 0.3, 0.25], [0.1, -2.0, 2.5]
    spec = WaveSpectrumSample(freqs, dens, dw, eps)
    total = 0.0
    for k in range(3):
        total += math.sqrt(2 * dens[k] * dw[k]) * math.cos(freqs[k] * 1.7 + eps[k])
    assert wave_elevation(spec, 1.7) == pytest.approx(total, rel=1e-14)


def test_spectrum_validation():
    with pytest.raises(DomainError):
        WaveSpectrumSample([1.0, 0.5], [1, 1], [0.1, 0.1], [0, 0])
    with pytest.raises(DomainError):
        WaveSpectrumSample([1.0], [1], [0.0], [0])
    with pytest.raises(DomainError):
        WaveSpectrumSample([1.0, 2.0], [1], [0.1], [0])


# nonlinear component

def test_component_equilibrium():
    assert nonlinear_wave_derivative(NonlinearWaveComponent(0.0, 0.0, 4.0)) == (0.0, 0.0, 0.0)


def test_component_quarter_phase():
    d = nonlinear_wave_derivative(NonlinearWaveComponent(math.pi / 2, 1.0, 4.0, gamma=0.5))
    assert d == pytest.approx((1.0, -4.5, 0.0), abs=1e-15)


def test_component_validation():
    with pytest.raises(DomainError):
        NonlinearWaveComponent(0.0, 0.0, -1.0)
    with pytest.raises(DomainError):
        NonlinearWaveComponent(0.0, 0.0, 1.0, gamma=-0.1)


def test_small_amplitude_period():
    omega = 1.3
    period = 2 * math.pi / omega
    dt = period / 200
    x = np.array([0.01, 0.0, omega ** 2])
    f = _pendulum()
    n = 200 * 50
    t = np.arange(n + 1) * dt
    y = np.empty(n + 1)
    y[0] = x[1]
    for k in range(n):
        x = rk4_step(f, x, dt)
        y[k + 1] = x[1]
    tc = _crossing_times(t, y)
    measured = 2 * (tc[-1] - tc[0]) / (len(tc) - 1)
    assert abs(measured - period) / period < 0.01


def test_pendulum_first_integral_conserved():
    omega = 1.1
    period = 2 * math.pi / omega
    dt = period / 200
    x = np.array([0.4, 0.0, omega ** 2])
    f = _pendulum()

    def energy(s):
        return 0.5 * s[1] ** 2 + s[2] * (1 - math.cos(s[0]))

    e0 = energy(x)
    drift = 0.0
    for _ in range(200 * 100):
        x = rk4_step(f, x, dt)
        drift = max(drift, abs(energy(x) - e0))
    assert drift / e0 < 1e-6


def test_damped_peaks_non_increasing():
    omega = 1.0
    dt = 2 * math.pi / omega / 200
    x = np.array([0.3, 0.0, omega ** 2])
    f = _pendulum(gamma=0.05)
    ys = []
    for _ in range(200 * 10):
        x = rk4_step(f, x, dt)
        ys.append(x[1])
    ys = np.array(ys)
    peaks = ys[1:-1][(ys[1:-1] > ys[:-2]) & (ys[1:-1] > ys[2:])]
    assert len(peaks) >= 8
    assert np.all(np.diff(peaks) <= 0)


def test_initial_state_amplitude_and_frequency():
    x1, x2, x3 = nonlinear_initial_state(0.2, 1.5, 0.0)
    assert (x1, x2, x3) == pytest.approx((0.2, 0.0, 2.25))
    _, x2, _ = nonlinear_initial_state(0.2, 1.5, math.pi / 2)
    assert x2 == pytest.approx(-0.3)


# banks

def test_bank_output_at_rest():
    bank = NonlinearWaveBank([NonlinearWaveComponent(0, 0, 1), NonlinearWaveComponent(0, 0, 2)])
    assert bank_output(bank) == 0.0


def test_bank_output_two_components():
    bank = NonlinearWaveBank([NonlinearWaveComponent(0, 0.3, 1), NonlinearWaveComponent(0, -0.1, 2)])
    assert bank_output(bank) == pytest.approx(0.2, abs=1e-15)


def test_bank_output_matches_loop(rng):
    comps = [NonlinearWaveComponent(*rng.normal(size=2), rng.uniform(0.5, 3)) for _ in range(5)]
    total = 0.0
    for c in comps:
        total += c.x2
    assert bank_output(NonlinearWaveBank(comps)) == pytest.approx(total, rel=1e-15)


def test_bank_needs_component():
    with pytest.raises(DomainError):
        NonlinearWaveBank([])


# full nonlinear model

def _random_state(rng, layout):
    x = rng.normal(scale=0.3, size=layout.dim)
    x[layout.frequency_indices] = rng.uniform(0.5, 4.0, size=layout.n_components)
    return x


def test_full_derivative_equilibrium(params):
    layout = NonlinearLayout((2, 2, 2, 2, 2, 2))
    x = np.zeros(layout.dim)
    x[layout.frequency_indices] = 1.0
    np.testing.assert_array_equal(full_nonlinear_derivative(x, params, layout), np.zeros(layout.dim))


def test_full_derivative_banks_at_rest(params):
    layout = NonlinearLayout((1, 0, 2, 1, 1, 0))
    x = np.zeros(layout.dim)
    x[:12] = [0.1, -0.2, 0.05, 0.02, -0.03, 0.4, 0.3, 0.1, -0.05, 0.01, 0.02, -0.03]
    x[layout.frequency_indices] = 2.0
    out = full_nonlinear_derivative(x, params, layout)
    np.testing.assert_array_equal(out[:12], nonlinear_derivative(x[:6], x[6:12], params))
    np.testing.assert_array_equal(out[12:], 0.0)


def test_full_derivative_superposition(params, rng):
    layout = NonlinearLayout((2, 1, 2, 3, 2, 1), rng.uniform(0, 0.2, size=11))
    x = _random_state(rng, layout)
    out = full_nonlinear_derivative(x, params, layout)
    vessel = nonlinear_derivative(x[:6], x[6:12], params)
    k = 12
    for axis, n in enumerate(layout.counts):
        wave_sum = 0.0
        for _ in range(n):
            c = NonlinearWaveComponent(*x[k:k + 3], gamma=layout.gammas[(k - 12) // 3])
            wave_sum += bank_output(NonlinearWaveBank([c]))
            assert out[k:k + 3] == pytest.approx(nonlinear_wave_derivative(c), abs=1e-14)
            k += 3
        assert out[6 + axis] == pytest.approx(vessel[6 + axis] + wave_sum, abs=1e-12)
    np.testing.assert_array_equal(out[:6], vessel[:6])


def test_full_derivative_from_typed_state(params):
    bank = NonlinearWaveBank([NonlinearWaveComponent(0.1, 0.2, 1.0, 0.1)])
    state = AugmentedNonlinearState(EulerPose(z=0.1), BodyTwist(p=0.2), (None, None, bank, None, bank, None))
    out = full_nonlinear_derivative(state, params)
    layout = state.layout()
    np.testing.assert_array_equal(out, full_nonlinear_derivative(state.as_array(), params, layout))


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=12, max_size=12))
def test_wave_part_independent_of_vessel(vessel_state):
    p = _bare_params()
    layout = NonlinearLayout((1, 1, 1, 1, 1, 1), np.full(6, 0.1))
    rng = np.random.default_rng(3)
    x = _random_state(rng, layout)
    base = full_nonlinear_derivative(x, p, layout)[12:]
    x[:12] = vessel_state
    np.testing.assert_array_equal(full_nonlinear_derivative(x, p, layout)[12:], base)


def test_layout_names_and_dim():
    layout = NonlinearLayout((2, 0, 1, 0, 0, 1))
    assert layout.dim == 12 + 12
    names = layout.state_names()
    assert len(names) == layout.dim
    assert names[12:15] == ["wave_u1_x1", "wave_u1_x2", "wave_u1_x3"]
    assert names[18] == "wave_w1_x1"
    assert layout.bank_slice(2) == slice(18, 21)


# linear components

def test_linear_bank_undamped():
    A, C = build_linear_wave_bank([(3.0, 0.0)])
    np.testing.assert_array_equal(A, [[0, 1], [-9, 0]])
    np.testing.assert_array_equal(C, [[0, 1]])
    ev = np.sort_complex(np.linalg.eigvals(A))
    np.testing.assert_allclose(ev, [-3j, 3j], atol=1e-12)


def test_linear_bank_two_components_block_diagonal():
    A, C = build_linear_wave_bank([(1.0, 0.1), LinearWaveComponent(2.0, 0.2)])
    assert A.shape == (4, 4)
    np.testing.assert_array_equal(A[:2, 2:], 0.0)
    np.testing.assert_array_equal(A[2:, :2], 0.0)
    np.testing.assert_array_equal(C, [[0, 1, 0, 1]])


def test_linear_bank_damped_row():
    A, _ = build_linear_wave_bank([(2.0, 0.1)])
    np.testing.assert_allclose(A[1], [-4.0, -0.4], rtol=1e-15)


def test_linear_bank_rejects_bad_frequency():
    with pytest.raises(DomainError):
        build_linear_wave_bank([(0.0, 0.1)])
    with pytest.raises(DomainError):
        LinearWaveComponent(-1.0)


def test_linear_component_invariant_conserved():
    w0 = 1.7
    A, _ = build_linear_wave_bank([(w0, 0.0)])
    dt = 2 * math.pi / w0 / 200
    x = np.array([0.3, 0.1])
    inv0 = w0 ** 2 * x[0] ** 2 + x[1] ** 2
    for _ in range(200 * 100):
        x = rk4_step(lambda s: A @ s, x, dt)
    assert abs(w0 ** 2 * x[0] ** 2 + x[1] ** 2 - inv0) / inv0 < 1e-6


# full linear model

@pytest.mark.parametrize("n_lc", [1, 2, 3])
def test_full_linear_matches_structure_oracle(params, n_lc):
    rng = np.random.default_rng(n_lc)
    banks = [[(rng.uniform(0.5, 2.5), rng.uniform(0, 0.3)) for _ in range(n_lc)] for _ in range(6)]
    A = build_full_linear_system(params, banks)
    assert A.shape == (12 + 12 * n_lc,) * 2
    np.testing.assert_array_equal(A, _structure_oracle(n_lc, build_linear_system(params), banks))


def test_full_linear_sparsity_single_component():
    p = _bare_params()
    banks = [[(1.0, 0.0)]] * 6
    A = build_full_linear_system(p, banks)
    expected = set()
    expected |= {(i, 6 + i) for i in range(6)}                      # kinematic identity
    expected |= {(6 + a, 12 + 2 * a + 1) for a in range(6)}         # output selectors
    expected |= {(12 + 2 * a, 13 + 2 * a) for a in range(6)}        # x1' = x2
    expected |= {(13 + 2 * a, 12 + 2 * a) for a in range(6)}        # x2' = -w0^2 x1
    assert set(zip(*np.nonzero(A))) == expected
    assert len(expected) == 24


def test_full_linear_output_block(params):
    banks = [[(1.0 + a, 0.1), (2.0, 0.0)] for a in range(6)]
    A = build_full_linear_system(params, banks)
    C = np.zeros((6, 24))
    for axis in range(6):
        C[axis, 4 * axis + 1] = 1.0
        C[axis, 4 * axis + 3] = 1.0
    np.testing.assert_array_equal(A[6:12, 12:], C)
    np.testing.assert_array_equal(build_wave_output_matrix(banks), C)


def test_full_linear_undamped_eigenvalues(params):
    omegas = [0.8, 1.1, 1.4, 1.7, 2.0, 2.3]
    banks = [[(w, 0.0)] for w in omegas]
    A = build_full_linear_system(params, banks)
    ev = np.linalg.eigvals(A[12:, 12:])
    for w in omegas:
        assert np.min(np.abs(ev - 1j * w)) < 1e-9
        assert np.min(np.abs(ev + 1j * w)) < 1e-9


def test_full_linear_mismatched_banks(params):
    with pytest.raises(MismatchedBankSizesError):
        build_full_linear_system(params, [[(1.0, 0.0)]] * 5 + [[(1.0, 0.0), (2.0, 0.0)]])
    with pytest.raises(MismatchedBankSizesError):
        build_full_linear_system(params, [[(1.0, 0.0)]] * 5)


def test_full_linear_empty_banks(params):
    with pytest.raises(MismatchedBankSizesError):
        build_full_linear_system(params, [[]] * 6)
    A = build_full_linear_system(params, [[]] * 6, allow_empty=True)
    np.testing.assert_array_equal(A, build_linear_system(params))


def test_linear_state_names():
    names = linear_state_names(2)
    assert len(names) == 36
    assert names[12:16] == ["wave_u1_x1", "wave_u1_x2", "wave_u2_x1", "wave_u2_x2"]
