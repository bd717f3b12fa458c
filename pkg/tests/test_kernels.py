import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vesselstate import kernels
from vesselstate.errors import SingularityError
from vesselstate.estimation import rk4_step
from vesselstate.waves import NonlinearLayout, full_nonlinear_derivative

BACKENDS = sorted(kernels.BACKENDS)
LAYOUT = NonlinearLayout((2, 2, 2, 2, 2, 2), np.linspace(0.0, 0.1, 12))


def _states(rng, n, layout=LAYOUT, scale=0.3):
    X = rng.normal(scale=scale, size=(n, layout.dim))
    X[:, 4] = np.clip(X[:, 4], -1.2, 1.2)
    X[:, layout.frequency_indices] = rng.uniform(0.5, 4.0, size=(n, layout.n_components))
    return X


def test_compiled_backend_available():
    # the build ships the extension; the fallback is still importable on its own
    assert "python" in kernels.BACKENDS
    assert "cython" in kernels.BACKENDS


@pytest.mark.parametrize("backend", BACKENDS)
def test_derivative_matches_reference(params, rng, backend):
    model = kernels.KernelModel.from_params(params, LAYOUT)
    X = _states(rng, 15)
    out = kernels.derivative_batch(X, model, backend)
    for x, d in zip(X, out):
        np.testing.assert_allclose(d, full_nonlinear_derivative(x, params, LAYOUT), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_rk4_matches_reference(params, rng, backend):
    model = kernels.KernelModel.from_params(params, LAYOUT)
    X = _states(rng, 4)
    out = kernels.rk4_batch(X, 0.01, model, nsub=3, backend=backend)
    for x, y in zip(X, out):
        ref = x
        for _ in range(3):
            ref = rk4_step(lambda s: full_nonlinear_derivative(s, params, LAYOUT), ref, 0.01)
        np.testing.assert_allclose(y, ref, rtol=1e-12, atol=1e-13)


@given(st.integers(0, 2 ** 31), st.integers(1, 5))
def test_backends_agree(seed, nsub):
    from vesselstate.vessel import default_vessel_params

    model = kernels.KernelModel.from_params(default_vessel_params(), LAYOUT)
    X = _states(np.random.default_rng(seed), 7)
    a = kernels.rk4_batch(X, 0.02, model, nsub, backend="python")
    b = kernels.rk4_batch(X, 0.02, model, nsub, backend="cython")
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("backend", BACKENDS)
def test_rk4_does_not_mutate_input(params, rng, backend):
    model = kernels.KernelModel.from_params(params, LAYOUT)
    X = _states(rng, 3)
    X0 = X.copy()
    kernels.rk4_batch(X, 0.02, model, backend=backend)
    np.testing.assert_array_equal(X, X0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_singularity_raised(params, backend):
    model = kernels.KernelModel.from_params(params, LAYOUT)
    X = np.zeros((2, LAYOUT.dim))
    X[1, 4] = np.pi / 2
    with pytest.raises(SingularityError):
        kernels.derivative_batch(X, model, backend)
    with pytest.raises(SingularityError):
        kernels.rk4_batch(X, 0.01, model, backend=backend)


@pytest.mark.parametrize("backend", BACKENDS)
def test_no_wave_layout(params, backend):
    layout = NonlinearLayout((0, 0, 0, 0, 0, 0))
    model = kernels.KernelModel.from_params(params, layout)
    X = np.zeros((1, 12))
    X[0, 2] = 0.1
    out = kernels.derivative_batch(X, model, backend)
    np.testing.assert_allclose(out[0], full_nonlinear_derivative(X[0], params, layout), atol=1e-14)


def test_dimension_checked(params):
    model = kernels.KernelModel.from_params(params, LAYOUT)
    with pytest.raises(ValueError):
        kernels.derivative_batch(np.zeros((1, 12)), model)


def test_env_forces_fallback():
    code = "import vesselstate.kernels as k; print(k.BACKEND, sorted(k.BACKENDS))"
    env = dict(os.environ, VESSELSTATE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split()[0] == "python"
    assert "cython" not in out.stdout
