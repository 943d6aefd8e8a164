import dataclasses
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lantest import _kernels_py, score, tsmodel
from lantest._backend import BACKEND
from lantest.errors import ConfigError, NonstationaryModel, ScaleNotPositive
from lantest.rng import derive_seed, make_rng
from lantest.tsmodel import (ar1_arch_model, ar_model, ex1, ex2, ex3, lag_matrix, residuals,
                             simulate_alternative, simulate_null)

GAUSS = score.NoiseSpec.gaussian()


def test_ar_validation():
    ar_model([0.5, 0.4]).validate()
    with pytest.raises(NonstationaryModel):
        ar_model([1.5]).validate()
    with pytest.raises(NonstationaryModel):
        ar_model([0.6, -0.5]).validate()


def test_arch_validation():
    ar1_arch_model(0.1, 0.5).validate()
    with pytest.raises(NonstationaryModel):
        ar1_arch_model(1.0, 0.5).validate()
    with pytest.raises(NonstationaryModel):
        ar1_arch_model(0.1, -1.0).validate()
    with pytest.raises(NonstationaryModel):
        ar1_arch_model(0.5, 0.8, "square").validate()
    with pytest.raises(ConfigError):
        ar1_arch_model(0.1, 0.5, "cubic")


def test_nonstationary_is_config_error():
    assert issubclass(NonstationaryModel, ConfigError)


def test_lag_matrix():
    Z = lag_matrix(np.array([1.0, 2.0, 3.0]), 2)
    np.testing.assert_array_equal(Z, [[0, 0], [1, 0], [2, 1]])


def test_builtin_directions():
    Z = np.array([[0.0, 0.0], [1.0, 2.0], [-2.0, 1.0]])
    np.testing.assert_allclose(ex1(0.5).G(Z), 3.0 / (1 + Z[:, 0] ** 2))
    np.testing.assert_array_equal(ex1(0.5).S(Z), np.zeros(3))
    np.testing.assert_allclose(ex2(0.4).S(Z), ex2(0.4).G(Z) / 4)
    np.testing.assert_allclose(ex3(0.25).G(Z), 2.0 / (1 + Z[:, 0] ** 2 + Z[:, 1] ** 2))
    np.testing.assert_allclose(ex3(0.25).S(Z), ex3(0.25).G(Z))
    odd = tsmodel.ex1_odd(1.0)
    np.testing.assert_allclose(odd.G(Z), 6 * Z[:, 0] / (1 + Z[:, 0] ** 2))


@pytest.mark.parametrize("model,alt", [
    (ar_model([0.1]), ex1(0.7)),
    (ar1_arch_model(0.1, 0.5), ex2(0.7)),
    (ar_model([0.2, 0.2]), ex3(0.3)),
])
def test_residual_identity_under_null(model, alt):
    path = simulate_null(model, GAUSS, 500, 100, make_rng(1), width=alt.lags)
    np.testing.assert_allclose(residuals(model, path), path.eps, atol=1e-12)


def test_alternative_with_zero_a_equals_null():
    model = ar1_arch_model(0.1, 0.5)
    p0 = simulate_null(model, GAUSS, 300, 50, make_rng(3))
    p1 = simulate_alternative(model, ex2(0.0), GAUSS, 300, 50, make_rng(3))
    np.testing.assert_array_equal(p0.y, p1.y)


@pytest.mark.parametrize("model,alt", [
    (ar_model([0.1]), ex1(0.9)),
    (ar1_arch_model(0.1, 0.5), ex2(0.9)),
    (ar1_arch_model(0.3, 0.4, "square"), ex2(0.5)),
    (ar_model([0.2, 0.2]), ex3(0.3)),
])
def test_kernel_matches_generic_recursion(model, alt):
    eps = score.sample(GAUSS, make_rng(9), 400)
    fast = simulate_alternative(model, alt, GAUSS, 300, 100, None, innovations=eps)
    slow_model = dataclasses.replace(model, kind="custom")
    slow = simulate_alternative(slow_model, alt, GAUSS, 300, 100, None, innovations=eps)
    assert slow.backend == "generic"
    np.testing.assert_allclose(fast.y, slow.y, rtol=1e-12, atol=1e-12)


@given(rho=st.floats(-0.9, 0.9), beta=st.floats(0.0, 2.0), b_kind=st.sampled_from([0, 1]),
       drift=st.floats(-1, 1), scale_amp=st.floats(-0.2, 0.2), g1=st.floats(-1, 1),
       lags=st.integers(0, 2), seed=st.integers(0, 2**32))
def test_backends_bit_identical(rho, beta, b_kind, drift, scale_amp, g1, lags, seed):
    if BACKEND != "cython":
        pytest.skip("compiled kernel not built")
    from lantest import _kernels
    if b_kind == 1:
        beta = min(beta, 0.9 * (1 - rho * rho))
    eps = make_rng(seed).standard_normal(200)
    args = (eps, np.array([rho, 0.05]), beta, b_kind, drift, scale_amp, 1.0, g1, lags)
    y_c, f_c = _kernels.ar_recursion(*args)
    y_p, f_p = _kernels_py.ar_recursion(*args)
    assert f_c == f_p
    upto = len(eps) if f_c < 0 else f_c
    assert np.array_equal(y_c[:upto], y_p[:upto])


def test_pure_python_env_switch():
    code = "from lantest._backend import BACKEND; print(BACKEND)"
    env = dict(os.environ, LANTEST_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"


def test_scale_failure_raises():
    # a large negative scale direction at tiny n drives the scale below zero
    alt = tsmodel.LocalAlternative("neg", 1.0, scale_coef=-200.0)
    with pytest.raises(ScaleNotPositive):
        simulate_alternative(ar_model([0.1]), alt, GAUSS, 10, 0, make_rng(0))


def test_simulation_deterministic():
    a = simulate_null(ar_model([0.1]), GAUSS, 200, 100, make_rng(derive_seed(1, 2)))
    b = simulate_null(ar_model([0.1]), GAUSS, 200, 100, make_rng(derive_seed(1, 2)))
    np.testing.assert_array_equal(a.y, b.y)
    assert a.n == 200 and a.z.shape == (200, 1)


def test_ar1_autocorrelation_oracle():
    # stationary AR(1): corr(Y_t, Y_{t-k}) = rho^k
    path = simulate_null(ar_model([0.6]), GAUSS, 200_000, 500, make_rng(4))
    y = path.y - path.y.mean()
    for k in (1, 2):
        acf = np.dot(y[k:], y[:-k]) / np.dot(y, y)
        assert acf == pytest.approx(0.6**k, abs=0.01)
    assert np.var(path.y) == pytest.approx(1 / (1 - 0.36), rel=0.02)


def test_arch_square_variance_oracle():
    # Y = rho Y_{-1} + sqrt(1 + beta Y_{-1}^2) eps  =>  Var Y = 1 / (1 - rho^2 - beta)
    model = ar1_arch_model(0.3, 0.3, "square")
    path = simulate_null(model, GAUSS, 400_000, 500, make_rng(8))
    assert np.var(path.y) == pytest.approx(1 / (1 - 0.09 - 0.3), rel=0.03)


def test_alternative_shifts_mean():
    # under Ex1 the conditional mean moves by h n^{-1/2} G(Z)
    n = 400
    model = ar_model([0.1])
    alt = ex1(0.5)
    eps = score.sample(GAUSS, make_rng(12), n + 50)
    path = simulate_alternative(model, alt, GAUSS, n, 50, None, innovations=eps)
    eps_hat = residuals(model, path) - alt.G(path.z) / math.sqrt(n)
    np.testing.assert_allclose(eps_hat, path.eps, atol=1e-12)


def test_innovations_length_checked():
    with pytest.raises(ValueError):
        simulate_null(ar_model([0.1]), GAUSS, 10, 5, None, innovations=np.zeros(3))


def test_params_and_split():
    m = ar1_arch_model(0.2, 0.5)
    np.testing.assert_array_equal(m.params, [0.2, 0.5])
    r, t = m.split([0.3, 0.4])
    assert r.tolist() == [0.3] and t.tolist() == [0.4]
    with pytest.raises(ValueError):
        m.split([1.0])


@given(st.floats(-3, 3), st.floats(0.0, 2.0))
def test_arch_scale_gradient(z, beta):
    m = ar1_arch_model(0.1, beta)
    Z = np.array([[z]])
    h = 1e-6
    fd = (m.scale_fn([beta + h], Z) - m.scale_fn([beta - h], Z)) / (2 * h)
    assert m.scale_grad([beta], Z)[0, 0] == pytest.approx(fd[0], abs=1e-8)
