import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from lantest import score
from lantest.errors import ConfigError
from lantest.rng import make_rng

GAUSS = score.NoiseSpec.gaussian()
DOFS = [4, 5, 6, 10, 30]


def student_i0(l):
    # standardized law: raw Fisher information (l+1)/(l+3) times l/(l-2)
    return (l + 1) / (l + 3) * l / (l - 2)


def test_gaussian_scores_closed_form():
    x = np.linspace(-5, 5, 11)
    sv = score.scores(GAUSS, x)
    np.testing.assert_array_equal(sv.m, -x)
    np.testing.assert_array_equal(sv.m_dot, -np.ones_like(x))
    np.testing.assert_array_equal(sv.n, 1 - x * x)
    np.testing.assert_array_equal(sv.n_dot, -2 * x)
    np.testing.assert_array_equal(sv.n_ddot, -2 * np.ones_like(x))


def test_scalar_input_gives_scalars():
    sv = score.scores(score.NoiseSpec.student(5), 0.3)
    assert all(isinstance(v, float) for v in (sv.m, sv.m_dot, sv.m_ddot, sv.n, sv.n_dot))


@pytest.mark.parametrize("spec", [GAUSS] + [score.NoiseSpec.student(l) for l in DOFS]
                         + [score.NoiseSpec.student(5, standardized=False)])
def test_scores_match_finite_differences(spec):
    x = np.linspace(-6, 6, 41)
    h = 1e-5
    sv = score.scores(spec, x)
    ld = lambda t: score.log_density(spec, t)
    m_fd = (ld(x + h) - ld(x - h)) / (2 * h)
    np.testing.assert_allclose(sv.m, m_fd, atol=1e-7)
    mdot_fd = (score.scores(spec, x + h).m - score.scores(spec, x - h).m) / (2 * h)
    np.testing.assert_allclose(sv.m_dot, mdot_fd, atol=1e-7)
    mddot_fd = (score.scores(spec, x + h).m_dot - score.scores(spec, x - h).m_dot) / (2 * h)
    np.testing.assert_allclose(sv.m_ddot, mddot_fd, atol=1e-6)


@pytest.mark.parametrize("l", DOFS)
def test_student_log_density_matches_scipy(l):
    spec = score.NoiseSpec.student(l)
    x = np.linspace(-8, 8, 33)
    s = spec.scale
    np.testing.assert_allclose(score.log_density(spec, x), stats.t.logpdf(x / s, l) - math.log(s),
                               rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("spec", [GAUSS, score.NoiseSpec.student(4), score.NoiseSpec.student(7)])
def test_density_normalized_and_unit_variance(spec):
    mass = integrate.quad(lambda t: score.density(spec, t), -np.inf, np.inf)[0]
    var = integrate.quad(lambda t: t * t * score.density(spec, t), -np.inf, np.inf)[0]
    assert mass == pytest.approx(1.0, abs=1e-9)
    assert var == pytest.approx(1.0, abs=1e-7)


def test_gaussian_moments_by_quadrature():
    mom = score.moments(GAUSS, method="quadrature")
    assert mom.converged
    expect = (1.0, 0.0, 3.0, 0.0, -1.0, 0.0)
    got = (mom.I0, mom.I1, mom.I2, mom.K0, mom.K1, mom.K2)
    np.testing.assert_allclose(got, expect, atol=1e-8)


@pytest.mark.parametrize("l", DOFS)
def test_student_moments_closed_forms(l):
    mom = score.moments(score.NoiseSpec.student(l))
    assert mom.I0 == pytest.approx(student_i0(l), rel=1e-8)
    # E[x^2 M^2] is invariant to rescaling the variate
    assert mom.I2 == pytest.approx((3 * l + 3) / (l + 3), abs=5e-8 if l > 4 else 2e-6)
    assert mom.K1 == pytest.approx(-1.0, abs=1e-6)
    assert mom.I1 == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("l", [4, 9])
def test_student_moments_against_adaptive_quadrature(l):
    spec = score.NoiseSpec.student(l)
    mom = score.moments(spec)

    def e(g):
        return integrate.quad(lambda t: g(t) * score.density(spec, t), -np.inf, np.inf,
                              limit=200)[0]

    m = lambda t: score.scores(spec, t).m
    assert mom.I0 == pytest.approx(e(lambda t: m(t) ** 2), abs=1e-7)
    assert mom.I2 == pytest.approx(e(lambda t: t * t * m(t) ** 2), abs=2e-6)


def test_halved_grid_self_consistency():
    spec = score.NoiseSpec.student(5)
    full = score.moments(spec)
    coarse = score.moments(spec, start_nodes=2049)
    assert abs(full.I0 - coarse.I0) < 1e-6
    assert abs(full.I2 - coarse.I2) < 1e-6


def test_i2_at_least_one():
    for spec in [GAUSS] + [score.NoiseSpec.student(l) for l in DOFS]:
        assert score.moments(spec).I2 >= 1.0


@pytest.mark.parametrize("dof", [3, 2, 4.5, None])
def test_invalid_dof_rejected(dof):
    with pytest.raises(ConfigError):
        score.NoiseSpec.student(dof)


def test_unknown_family_rejected():
    with pytest.raises(ConfigError):
        score.NoiseSpec("laplace")


def test_sampling_standardized_variance():
    rng = make_rng(5)
    x = score.sample(score.NoiseSpec.student(6), rng, 400_000)
    assert np.var(x) == pytest.approx(1.0, abs=0.03)


def test_sampling_deterministic():
    a = score.sample(GAUSS, make_rng(11), 5)
    b = score.sample(GAUSS, make_rng(11), 5)
    np.testing.assert_array_equal(a, b)


def test_location_scale_density():
    x = np.array([-1.0, 0.0, 2.5])
    np.testing.assert_allclose(score.location_scale_density(GAUSS, x, 0.5, 2.0),
                               stats.norm.pdf(x, 0.5, 2.0), rtol=1e-14)
    mass = integrate.quad(lambda t: score.location_scale_density(score.NoiseSpec.student(5),
                                                                 t, 1.0, 0.3), -np.inf, np.inf)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        score.location_scale_density(GAUSS, x, 0.0, 0.0)


def test_audit_gaussian_passes():
    rep = score.audit_regularity(GAUSS)
    assert rep.passed
    vals = [it.value for it in rep.items if it.name in score.FUNCTIONAL_NAMES]
    np.testing.assert_allclose(vals, [0, -1, 0, 0, 2], atol=1e-6)


@pytest.mark.parametrize("l", [4, 5, 8])
def test_audit_student_passes(l):
    rep = score.audit_regularity(score.NoiseSpec.student(l))
    assert rep.passed, rep.to_dict()


def test_student_bounds_values():
    b = score.student_bounds(5)
    assert b["sup|M_dot|"] == pytest.approx(1.8)
    assert b["sup|x M_ddot|"] == pytest.approx(16.8)
    # raw Student-t: sup |M_dot| is attained at 0 and equals (l+1)/l
    x = np.linspace(-50, 50, 100001)
    raw = score.scores(score.NoiseSpec.student(5, standardized=False), x)
    assert np.max(np.abs(raw.m_dot)) == pytest.approx(6 / 5)


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1, 6))
def test_power_mean_inequality(a, b, xi):
    lhs, rhs = score.power_mean_bound(a, b, xi)
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


@given(st.floats(-30, 30), st.sampled_from([GAUSS, score.NoiseSpec.student(5)]))
def test_scale_score_identity(x, spec):
    sv = score.scores(spec, x)
    assert sv.n == pytest.approx(1 + x * sv.m, abs=1e-12)
    assert sv.n_dot == pytest.approx(sv.m + x * sv.m_dot, abs=1e-12)
