import math

import numpy as np
import pytest
from scipy import special

from gbe_transfer.asymptotics import (
    AI0,
    airy_ai,
    airy_regime_ratio,
    chebyshev_coeffs,
    clt_prediction,
    g_closed_form,
    g_function,
    hermite_zero_identity,
    hermite_zeros,
    log_factorial_ratio,
    log_plancherel_rotach,
    m_functional,
    named_function,
    plancherel_rotach_ratio,
    semicircle_integral,
    sturm_count,
    tridiag_eigenvalues,
)
from gbe_transfer.errors import CutViolationError, DomainError, RangeGuardError
from gbe_transfer.sampling import EnsembleConfig, TridiagonalModel, sample_model
from gbe_transfer.transfer import lambda_pm


def dense(model, beta):
    d, e2 = model.scaled(beta)
    a = np.diag(d)
    off = np.sqrt(e2)
    return a + np.diag(off, 1) + np.diag(off, -1)


# --- eigensolver ----------------------------------------------------------


def test_single_eigenvalue():
    m = TridiagonalModel(np.array([1.7]), np.array([]))
    r = tridiag_eigenvalues(m, 2.0)
    assert abs(r.eigenvalues[0] - 1.7 / (2 * math.sqrt(2.0))) < 1e-12  # solver tolerance


def test_two_by_two_closed_form():
    m = TridiagonalModel(np.array([0.4, -1.1]), np.array([1.3]))
    d, e2 = m.scaled(2.0)
    c, h = 0.5 * (d[0] + d[1]), 0.5 * (d[0] - d[1])
    r = math.sqrt(h * h + e2[0])
    got = tridiag_eigenvalues(m, 2.0).eigenvalues
    np.testing.assert_allclose(np.sort(got), [c - r, c + r], atol=1e-13)


@pytest.mark.parametrize("n", [2, 3, 40])
def test_sturm_count_matches_dense(n):
    m = sample_model(EnsembleConfig(n, 1.0, 9))
    ev = np.linalg.eigvalsh(dense(m, 1.0))
    for x in np.linspace(-1.5, 1.5, 31):
        assert sturm_count(m, 1.0, x) == int(np.sum(ev < x))


@pytest.mark.parametrize("beta", [1.0, 2.0, 4.0])
def test_eigenvalues_match_dense_solver(beta):
    m = sample_model(EnsembleConfig(150, beta, 2))
    r = tridiag_eigenvalues(m, beta)
    ev = np.linalg.eigvalsh(dense(m, beta))
    assert np.max(np.abs(np.sort(r.eigenvalues) - ev)) < 1e-11
    assert r.residual < 1e-10


def test_sign_changes_between_eigenvalues():
    # the characteristic polynomial of the leading block alternates between zeros
    m = sample_model(EnsembleConfig(30, 2.0, 4))
    ev = np.sort(tridiag_eigenvalues(m, 2.0).eigenvalues)
    mids = 0.5 * (ev[1:] + ev[:-1])
    counts = [sturm_count(m, 2.0, x) for x in mids]
    assert counts == list(range(1, 30))


# --- g-function -----------------------------------------------------------


@pytest.mark.parametrize("z", [2.0, 1.5 + 0.5j, -1.3 + 0.2j, 0.3j, -3.0])
def test_g_matches_closed_form(z):
    assert abs(g_function(z).g_value - g_closed_form(z)) < 1e-12


@pytest.mark.parametrize("z,t", [(2.0, 1.0), (1.2 + 0.3j, 0.6), (-0.8 + 0.1j, 0.5)])
def test_g_derivative_is_four_lambda_minus(z, t):
    h = 1e-5

    def total(w):
        return t * g_function(w, t).g_value

    fd = (total(z + h) - total(z - h)) / (2 * h)
    lam_minus = lambda_pm(z, t)[1]
    assert abs(fd - 4 * lam_minus) <= 1e-6 * max(1.0, abs(lam_minus))


def test_g_large_z_limit():
    for z in [1e3, 1e5j, -1e4]:
        assert abs(g_function(z).g_value - np.log(complex(z))) < 1e-5


@pytest.mark.parametrize("z,t", [(2.0, 0.3), (0.9 + 0.4j, 0.7)])
def test_g_time_scaling(z, t):
    lhs = g_function(z, t).g_value
    rhs = g_function(z / math.sqrt(t)).g_value + 0.5 * math.log(t)
    assert abs(lhs - rhs) < 1e-12


def test_g_quadrature_is_converged():
    for z in [1.0001, 1.5 + 0.01j, 2.0]:
        a = g_function(z, order=20).g_value
        b = g_function(z, order=40).g_value
        assert abs(a - b) <= 1e-9


def test_g_rejects_cut():
    with pytest.raises(CutViolationError):
        g_function(0.5)
    with pytest.raises(ValueError):
        g_function(2.0, t=0.0)


# --- Plancherel-Rotach ----------------------------------------------------


def test_prefactor_tends_to_one():
    ge = g_function(1e4)
    assert abs(0.5 * (ge.gamma_value + 1 / ge.gamma_value) - 1) < 1e-7


def test_plancherel_rotach_error_shrinks():
    errs = [abs(plancherel_rotach_ratio(n // 2, n, 2.0) - 1) for n in (200, 400, 800)]
    assert errs[0] < 1e-4
    assert 0.3 < errs[1] / errs[0] < 0.7 and 0.3 < errs[2] / errs[1] < 0.7


def test_plancherel_rotach_consecutive_orders():
    # log PR_n - log PR_{n-1} approximates log lambda_+ at t = n / N
    n, big = 300, 1200
    step = log_plancherel_rotach(n, big, 2.0) - log_plancherel_rotach(n - 1, big, 2.0)
    assert abs(step - np.log(lambda_pm(2.0, n / big)[0])) < 1e-3


def test_plancherel_rotach_needs_hyperbolic_regime():
    with pytest.raises(DomainError):
        log_plancherel_rotach(400, 100, 2.0)


# --- Airy -----------------------------------------------------------------


def test_airy_at_zero():
    assert abs(airy_ai(0.0) - AI0) < 1e-16
    assert abs(AI0 - 0.355028053887817) < 1e-15


def test_airy_against_scipy():
    xs = np.linspace(-8, 8, 161)
    err = max(abs(airy_ai(x) - special.airy(x)[0]) for x in xs)
    assert err < 1e-9


def test_airy_decreasing_on_positive_axis():
    vals = [airy_ai(x) for x in np.linspace(0, 2, 41)]
    assert np.all(np.diff(vals) < 0)


def test_airy_first_zero():
    a1 = -2.338107410459767
    assert abs(airy_ai(a1)) < 1e-12
    assert airy_ai(a1 - 0.01) * airy_ai(a1 + 0.01) < 0


def test_airy_range_guard():
    with pytest.raises(RangeGuardError):
        airy_ai(8.5)


@pytest.mark.parametrize("n,big", [(1, 5), (10, 10), (30, 12)])
def test_log_factorial_ratio(n, big):
    direct = 0.5 * sum(math.log(k / big) for k in range(1, n + 1))
    assert abs(log_factorial_ratio(n, big) - direct) < 1e-12


def test_airy_window_ratio_approaches_one():
    r = [airy_regime_ratio(n, n, 1.0) for n in (100, 200, 400)]
    assert r[0] > r[1] > r[2] > 1
    assert abs(r[-1] - 1) < 0.1


def test_airy_window_rejects_other_regimes():
    with pytest.raises(DomainError):
        airy_regime_ratio(10, 400, 1.0)


# --- Chebyshev and the CLT ------------------------------------------------


def test_chebyshev_coefficients_of_t2_and_constant():
    t2 = chebyshev_coeffs(named_function("T2"), 6)
    np.testing.assert_allclose(t2.coeffs, [0, 0, 0.5, 0, 0, 0, 0], atol=1e-15)
    one = chebyshev_coeffs(lambda x: np.ones_like(x), 4)
    np.testing.assert_allclose(one.coeffs, [1, 0, 0, 0, 0], atol=1e-15)
    assert m_functional(t2, (1.0, 1.0)) == 0.5


@pytest.mark.parametrize("name", ["exp", "cos", "x4", "T5"])
def test_chebyshev_round_trip(name):
    f = named_function(name)
    s = chebyshev_coeffs(f, 16)
    x = np.linspace(-1, 1, 101)
    assert np.max(np.abs(s(x) - f(x))) < 1e-8


def test_semicircle_moments():
    assert abs(semicircle_integral(named_function("T2")) + 0.5) < 1e-14
    assert abs(semicircle_integral(named_function("x4")) - 1 / 8) < 1e-14
    assert abs(semicircle_integral(np.ones_like) - 1) < 1e-14


def test_clt_predictions():
    t2 = chebyshev_coeffs(named_function("T2"), 8)
    mean, var = clt_prediction(t2, 2.0, (1.0, 1.0))
    assert mean == 0 and abs(var - 0.5) < 1e-15
    mean, var = clt_prediction(t2, 1.0, (1.0, 1.0))
    assert abs(mean + 0.5) < 1e-15 and abs(var - 1.0) < 1e-15
    t1 = chebyshev_coeffs(named_function("T1"), 8)
    assert clt_prediction(t1, 4.0, (1.0, -1.0)) == pytest.approx((0.0, 0.125), abs=1e-15)


def test_named_function_rejects_unknown():
    with pytest.raises(ValueError):
        named_function("sinh")


def test_hermite_zeros_are_roots():
    z = hermite_zeros(12)
    assert z.size == 12 and np.all(np.diff(np.sort(z)) > 0)
    # zeros of H_12(x sqrt(2N)) in physicists' normalization
    ref = np.sort(np.polynomial.hermite.hermroots([0] * 12 + [1])) / math.sqrt(2 * 12)
    np.testing.assert_allclose(np.sort(z), ref, atol=1e-12)


def test_hermite_identity_constant_and_monomial():
    assert abs(hermite_zero_identity(np.ones_like, 100)) < 1e-12
    # for x**4 the discrepancy is exactly of order 1/N
    a = hermite_zero_identity(named_function("x4"), 200)
    b = hermite_zero_identity(named_function("x4"), 400)
    assert abs(a - 3 / 16 / 200) < 1e-8
    assert 0.45 < b / a < 0.55
