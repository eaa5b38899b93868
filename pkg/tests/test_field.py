import math

import numpy as np
import pytest

from gbe_transfer._io import read_csv
from gbe_transfer.errors import CutViolationError, DomainError
from gbe_transfer.field import (
    boundary_covariances,
    coupling_ratio,
    coupling_samples,
    covariance_w,
    covariance_wt,
    discrete_field,
    embed_noise,
    field_csv,
    field_w,
    field_w_samples,
    gaf_eval,
    gaf_eval_samples,
    gaf_w,
    integrand_weights,
    magic_derivative,
    magic_derivative_check,
    regularized_boundary_covariances,
    required_terms,
    sample_brownian_pair,
    sample_gaf,
)
from gbe_transfer.sampling import EnsembleConfig, NoiseSequence, TridiagonalModel, sample_model
from gbe_transfer.transfer import factor_noise, factored_steps, inverse_joukowsky

VAR_W2 = -math.log(1 - (2 - math.sqrt(3)) ** 2)


# --- embedding and paths --------------------------------------------------


def test_embedding_hits_partial_sums(rng):
    n = 50
    noise = NoiseSequence(rng.normal(size=n), rng.normal(size=n), 2.0)
    pair = embed_noise(noise, n, rng, substeps=4)
    cx, cy = pair.at_coarse()
    np.testing.assert_allclose(cx[1:], np.cumsum(noise.x) / math.sqrt(n), rtol=0, atol=1e-15)
    np.testing.assert_allclose(cy[1:], np.cumsum(noise.y) / math.sqrt(n), rtol=0, atol=1e-15)
    assert pair.n_dim == n and pair.grid[-1] == 1.0


def test_zero_noise_embedding_is_a_bridge(rng):
    n, sub = 400, 16
    pair = embed_noise(NoiseSequence.zeros(n, 2.0), n, rng, substeps=sub)
    cx, _ = pair.at_coarse()
    assert np.all(cx == 0)
    # Between grid points: bridges over dt = 1/N, sup of order sqrt(log N / N).
    assert np.max(np.abs(pair.x_path)) < 3 * math.sqrt(math.log(n) / n)


def test_field_vanishes_at_time_zero(rng):
    pair = sample_brownian_pair(64, rng)
    assert field_w(2.0, 0.0, pair).w == 0


def test_field_reflection_is_pathwise(rng):
    pair = sample_brownian_pair(256, rng)
    z = 1.3 + 0.4j
    a = field_w(z, 1.0, pair).w
    b = field_w(z.conjugate(), 1.0, pair).w
    assert abs(b - a.conjugate()) < 1e-13


def test_field_rejects_cut_points(rng):
    pair = sample_brownian_pair(16, rng)
    with pytest.raises(CutViolationError):
        field_w(0.5, 1.0, pair)
    # 0.5 is off the cut [-sqrt(0.1), sqrt(0.1)]
    field_w(0.5, 0.1, pair)


def test_integrand_weights_are_bounded_on_the_real_axis():
    grid = np.arange(257) / 256
    fx, fy, m = integrand_weights(2.0, grid, 1.0)
    assert m == 256
    assert np.all(np.abs(fy) <= np.abs(fx))


def test_field_variance_matches_closed_form():
    w = field_w_samples([2.0], 1.0, 256, 100_000, seed=11)[:, 0]
    v = w.real**2  # W(2) is real
    se = v.std() / math.sqrt(v.size)
    # the Riemann sum of |f_x|^2 + |f_y|^2 is the exact variance of the discretization
    fx, fy, _ = integrand_weights(2.0, np.arange(257) / 256, 1.0)
    disc = float(np.sum(np.abs(fx) ** 2 + np.abs(fy) ** 2)) / 256
    assert abs(disc - VAR_W2) < 2e-3
    assert abs(v.mean() - disc) < 3 * se


def test_field_covariance_off_axis():
    z, w = 2.0, 1.5 + 0.5j
    s = field_w_samples([z, w], 1.0, 256, 100_000, seed=12)
    prod = s[:, 0] * s[:, 1]
    exact = covariance_w(z, w)
    se_re = prod.real.std() / math.sqrt(prod.size)
    se_im = prod.imag.std() / math.sqrt(prod.size)
    assert abs(prod.real.mean() - exact.real) < 3 * se_re + 2e-3
    assert abs(prod.imag.mean() - exact.imag) < 3 * se_im + 2e-3


def test_refining_the_grid_changes_variance_little():
    a = field_w_samples([2.0], 1.0, 128, 100_000, seed=13)[:, 0]
    b = field_w_samples([2.0], 1.0, 256, 100_000, seed=14)[:, 0]
    va, vb = np.var(a.real), np.var(b.real)
    assert abs(va / vb - 1) < 0.05


def test_field_time_scaling():
    # W_s(z sqrt s) has the law of W_1(z)
    s = 0.25
    a = covariance_wt(2.0 * math.sqrt(s), 2.0 * math.sqrt(s), s, s)
    assert abs(a - covariance_w(2.0, 2.0)) < 1e-14


# --- GAF series -----------------------------------------------------------


def test_gaf_vanishes_at_origin(rng):
    assert gaf_eval(sample_gaf(10, rng), 0.0) == 0


def test_gaf_matches_explicit_sum(rng):
    g = sample_gaf(200, rng)
    q = 0.3 + 0.2j
    k = np.arange(1, 201)
    assert abs(gaf_eval(g, q) - np.sum(g.xi * q**k / np.sqrt(k))) < 1e-13
    assert gaf_w(g, 2.0) == gaf_eval(g, inverse_joukowsky(2.0))


def test_gaf_covariance_monte_carlo():
    s = gaf_eval_samples([0.5, 0.3], 200_000, seed=21)
    prod = s[:, 0] * s[:, 1]
    exact = -math.log(1 - 0.15)
    se = prod.real.std() / math.sqrt(prod.size)
    assert abs(prod.real.mean() - exact) < 3 * se


@pytest.mark.parametrize("r", [0.1, 0.5, 0.9, 0.99])
def test_required_terms_controls_the_tail(r):
    k = required_terms(r)
    tail = sum(r ** (2 * j) / j for j in range(k + 1, k + 20000))
    assert math.sqrt(tail) <= 1e-4
    if k > 1:
        more = sum(r ** (2 * j) / j for j in range(k, k + 20000))
        assert math.sqrt(more) > 1e-4 * 0.5


def test_gaf_rejects_short_series(rng):
    g = sample_gaf(5, rng)
    with pytest.raises(DomainError, match="K >="):
        gaf_eval(g, 0.9)
    with pytest.raises(DomainError):
        gaf_eval(sample_gaf(10_000, rng), 1.0)


# --- closed-form covariances ----------------------------------------------


def test_covariance_at_two():
    assert abs(covariance_w(2.0, 2.0) - VAR_W2) < 1e-15
    assert abs(VAR_W2 - 0.0745046) < 1e-7


def test_covariance_decays_at_infinity():
    assert abs(covariance_w(1e6, 2.0)) < 1e-6


def test_timed_covariance_reduces_at_one():
    z, q = 1.5 + 0.3j, -2.0 + 0.1j
    assert abs(covariance_wt(z, q, 1.0, 1.0) - covariance_w(z, q)) < 1e-15
    assert covariance_wt(z, q, 0.0, 0.7) == 0
    assert covariance_wt(z, q, 0.4, 0.9) == covariance_wt(z, q, 0.4, 0.4)


def test_covariance_rejects_cut():
    with pytest.raises(CutViolationError):
        covariance_w(0.3, 2.0)


@pytest.mark.parametrize("z,q,t", [(2.0, 1.5 + 0.5j, 0.7), (1.2j, -1.4 + 0.2j, 0.3), (3.0, 3.0, 1.0)])
def test_covariance_time_derivative(z, q, t):
    assert magic_derivative_check(z, q, t) <= 1e-6
    assert abs(magic_derivative(z, q, t) - magic_derivative(q, z, t)) < 1e-15


def test_covariance_time_derivative_is_bounded():
    vals = [abs(magic_derivative(2.0, 1.5 + 0.5j, t)) for t in np.linspace(0.1, 0.9, 81)]
    assert np.all(np.isfinite(vals)) and max(vals) < 10


# --- boundary covariances ---------------------------------------------------


def test_boundary_values_and_symmetry():
    re, im = boundary_covariances(0.1, 0.3)
    assert abs(re - 0.5 * math.log(1 / 0.4)) < 1e-15
    assert boundary_covariances(0.3, 0.1) == pytest.approx((re, im), abs=1e-15)
    with pytest.raises(DomainError):
        boundary_covariances(0.2, 0.2)
    with pytest.raises(DomainError):
        boundary_covariances(1.0, 0.2)


@pytest.mark.parametrize("x,y", [(0.1, 0.3), (-0.5, 0.2), (0.0, 0.6), (-0.7, -0.4)])
def test_regularized_covariances_approach_boundary(x, y):
    re, im = boundary_covariances(x, y)
    rr, ri = regularized_boundary_covariances(x, y, 1e-3)
    assert abs(rr - re) <= 0.05 * abs(re) + 1e-3
    assert abs(ri - im) <= 0.05 * abs(im) + 1e-3


def test_boundary_covariances_monte_carlo():
    # At eps = 0.05 the series needs a few hundred terms; compare with the exact
    # regularized value, which is itself within 2% of the boundary formula.
    x, y, eps = 0.1, 0.3, 0.05
    qs = [inverse_joukowsky(complex(x, eps)), inverse_joukowsky(complex(y, eps))]
    s = gaf_eval_samples(qs, 40_000, seed=31)
    rr, ri = regularized_boundary_covariances(x, y, eps)
    pre = s[:, 0].real * s[:, 1].real
    pim = s[:, 0].imag * s[:, 1].imag
    assert abs(pre.mean() - rr) < 3 * pre.std() / math.sqrt(pre.size)
    assert abs(pim.mean() - ri) < 3 * pim.std() / math.sqrt(pim.size)


# --- discrete field and coupling ------------------------------------------


def test_discrete_field_is_zero_without_noise():
    n = 100
    steps = factor_noise(2.0, np.zeros(n), np.zeros(n), n, 2.0)
    assert discrete_field(steps) == 0


def test_discrete_field_partial_sums():
    m = sample_model(EnsembleConfig(60, 2.0, 5))
    st = factored_steps(2.0, m, 2.0)
    one = discrete_field(st, 1)
    e = st.eta11_first
    assert one == e + e * e / 2
    with pytest.raises(ValueError):
        discrete_field(st, 0)


def test_coupling_ratio_without_noise():
    n = 200
    model = TridiagonalModel.noise_free(n, 2.0)
    assert coupling_ratio(2.0, model, 2.0) <= 0.05


def test_coupling_ratio_reflection():
    m = sample_model(EnsembleConfig(200, 2.0, 8))
    z = 1.8 + 0.3j
    assert abs(coupling_ratio(z, m, 2.0) - coupling_ratio(z.conjugate(), m, 2.0)) < 1e-10


def test_coupling_rejects_points_outside_domain():
    m = sample_model(EnsembleConfig(100, 2.0, 1))
    with pytest.raises(DomainError):
        coupling_ratio(0.5, m, 2.0)


def test_coupling_batch_matches_single():
    cs = coupling_samples(2.0, 120, 2.0, 6, seed=3, chunk=4)
    for r in range(6):
        m = sample_model(EnsembleConfig(120, 2.0, 3), replica=r)
        assert abs(cs.ratio[r] - coupling_ratio(2.0, m, 2.0)) < 1e-10


@pytest.mark.slow
def test_discrete_field_moments():
    cs = coupling_samples(2.0, 800, 2.0, 5000, seed=41)
    f = cs.field.real
    se = f.std() / math.sqrt(f.size)
    assert abs(f.mean() - VAR_W2 / 2) < 3 * se
    assert abs(f.var() / VAR_W2 - 1) < 0.1


def test_field_csv_round_trip():
    text = field_csv([(2.0, 2.0, VAR_W2, "closed")], spec={"command": "field-cov"})
    meta, header, rows = read_csv(text)
    assert header[0] == "z_re" and float(rows[0][4]) == VAR_W2
    assert meta["spec"]["command"] == "field-cov"
