import numpy as np
import pytest

from gbe_transfer._io import read_csv
from gbe_transfer.errors import RangeGuardError
from gbe_transfer.expansion import (
    E11,
    DeviationConfig,
    MatrixFamily,
    deviation_csv,
    deviation_table,
    full_product,
    op_norm_2x2,
    parity_violations,
    projector_distance,
    projector_distance_batch,
    psi0_decay,
    psi0_envelope,
    psi22_from_lower,
    psi_bruteforce,
    psi_column_recurrence,
    psi_recursive,
    psi_row_recurrence,
    psi_split,
    psi_tail,
    psi_tail_split,
    tail_columns,
    wilson_interval,
)
from gbe_transfer.sampling import EnsembleConfig, TridiagonalModel, noise_from_batch, sample_batch, sample_model
from gbe_transfer.transfer import HyperbolicWindow


@pytest.fixture
def family(rng):
    return MatrixFamily.random(12, rng)


def test_order_zero_is_product_of_diagonals(family):
    t = psi_bruteforce(family, 0, 2, 9)
    expect = full_product(MatrixFamily(family.v_list), 2, 9)
    assert np.allclose(t.matrix, expect, atol=1e-15)
    unit = MatrixFamily.random(6, np.random.default_rng(1), unit_corner=True)
    t0 = psi_bruteforce(unit, 0, 1, 6).matrix
    assert t0[0, 0] == 1
    assert t0[1, 1] == pytest.approx(np.prod(unit.u_list[:, 1, 1]))


def test_bruteforce_edge_orders(family):
    assert np.all(psi_bruteforce(family, 5, 3, 6).matrix == 0)
    top = psi_bruteforce(family, 4, 3, 6).matrix
    assert np.allclose(top, full_product(MatrixFamily(family.d_list, np.zeros_like(family.d_list)), 3, 6))


def test_bruteforce_guard():
    fam = MatrixFamily.random(21, np.random.default_rng(0))
    with pytest.raises(RangeGuardError):
        psi_bruteforce(fam, 1, 1, 21)
    psi_bruteforce(fam, 0, 2, 21)  # span 20 is allowed


def test_expansion_is_complete(rng):
    for _ in range(10):
        fam = MatrixFamily.random(13, rng)
        total = sum(psi_recursive(fam, j, 1, 13).matrix for j in range(14))
        assert np.max(np.abs(total - full_product(fam, 1, 13))) < 1e-12


def test_parity_zeros_exact(rng):
    for _ in range(20):
        fam = MatrixFamily.random(9, rng)
        for j in range(6):
            assert parity_violations(psi_bruteforce(fam, j, 1, 9)) == 0
            assert parity_violations(psi_recursive(fam, j, 2, 9)) == 0


def test_single_step_splits_agree(family):
    for j in range(1, 4):
        ref = psi_recursive(family, j + 1, 1, 11).matrix
        for ell in range(j + 1):
            assert np.max(np.abs(psi_split(family, j, ell, 1, 11) - ref)) < 1e-12


def test_column_and_row_recurrences(rng):
    fam = MatrixFamily.random(11, rng, unit_corner=True)
    for j in (0, 2, 4):
        full = psi_recursive(fam, j + 1, 1, 11).matrix
        assert np.max(np.abs(psi_column_recurrence(fam, j, 1, 11) - full[:, 0])) < 1e-12
        assert np.max(np.abs(psi_row_recurrence(fam, j, 1, 11) - full[0, :])) < 1e-12


def test_simple22_decomposition(family):
    for j in (1, 3):
        ref = psi_recursive(family, j + 1, 1, 12).matrix[1, 1]
        assert abs(psi22_from_lower(family, j, 1, 12) - ref) < 1e-12


def test_tail_forms(rng):
    for _ in range(10):
        fam = MatrixFamily.random(10, rng)
        tail = psi_tail(fam, 1, 1, 10).matrix
        assert np.max(np.abs(psi_tail_split(fam, 1, 1, 1, 10) - tail)) < 1e-12
        col2, col1 = tail_columns(fam, 1, 10)
        assert np.max(np.abs(col2[:, 1] - tail[:, 1])) < 1e-12
        assert np.max(np.abs(col1[:, 0] - tail[:, 0])) < 1e-12


def test_tail_trivial_cases(family):
    assert np.max(np.abs(psi_tail(family, 6, 2, 7).matrix)) < 1e-14
    diag = MatrixFamily(family.v_list)
    for j in range(3):
        assert np.max(np.abs(psi_tail(diag, j, 1, 12).matrix)) < 1e-15


def test_op_norm_matches_svd(rng):
    m = rng.normal(size=(50, 2, 2)) + 1j * rng.normal(size=(50, 2, 2))
    ref = np.linalg.svd(m, compute_uv=False)[:, 0]
    assert np.allclose(op_norm_2x2(m), ref, rtol=1e-12)


def test_projector_noise_free_small():
    m = TridiagonalModel.noise_free(200, 2.0)
    assert projector_distance(2.0, m, 2.0, 200) <= 0.05


def test_projector_single_matrix_zero():
    u = np.array([[[1.0, 0.0], [0.0, 0.0]]])
    fam = MatrixFamily(u)
    assert op_norm_2x2(full_product(fam, 1, 1) - E11) == 0


def test_projector_batch_matches_single():
    cfg = EnsembleConfig(120, 2.0, 6)
    batch = sample_batch(cfg, 3)
    x, y = noise_from_batch(batch, 2.0)
    d = projector_distance_batch(1.5, x, y, 120, 2.0, 100)
    assert d[1] == pytest.approx(projector_distance(1.5, batch.model(1), 2.0, 100), rel=1e-10)


def test_psi0_decay_envelope_noise_free():
    n, z = 400, 1.5
    m = TridiagonalModel.noise_free(n, 2.0)
    n_h = HyperbolicWindow.of(z, n).n_h
    assert psi0_decay(z, m, 2.0, 10, 9) == 1.0
    for p in range(2, n_h, 37):
        for q in range(p, n_h + 1, 41):
            assert psi0_decay(z, m, 2.0, p, q) <= psi0_envelope(z, n, p, q)


@pytest.mark.slow
def test_psi0_decay_quantile():
    n, z, beta = 400, 1.5, 2.0
    p, q = 150, 300
    vals = []
    batch = sample_batch(EnsembleConfig(n, beta, 8), 10_000)
    from gbe_transfer.transfer import factor_noise

    x, y = noise_from_batch(batch, beta)
    st = factor_noise(z, x, y, n, beta)
    u22 = st.rho[:, p - 2:q - 1] - st.eta22[:, p - 2:q - 1]
    vals = np.exp(np.sum(np.log(np.abs(u22)), axis=1))
    assert vals[0] == pytest.approx(psi0_decay(z, batch.model(0), beta, p, q), rel=1e-10)
    # the envelope constant fitted on the noise-free product suffices up to a factor 10
    assert np.quantile(vals, 0.99) <= 10 * psi0_envelope(z, n, p, q)


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0 and 0 < hi < 0.05
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi


def test_deviation_table_edges_and_csv():
    cfg = DeviationConfig((100, 200), 1.5, 2.0, 1.0, 200, (0.0, 10.0), seed=1)
    rows = deviation_table(cfg)
    assert [r["tail"] for r in rows if r["epsilon"] == 0.0] == [1.0, 1.0]
    assert [r["tail"] for r in rows if r["epsilon"] == 10.0] == [0.0, 0.0]
    assert all(r["ci_lo"] <= r["tail"] <= r["ci_hi"] for r in rows)
    meta, header, body = read_csv(deviation_csv(rows, spec={"seed": 1}))
    assert header[:3] == ["N", "z_re", "z_im"] and len(body) == 4


@pytest.mark.slow
def test_deviation_tails_decrease_with_n():
    cfg = DeviationConfig((200, 800, 3200), 1.5, 2.0, 1.0, 2000, (0.01,), seed=3)
    tails = [r["tail"] for r in deviation_table(cfg)]
    assert tails[0] > tails[1] > tails[2]
