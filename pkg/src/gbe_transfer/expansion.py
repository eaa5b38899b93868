"""Perturbative expansion of products of ``U_k`` around their diagonal parts.

For a family ``U_1, U_2, ...`` with reference matrices ``V_k`` (by default
``diag(U_k)``) the order-``j`` term is

    psi^(j)_{n,p} = sum over |S| = j, S in {p..n} of  prod_{k = n..p} (U_k - V_k if k in S else V_k),

with the product ordered so that higher indices stand on the left.  Summing
all orders recovers ``U_n ... U_p`` exactly.

Indices are 1-based throughout this module: ``family.u(k)`` is ``U_k``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from ._io import format_csv
from .errors import RangeGuardError
from .sampling import EnsembleConfig, noise_from_batch, sample_batch
from .transfer import HyperbolicWindow, TridiagonalModel, factor_noise, factored_steps

BRUTE_FORCE_MAX_SPAN = 20
E11 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class PsiTerm:
    order: int
    n_idx: int
    p_idx: int
    matrix: np.ndarray


class MatrixFamily:
    """Matrices ``U_1..U_m`` and reference ``V_1..V_m`` (default ``diag(U_k)``)."""

    def __init__(self, u_list, v_list=None):
        u = np.array(u_list, dtype=complex)
        if u.ndim != 3 or u.shape[1:] != (2, 2):
            raise ValueError("u_list must be a sequence of 2x2 matrices")
        if v_list is None:
            v = np.zeros_like(u)
            v[:, 0, 0] = u[:, 0, 0]
            v[:, 1, 1] = u[:, 1, 1]
        else:
            v = np.array(v_list, dtype=complex)
            if v.shape != u.shape:
                raise ValueError("u_list and v_list must have equal lengths")
        self.u_list = u
        self.v_list = v
        self.d_list = u - v

    def __len__(self):
        return self.u_list.shape[0]

    def u(self, k):
        return self.u_list[k - 1]

    def v(self, k):
        return self.v_list[k - 1]

    def _check(self, p, n):
        if p < 1 or n > len(self):
            raise IndexError(f"indices {p}..{n} outside family of length {len(self)}")

    @classmethod
    def random(cls, m, rng, scale=0.5, unit_corner=False):
        """Family with i.i.d. complex Gaussian entries of standard deviation ``scale``.

        The default scale keeps products of a dozen factors of order one, so
        absolute tolerances stay meaningful.  ``unit_corner`` sets every
        ``U_{k,11}`` to 1, the normalization of the factored transfer steps.
        """
        u = scale * (rng.normal(size=(m, 2, 2)) + 1j * rng.normal(size=(m, 2, 2)))
        if unit_corner:
            u[:, 0, 0] = 1.0
        return cls(u)


def _ordered_product(mats):
    """``mats[-1] @ ... @ mats[0]``; identity for an empty list."""
    out = I2.copy()
    for m in mats:
        out = m @ out
    return out


def full_product(family: MatrixFamily, p, n):
    """``U_n ... U_p`` (identity when ``n < p``)."""
    if n < p:
        return I2.copy()
    family._check(p, n)
    return _ordered_product(family.u_list[p - 1:n])


def psi_bruteforce(family: MatrixFamily, j, p, n) -> PsiTerm:
    """Order-``j`` term by explicit enumeration of index subsets.

    Raises
    ------
    RangeGuardError
        If the span ``n - p + 1`` exceeds 20.
    """
    span = n - p + 1
    if span > BRUTE_FORCE_MAX_SPAN:
        raise RangeGuardError(f"span {span} exceeds the brute-force guard {BRUTE_FORCE_MAX_SPAN}")
    total = np.zeros((2, 2), dtype=complex)
    if span <= 0:
        return PsiTerm(j, n, p, I2.copy() if j == 0 else total)
    family._check(p, n)
    idx = range(p, n + 1)
    for subset in itertools.combinations(idx, j):
        chosen = set(subset)
        mats = [family.d_list[k - 1] if k in chosen else family.v_list[k - 1] for k in idx]
        total += _ordered_product(mats)
    return PsiTerm(j, n, p, total)


def psi_table(family: MatrixFamily, j_max, p, n):
    """``out[l, q - p] = psi^(l)_{n,q}`` for ``l <= j_max`` and ``q = p..n+1``.

    Built by peeling off the lowest index,
    ``psi^(l)_{n,q} = psi^(l)_{n,q+1} V_q + psi^(l-1)_{n,q+1} (U_q - V_q)``,
    i.e. the single-step recurrence with the perturbed factor in the lowest
    position.  Cost is ``O((n - p) j_max)`` matrix products.
    """
    span = max(n - p + 1, 0)
    if span:
        family._check(p, n)
    out = np.zeros((j_max + 1, span + 1, 2, 2), dtype=complex)
    out[0, span] = I2
    for q in range(n, p - 1, -1):
        i = q - p
        v, dlt = family.v_list[q - 1], family.d_list[q - 1]
        out[0, i] = out[0, i + 1] @ v
        for ell in range(1, j_max + 1):
            out[ell, i] = out[ell, i + 1] @ v + out[ell - 1, i + 1] @ dlt
    return out


def psi_recursive(family: MatrixFamily, j, p, n) -> PsiTerm:
    """Order-``j`` term by the single-step recurrence (see :func:`psi_table`)."""
    table = psi_table(family, j, p, n)
    return PsiTerm(j, n, p, table[j, 0].copy())


def psi_split(family: MatrixFamily, j, ell, p, n):
    """``psi^(j+1)_{n,p} = sum_k psi^(j-ell)_{n,k+1} (U_k - V_k) psi^(ell)_{k-1,p}``.

    The index ``k`` runs over the position of the ``(ell+1)``-th smallest
    element of the subset.  Used as an independent route for cross-checks.
    """
    if not 0 <= ell <= j:
        raise ValueError("need 0 <= ell <= j")
    total = np.zeros((2, 2), dtype=complex)
    for k in range(p, n + 1):
        upper = psi_recursive(family, j - ell, k + 1, n).matrix
        lower = psi_recursive(family, ell, p, k - 1).matrix
        total += upper @ family.d_list[k - 1] @ lower
    return total


def psi_tail(family: MatrixFamily, j, p, n) -> PsiTerm:
    """Remainder ``psi^(>j) = U_n ... U_p - sum_{l <= j} psi^(l)``."""
    table = psi_table(family, j, p, n)
    partial = table[:, 0].sum(axis=0)
    return PsiTerm(j, n, p, full_product(family, p, n) - partial)


def psi_tail_split(family: MatrixFamily, j, ell, p, n):
    """``psi^(>j)_{n,p} = sum_k psi^(>=j-ell)_{n,k+1} (U_k - V_k) psi^(ell)_{k-1,p}``."""
    total = np.zeros((2, 2), dtype=complex)
    for k in range(p, n + 1):
        upper = full_product(family, k + 1, n)
        if j - ell > 0:
            upper = upper - psi_table(family, j - ell - 1, k + 1, n)[:, 0].sum(axis=0)
        lower = psi_recursive(family, ell, p, k - 1).matrix
        total += upper @ family.d_list[k - 1] @ lower
    return total


def tail_columns(family: MatrixFamily, p, n):
    """The two column expressions for ``psi^(>1)_{n,p}``.

    Returns ``(col2, col1)`` where

    * ``col2 = sum_k U_n..U_{k+1} E22 eta_{k,21} psi^(1)_{k-1,p,12}``  (``= psi^(>1) E22``)
    * ``col1 = sum_k psi^(>0)_{n,k+1} E21 eta_{k,21} psi^(0)_{k-1,p,11}``  (``= psi^(>1) E11``)

    with ``eta_{k,21} = U_{k,21}``.  Requires ``V = diag(U)``.
    """
    e22 = np.array([[0, 0], [0, 1]], dtype=complex)
    e21 = np.array([[0, 0], [1, 0]], dtype=complex)
    col2 = np.zeros((2, 2), dtype=complex)
    col1 = np.zeros((2, 2), dtype=complex)
    for k in range(p, n + 1):
        eta21 = family.u(k)[1, 0]
        upper = full_product(family, k + 1, n)
        low1 = psi_recursive(family, 1, p, k - 1).matrix
        low0 = psi_recursive(family, 0, p, k - 1).matrix
        col2 += upper @ e22 * eta21 * low1[0, 1]
        upper_gt0 = upper - psi_recursive(family, 0, k + 1, n).matrix
        col1 += upper_gt0 @ e21 * eta21 * low0[0, 0]
    return col2, col1


def psi_column_recurrence(family: MatrixFamily, j, p, n):
    """First column of ``psi^(j+1)_{n,p}``: ``sum_k psi^(j)_{n,k+1,*2} eta_{k,21} psi^(0)_{k-1,p,11}``.

    For the factored transfer steps ``U_{k,11} = 1`` and the last factor is 1.
    Requires ``V = diag(U)``.
    """
    col = np.zeros(2, dtype=complex)
    for k in range(p, n + 1):
        low = psi_recursive(family, 0, p, k - 1).matrix[0, 0]
        col += psi_recursive(family, j, k + 1, n).matrix[:, 1] * family.u(k)[1, 0] * low
    return col


def psi_row_recurrence(family: MatrixFamily, j, p, n):
    """First row of ``psi^(j+1)_{n,p}``: ``sum_k psi^(0)_{n,k+1,11} eta_{k,12} psi^(j)_{k-1,p,2*}``."""
    row = np.zeros(2, dtype=complex)
    for k in range(p, n + 1):
        up = psi_recursive(family, 0, k + 1, n).matrix[0, 0]
        row += up * family.u(k)[0, 1] * psi_recursive(family, j, p, k - 1).matrix[1, :]
    return row


def psi22_from_lower(family: MatrixFamily, j, p, n):
    """``psi^(j+1)_{n,p,22} = sum_k psi^(j)_{n,k+1,21} eta_{k,12} psi^(0)_{k-1,p,22}`` (``j`` odd)."""
    total = 0j
    for k in range(p, n + 1):
        upper = psi_recursive(family, j, k + 1, n).matrix[1, 0]
        lower = psi_recursive(family, 0, p, k - 1).matrix[1, 1]
        total += upper * family.u(k)[0, 1] * lower
    return total


def parity_violations(term: PsiTerm) -> int:
    """Number of entries that must vanish by parity but do not (exact test)."""
    m = term.matrix
    if term.order % 2 == 0:
        return int(m[0, 1] != 0) + int(m[1, 0] != 0)
    return int(m[0, 0] != 0) + int(m[1, 1] != 0)


# ---------------------------------------------------------------------------
# Products of the factored U_k
# ---------------------------------------------------------------------------


def op_norm_2x2(m):
    """Largest singular value of 2x2 matrices (vectorized over leading axes)."""
    m = np.asarray(m)
    fro2 = np.sum(np.abs(m) ** 2, axis=(-2, -1))
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    disc = np.sqrt(np.maximum(fro2**2 - 4.0 * np.abs(det) ** 2, 0.0))
    return np.sqrt(0.5 * (fro2 + disc))


def projector_distance(z, model: TridiagonalModel, beta, upto) -> float:
    """``|| U_upto ... U_2 - diag(1, 0) ||`` in operator norm.

    ``U_1`` is not part of the factorization, so the product starts at
    ``k = 2``; ``upto = 1`` gives the empty product (the identity).
    """
    if not 1 <= upto <= model.n_dim:
        raise ValueError(f"upto must lie in 1..{model.n_dim}")
    steps = factored_steps(z, model, beta)
    u = steps.u_matrices()[: upto - 1]
    return float(op_norm_2x2(_ordered_product(u) - E11))


def projector_distance_batch(z, x, y, n_dim, beta, upto):
    """Vectorized :func:`projector_distance` over noise arrays of shape (R, N)."""
    # Only steps 2..upto are needed; slicing the noise keeps the step
    # constants identical because they depend on k/N, not on the length.
    steps = factor_noise(z, x, y, n_dim, beta)
    u = np.ascontiguousarray(steps.u_matrices()[:, : upto - 1])
    prod = np.asarray(kernels.matprod2_batch(u)) if upto > 1 else np.broadcast_to(I2, (x.shape[0], 2, 2))
    return op_norm_2x2(prod - E11)


def psi0_decay(z, model: TridiagonalModel, beta, p, n) -> float:
    """``|prod_{k=p}^{n} (rho_{k-1} - eta_{k,22})|``, i.e. ``|psi^(0)_{n,p,22}|``."""
    if n < p:
        return 1.0
    if p < 2 or n > model.n_dim:
        raise ValueError("need 2 <= p and n <= N")
    steps = factored_steps(z, model, beta)
    u22 = steps.rho[p - 2:n - 1] - steps.eta22[p - 2:n - 1]
    return float(np.exp(np.sum(np.log(np.abs(u22)))))


def psi0_envelope(z, n_dim, p, n, omega=1.0):
    """``exp(-((p_hat - n_hat)/4) sqrt((omega_N + p_hat)/N_H))`` with hats relative to ``N_H``."""
    win = HyperbolicWindow.of(z, n_dim, omega)
    ph, nh = win.n_h - p, win.n_h - n
    return math.exp(-0.25 * (ph - nh) * math.sqrt((win.omega_n + ph) / win.n_h))


# ---------------------------------------------------------------------------
# Deviation harness
# ---------------------------------------------------------------------------


def wilson_interval(successes, trials, z=1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class DeviationConfig:
    n_values: tuple
    z: complex = 1.5
    beta: float = 2.0
    omega: float = 1.0
    replicas: int = 2000
    epsilons: tuple = (0.0, 0.01, 0.05, 0.1, 0.2, 0.5)
    seed: int = 0
    chunk: int = 256


def projector_samples(n_dim, z, beta, omega, replicas, seed, chunk=256, threads=1):
    """Distances ``||prod_{k<=N_H} U_k - E11||`` for replicas ``0..replicas-1``."""
    from .parallel import map_chunks

    upto = HyperbolicWindow.of(z, n_dim, omega).n_h
    cfg = EnsembleConfig(n_dim, beta, seed)

    def work(start, count):
        batch = sample_batch(cfg, count, start)
        x, y = noise_from_batch(batch, beta)
        return projector_distance_batch(z, x, y, n_dim, beta, upto)

    return map_chunks(work, replicas, chunk, threads)


def deviation_table(config: DeviationConfig, threads=1):
    """Empirical ``P[||prod U - E11|| >= eps]`` with Wilson intervals.

    Returns
    -------
    list of dict
        Keys ``N, z_re, z_im, beta, omega, epsilon, tail, ci_lo, ci_hi, replicas``.
    """
    rows = []
    z = complex(config.z)
    for n_dim in config.n_values:
        d = projector_samples(n_dim, z, config.beta, config.omega, config.replicas,
                              config.seed, config.chunk, threads)
        for eps in config.epsilons:
            hits = int(np.sum(d >= eps))
            lo, hi = wilson_interval(hits, d.size)
            rows.append({
                "N": int(n_dim), "z_re": z.real, "z_im": z.imag, "beta": float(config.beta),
                "omega": float(config.omega), "epsilon": float(eps), "tail": hits / d.size,
                "ci_lo": lo, "ci_hi": hi, "replicas": int(d.size),
            })
    return rows


DEVIATION_COLUMNS = ["N", "z_re", "z_im", "beta", "omega", "epsilon", "tail", "ci_lo", "ci_hi", "replicas"]


def deviation_csv(rows, spec=None):
    return format_csv(DEVIATION_COLUMNS, [[r[c] for c in DEVIATION_COLUMNS] for r in rows], spec=spec)
