"""The Gaussian field ``W``: Brownian paths, the stochastic integral, the GAF series.

The field is

    W_t(z) = 1/2 int_0^t (dX_u + J(z / sqrt u) dY_u) / sqrt(z**2 - u)

for two independent standard Brownian motions ``X``, ``Y``.  At ``t = 1`` it
has the same law as ``xi(J(z))`` with ``xi(q) = sum_k xi_k q**k / sqrt(k)``,
and its covariance is ``-log(1 - J(z) J(w))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._io import format_csv
from .errors import CutViolationError, DomainError
from .sampling import EnsembleConfig, NoiseSequence, noise_from_batch, sample_batch, substream, KIND_BRIDGE, KIND_GAF
from .transfer import (
    TridiagonalModel,
    _csqrt_shift,
    factor_noise,
    factored_steps,
    in_domain_P,
    inverse_joukowsky,
    log_charpoly_batch,
    log_hermite,
    FactoredSteps,
)

CUT_TOL = 1e-12


def _check_cut(z, t, what="z"):
    z = complex(z)
    r = math.sqrt(max(t, 0.0))
    if abs(z.imag) <= CUT_TOL * max(1.0, abs(z)) and abs(z.real) <= r + CUT_TOL:
        raise CutViolationError(f"{what}={z!r} lies on the cut [-{r:.6g}, {r:.6g}]")


def _j_scaled(z, u):
    """``J(z / sqrt u)`` with the limit 0 at ``u = 0`` (vectorized in ``u``)."""
    u = np.asarray(u, dtype=float)
    safe = np.where(u > 0, u, 1.0)
    return np.where(u > 0, inverse_joukowsky(complex(z) / np.sqrt(safe)), 0.0)


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


@dataclass
class BrownianPair:
    """Paths ``X``, ``Y`` on a uniform grid of ``[0, 1]``.

    ``grid`` has ``N * substeps + 1`` points; every ``substeps``-th point is a
    coarse time ``k / N``.
    """

    grid: np.ndarray
    x_path: np.ndarray
    y_path: np.ndarray
    substeps: int = 1

    @property
    def n_dim(self):
        return (self.grid.size - 1) // self.substeps

    def at_coarse(self):
        return self.x_path[:: self.substeps], self.y_path[:: self.substeps]


def _bridge_fill(coarse, substeps, rng):
    """Brownian bridges between consecutive coarse values, on a refined grid."""
    n = coarse.size - 1
    if substeps == 1:
        return coarse.copy()
    dt = 1.0 / (n * substeps)
    inc = rng.normal(0.0, math.sqrt(dt), size=(n, substeps))
    walk = np.cumsum(inc, axis=1)
    frac = np.arange(1, substeps + 1) / substeps
    bridge = walk - frac * walk[:, -1:]
    lin = coarse[:-1, None] + frac * np.diff(coarse)[:, None]
    out = np.empty(n * substeps + 1)
    out[0] = coarse[0]
    out[1:] = (lin + bridge).ravel()
    # Grid points are set exactly (the bridge vanishes there up to rounding).
    out[::substeps] = coarse
    return out


def embed_noise(noise: NoiseSequence, n_dim, rng, substeps=8) -> BrownianPair:
    """Paths whose values at ``k / N`` are the scaled partial sums of the noise.

    Between grid points the paths are filled with independent Brownian
    bridges.  For Gaussian ``X`` this is an exact embedding; for ``Y`` it is an
    interpolation only.
    """
    if noise.x.size != n_dim:
        raise ValueError("noise length must equal n_dim")
    scale = 1.0 / math.sqrt(n_dim)
    cx = np.concatenate([[0.0], np.cumsum(noise.x) * scale])
    cy = np.concatenate([[0.0], np.cumsum(noise.y) * scale])
    grid = np.arange(n_dim * substeps + 1) / (n_dim * substeps)
    return BrownianPair(grid, _bridge_fill(cx, substeps, rng), _bridge_fill(cy, substeps, rng), substeps)


def sample_brownian_pair(n_steps, rng) -> BrownianPair:
    """Fresh independent Brownian motions on ``n_steps`` uniform steps."""
    dt = 1.0 / n_steps
    x = np.concatenate([[0.0], np.cumsum(rng.normal(0, math.sqrt(dt), n_steps))])
    y = np.concatenate([[0.0], np.cumsum(rng.normal(0, math.sqrt(dt), n_steps))])
    return BrownianPair(np.arange(n_steps + 1) * dt, x, y, 1)


# ---------------------------------------------------------------------------
# The stochastic integral
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldValue:
    w: complex
    t: float
    z: complex


def integrand_weights(z, grid, t):
    """Left-endpoint weights ``(f_x, f_y)`` for the increments on ``[0, t]``."""
    z = complex(z)
    _check_cut(z, t)
    m = int(np.searchsorted(grid, t * (1 + 1e-12), side="right")) - 1
    u = grid[:m]
    root = _csqrt_shift(z, u)
    fx = 0.5 / root
    fy = fx * _j_scaled(z, u)
    return fx, fy, m


def field_w(z, t, pair: BrownianPair) -> FieldValue:
    """Left-endpoint sum for ``W_t(z)`` on the grid of ``pair``.

    Raises
    ------
    CutViolationError
        If ``z`` lies on ``[-sqrt t, sqrt t]``.
    """
    fx, fy, m = integrand_weights(z, pair.grid, t)
    dx = np.diff(pair.x_path[: m + 1])
    dy = np.diff(pair.y_path[: m + 1])
    return FieldValue(complex(fx @ dx + fy @ dy), float(t), complex(z))


def field_w_samples(zs, t, n_steps, samples, seed, chunk=4096):
    """``W_t(z)`` for each ``z`` in ``zs`` over fresh independent paths.

    Returns
    -------
    numpy.ndarray
        Shape ``(samples, len(zs))``.  All ``z`` share the same paths.
    """
    grid = np.arange(n_steps + 1) / n_steps
    weights = [integrand_weights(z, grid, t) for z in zs]
    m = weights[0][2]
    fx = np.stack([w[0] for w in weights], axis=1)
    fy = np.stack([w[1] for w in weights], axis=1)
    out = np.empty((samples, len(zs)), dtype=complex)
    sd = math.sqrt(1.0 / n_steps)
    for c, start in enumerate(range(0, samples, chunk)):
        cnt = min(chunk, samples - start)
        rng = substream(seed, c, KIND_BRIDGE)
        dx = rng.normal(0.0, sd, size=(cnt, m))
        dy = rng.normal(0.0, sd, size=(cnt, m))
        out[start:start + cnt] = dx @ fx + dy @ fy
    return out


# ---------------------------------------------------------------------------
# GAF series
# ---------------------------------------------------------------------------


@dataclass
class GafSample:
    xi: np.ndarray

    @property
    def truncation(self):
        return self.xi.size


def required_terms(radius, std=1e-4):
    """Smallest ``K`` with ``r**(2K+2) / ((K+1)(1 - r**2)) <= std**2``."""
    r2 = float(radius) ** 2
    if r2 >= 1.0:
        raise DomainError(f"series radius {radius} is not inside the unit disc")
    if r2 == 0.0:
        return 1
    k = 1
    while r2 ** (k + 1) / ((k + 1) * (1 - r2)) > std * std:
        k = max(k + 1, int(k * 1.25))
    # step back to the smallest admissible K
    while k > 1 and r2**k / (k * (1 - r2)) <= std * std:
        k -= 1
    return k


def sample_gaf(truncation, rng) -> GafSample:
    return GafSample(rng.standard_normal(int(truncation)))


def _check_radius(q, truncation, std=1e-4):
    r = abs(q)
    if r >= 1.0:
        raise DomainError(f"|q| = {r:.6g} is outside the unit disc")
    need = required_terms(r, std)
    if need > truncation:
        raise DomainError(f"|q| = {r:.6g} needs K >= {need} terms, sample has {truncation}")


def gaf_eval(sample: GafSample, q, std=1e-4):
    """``xi(q) = sum_{k<=K} xi_k q**k / sqrt(k)`` (Horner form)."""
    q = complex(q)
    _check_radius(q, sample.truncation, std)
    k = np.arange(1, sample.truncation + 1)
    coef = sample.xi / np.sqrt(k)
    acc = 0j
    for c in coef[::-1]:
        acc = acc * q + c
    return acc * q


def gaf_w(sample: GafSample, z, std=1e-4):
    """``W(z) = xi(J(z))``."""
    return gaf_eval(sample, inverse_joukowsky(z), std)


def gaf_eval_samples(qs, samples, seed, truncation=None, std=1e-4, chunk=4096):
    """``xi(q)`` at every ``q`` for ``samples`` independent coefficient draws.

    ``truncation`` defaults to the smallest ``K`` meeting ``std`` at the
    largest ``|q|`` requested.

    Returns
    -------
    numpy.ndarray
        Shape ``(samples, len(qs))``; all points share the same draws.
    """
    qs = np.asarray(qs, dtype=complex).ravel()
    rmax = float(np.max(np.abs(qs)))
    need = required_terms(rmax, std)
    k_terms = need if truncation is None else int(truncation)
    if k_terms < need:
        raise DomainError(f"|q| = {rmax:.6g} needs K >= {need} terms, got {k_terms}")
    k = np.arange(1, k_terms + 1)[:, None]
    basis = qs[None, :] ** k / np.sqrt(k)
    out = np.empty((samples, qs.size), dtype=complex)
    for c, start in enumerate(range(0, samples, chunk)):
        cnt = min(chunk, samples - start)
        xi = substream(seed, c, KIND_GAF).standard_normal((cnt, k_terms))
        out[start:start + cnt] = xi @ basis
    return out


def gaf_w_samples(zs, samples, seed, truncation=None, std=1e-4, chunk=4096):
    """``W(z) = xi(J(z))`` sampled jointly at the points ``zs``."""
    qs = [inverse_joukowsky(z) for z in zs]
    return gaf_eval_samples(qs, samples, seed, truncation, std, chunk)


# ---------------------------------------------------------------------------
# Covariances
# ---------------------------------------------------------------------------


def covariance_w(z, w):
    """``E[W(z) W(w)] = -log(1 - J(z) J(w))`` (no conjugation)."""
    _check_cut(z, 1.0)
    _check_cut(w, 1.0, "w")
    return complex(-np.log(1.0 - inverse_joukowsky(z) * inverse_joukowsky(w)))


def covariance_wt(z, q, s, t):
    """``E[W_s(z) W_t(q)] = -log(1 - J(z/sqrt m) J(q/sqrt m))`` with ``m = min(s, t)``."""
    m = min(s, t)
    if m < 0:
        raise ValueError("times must be nonnegative")
    if m == 0:
        return 0j
    _check_cut(z, m)
    _check_cut(q, m, "q")
    r = math.sqrt(m)
    return complex(-np.log(1.0 - inverse_joukowsky(z / r) * inverse_joukowsky(q / r)))


def magic_derivative(z, q, t):
    """Closed form of ``d/dt log(1 - J(q/sqrt t) J(z/sqrt t))``."""
    r = math.sqrt(t)
    jj = inverse_joukowsky(z / r) * inverse_joukowsky(q / r)
    return complex(-(1 + jj) / (4 * _csqrt_shift(q, t) * _csqrt_shift(z, t)))


def magic_derivative_check(z, q, t, h=1e-5):
    """Relative error between a central difference in ``t`` and :func:`magic_derivative`."""
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    for name, p in (("z", z), ("q", q)):
        _check_cut(p, t + h, name)

    def f(s):
        r = math.sqrt(s)
        return complex(np.log(1 - inverse_joukowsky(q / r) * inverse_joukowsky(z / r)))

    fd = (f(t + h) - f(t - h)) / (2 * h)
    exact = magic_derivative(z, q, t)
    return abs(fd - exact) / abs(exact)


def boundary_covariances(x, y):
    """Covariances of ``Re W`` and of ``Im W`` at boundary points ``x, y`` in (-1, 1).

    Returns
    -------
    (re_cov, im_cov)
        ``1/2 log(1/|2(x-y)|)`` and
        ``-1/2 log|(x - y) / (1 - xy + sqrt(1-x^2) sqrt(1-y^2))|``.
    """
    if not (-1 < x < 1 and -1 < y < 1):
        raise DomainError("boundary points must lie in (-1, 1)")
    if x == y:
        raise DomainError(f"coincident boundary points x = y = {x}")
    re_cov = 0.5 * math.log(1.0 / abs(2 * (x - y)))
    den = 1 - x * y + math.sqrt(1 - x * x) * math.sqrt(1 - y * y)
    im_cov = -0.5 * math.log(abs((x - y) / den))
    return re_cov, im_cov


def regularized_boundary_covariances(x, y, eps):
    """Exact covariances of ``Re W``, ``Im W`` at ``x + i eps`` and ``y + i eps``.

    From ``E[W(a) W(b)] = -log(1 - J(a) J(b))`` and
    ``E[W(a) conj W(b)] = -log(1 - J(a) conj J(b))``.
    """
    a, b = complex(x, eps), complex(y, eps)
    ja, jb = inverse_joukowsky(a), inverse_joukowsky(b)
    c = -np.log(1 - ja * jb)
    cbar = -np.log(1 - ja * np.conj(jb))
    return float(0.5 * (c + cbar).real), float(0.5 * (cbar - c).real)


# ---------------------------------------------------------------------------
# Discrete coupling field
# ---------------------------------------------------------------------------


def discrete_field(steps: FactoredSteps, upto=None):
    """``sum_{k <= upto} (eta_{k,11} + eta_{k,11}**2 / 2)``, including ``k = 1``.

    Works on single or batched :class:`FactoredSteps`.
    """
    n = steps.n_dim if upto is None else int(upto)
    if not 1 <= n <= steps.n_dim:
        raise ValueError(f"upto must lie in 1..{steps.n_dim}")
    e1 = steps.eta11_first
    rest = steps.eta11[..., : n - 1]
    total = e1 + 0.5 * e1 * e1 + np.sum(rest + 0.5 * rest * rest, axis=-1)
    return complex(total) if np.ndim(total) == 0 else total


def coupling_ratio(z, model: TridiagonalModel, beta, alpha=1 / 9):
    """``|exp(log Phi_N - log pi_N + discrete_field) - 1|``.

    Raises
    ------
    DomainError
        If ``z`` is outside the domain ``P`` for ``alpha``.
    """
    n = model.n_dim
    if not in_domain_P(z, n, alpha):
        raise DomainError(f"z={complex(z)!r} is outside the domain P at N={n}, alpha={alpha}")
    from .transfer import char_poly

    log_phi = char_poly(z, model, beta).final.log_first
    df = discrete_field(factored_steps(z, model, beta))
    return float(abs(np.expm1(log_phi - log_hermite(z, n, n) + df)))


@dataclass
class CouplingSamples:
    log_ratio: np.ndarray  # log Phi_N - log pi_N
    field: np.ndarray  # discrete field
    ratio: np.ndarray  # coupling ratio


def coupling_samples(z, n_dim, beta, replicas, seed, alpha=1 / 9, chunk=256, threads=1):
    """Per-replica ``log(Phi_N / pi_N)``, discrete field and coupling ratio."""
    from .parallel import map_chunks

    if not in_domain_P(z, n_dim, alpha):
        raise DomainError(f"z={complex(z)!r} is outside the domain P at N={n_dim}, alpha={alpha}")
    cfg = EnsembleConfig(n_dim, beta, seed)
    log_pi = log_hermite(z, n_dim, n_dim)

    def work(start, count):
        batch = sample_batch(cfg, count, start)
        d, e2 = batch.scaled(beta)
        lr = log_charpoly_batch(z, d, e2) - log_pi
        x, y = noise_from_batch(batch, beta)
        df = discrete_field(factor_noise(z, x, y, n_dim, beta))
        return np.stack([lr, np.broadcast_to(df, lr.shape)], axis=1)

    both = map_chunks(work, replicas, chunk, threads)
    lr, df = both[:, 0], both[:, 1]
    return CouplingSamples(lr, df, np.abs(np.expm1(lr + df)))


FIELD_COLUMNS = ["z_re", "z_im", "w_re", "w_im", "value_re", "value_im", "kind"]


def field_csv(rows, spec=None):
    """Rows of ``(z, w, value, kind)`` as CSV."""
    out = []
    for z, w, v, kind in rows:
        z, w, v = complex(z), complex(w), complex(v)
        out.append((z.real, z.imag, w.real, w.imag, v.real, v.imag, kind))
    return format_csv(FIELD_COLUMNS, out, spec=spec)
