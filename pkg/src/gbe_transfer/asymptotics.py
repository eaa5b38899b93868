"""Eigenvalues, Hermite asymptotics and the linear-statistics CLT.

The semicircle density here is ``rho(x) = (2/pi) sqrt(1 - x**2)`` on
``[-1, 1]``, matching the scaling ``A / sqrt(4 N beta)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from ._io import format_json
from .errors import CutViolationError, DomainError, RangeGuardError
from .sampling import EnsembleConfig, TridiagonalModel, sample_batch
from .transfer import (
    Regime,
    _csqrt_shift,
    classify_regime,
    hermite_coefficients,
    hermite_pi,
    inverse_joukowsky,
)

LOG2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Eigensolver
# ---------------------------------------------------------------------------


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    residual: float


def newton_residual(d, e2, eigs):
    """Largest ``|Phi_N(l_i) / prod_{j != i}(l_i - l_j)|`` over the computed eigenvalues.

    Since ``Phi_N(x) = prod (x - true_j)``, each term is the first-order
    estimate of the distance from ``l_i`` to the true eigenvalue.
    """
    n = eigs.size
    if n == 1:
        return abs(eigs[0] - d[0])
    worst = 0.0
    for i, lam in enumerate(eigs):
        hi, _, ex = kernels.charpoly_trajectory(complex(lam), d, e2)
        if hi[-1] == 0:
            continue
        log_phi = math.log(abs(hi[-1])) + float(ex[-1]) * LOG2
        gaps = np.abs(lam - np.delete(eigs, i))
        if np.any(gaps == 0):
            return float("inf")
        worst = max(worst, math.exp(log_phi - float(np.sum(np.log(gaps)))))
    return worst


def tridiag_eigenvalues(model: TridiagonalModel, beta, rtol=1e-12, residual=True) -> SpectrumResult:
    """All eigenvalues of ``A / sqrt(4 N beta)`` by Sturm-count bisection.

    Each eigenvalue is isolated by bisection on the negative-pivot count and
    then polished inside its bracket by Illinois regula falsi on ``Phi_N``,
    falling back to bisection whenever the bracket does not halve.  The
    absolute tolerance is ``rtol * max(1, spectral radius)``.

    Parameters
    ----------
    model : TridiagonalModel
    beta : float
    rtol : float, default 1e-12
    residual : bool, default True
        Also compute the Newton-step residual (``O(N**2)``).

    Returns
    -------
    SpectrumResult
    """
    d, e2 = model.scaled(beta)
    eigs = np.asarray(kernels.tridiag_eigvals(d, e2, rtol))
    res = newton_residual(d, e2, eigs) if residual else float("nan")
    return SpectrumResult(eigs, float(res))


def jacobi_eigenvalues(d, e2, rtol=1e-12):
    return np.asarray(kernels.tridiag_eigvals(np.ascontiguousarray(d, float), np.ascontiguousarray(e2, float), rtol))


def eigenvalues_batch(d, e2, rtol=1e-12):
    return np.asarray(kernels.tridiag_eigvals_batch(np.ascontiguousarray(d), np.ascontiguousarray(e2), rtol))


def sturm_count(model: TridiagonalModel, beta, x):
    """Number of eigenvalues of the scaled matrix strictly below ``x``."""
    d, e2 = model.scaled(beta)
    return int(kernels.sturm_count(d, e2, float(x)))


# ---------------------------------------------------------------------------
# g-function and Plancherel-Rotach
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GFunctionEval:
    z: complex
    t: float
    g_value: complex
    gamma_value: complex


_GL_CACHE = {}


def _gauss_legendre(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _panels(t, levels):
    """``[0, t/2], [t/2, 3t/4], ...`` refined dyadically toward ``u = t``."""
    edges = [0.0]
    for i in range(1, levels + 1):
        edges.append(t * (1 - 0.5**i))
    edges.append(t)
    return np.array(edges)


def _integral_log_lambda(z, t, order=20, levels=None):
    """``int_0^t log(lambda_+(u) / z) du`` by composite Gauss-Legendre."""
    if levels is None:
        gap = abs(z * z - t) / t
        levels = int(min(60, max(4, math.ceil(math.log2(1.0 / max(gap, 1e-300))) + 8)))
    x, w = _gauss_legendre(order)
    edges = _panels(t, levels)
    a, b = edges[:-1, None], edges[1:, None]
    u = 0.5 * (b - a) * x + 0.5 * (b + a)
    wt = 0.5 * (b - a) * w
    # lambda_+ / z = (1 + w) / 2 with w = sqrt(1 - u / z**2), Re w >= 0.
    ratio = 0.5 * (1.0 + _csqrt_shift(z, u) / z)
    return complex(np.sum(wt * np.log(ratio)))


def g_function(z, t=1.0, order=20, levels=None) -> GFunctionEval:
    """``g_t(z) = (1/t) int_0^t log lambda_+(u) du`` and ``gamma(z / sqrt t)``.

    ``log lambda_+`` is split as ``log z + log(lambda_+ / z)``; the second
    term has positive-real-part argument, so the principal log is continuous
    along the path and ``g_t(z) - log z -> 0`` at infinity.

    Raises
    ------
    CutViolationError
        If ``z`` lies on ``[-sqrt t, sqrt t]``.
    """
    z = complex(z) + 0.0  # -0.0 imaginary parts become +0.0
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    r = math.sqrt(t)
    if abs(z.imag) <= 1e-14 * max(1.0, abs(z)) and abs(z.real) <= r:
        raise CutViolationError(f"z={z!r} lies on the cut [-{r:.6g}, {r:.6g}]")
    g = complex(np.log(z)) + _integral_log_lambda(z, t, order, levels) / t
    q = z / r
    gamma = (q + 1) ** 0.25 * (q - 1) ** -0.25
    return GFunctionEval(z, float(t), g, complex(gamma))


def g_closed_form(z):
    """``g_1(z) = -log 2 - log J(z) + J(z)**2 / 2`` (independent oracle)."""
    j = inverse_joukowsky(z)
    return complex(-LOG2 - np.log(j) + 0.5 * j * j)


def log_plancherel_rotach(n, n_dim, z, omega=1.0):
    """Log of ``((gamma + 1/gamma)/2) exp(n g_t(z))`` with ``t = n / N``."""
    if classify_regime(z, n_dim, n, omega) is not Regime.HYPERBOLIC:
        raise DomainError(f"z={complex(z)!r} is not in the hyperbolic region for n={n}, N={n_dim}")
    ge = g_function(z, n / n_dim)
    pref = 0.5 * (ge.gamma_value + 1.0 / ge.gamma_value)
    return complex(np.log(pref)) + n * ge.g_value


def plancherel_rotach(n, n_dim, z, omega=1.0):
    """Plancherel-Rotach approximation of ``pi_n(z)`` (may overflow for large ``n``)."""
    return complex(np.exp(log_plancherel_rotach(n, n_dim, z, omega)))


def plancherel_rotach_ratio(n, n_dim, z, omega=1.0):
    """``pi_n(z) / PR_n(z)`` computed in log space."""
    return complex(np.exp(hermite_pi(z, n, n_dim).log_first - log_plancherel_rotach(n, n_dim, z, omega)))


# ---------------------------------------------------------------------------
# Airy
# ---------------------------------------------------------------------------

AI0 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
AIP0 = -(3.0 ** (-1.0 / 3.0)) / math.gamma(1.0 / 3.0)
AIRY_RANGE = 8.0


def airy_ai(x):
    """Airy function ``Ai(x)`` from its Maclaurin series, for ``|x| <= 8``.

    Summation stops once the remaining terms, which then decrease faster
    than a geometric series of ratio 1/2, are bounded by ``1e-17``.
    Rounding in the cancellation between the two series limits the
    absolute accuracy to about ``2e-10`` near ``x = 8``.
    """
    x = float(x)
    if abs(x) > AIRY_RANGE:
        raise RangeGuardError(f"|x| = {abs(x)} exceeds the Airy series range {AIRY_RANGE}")
    x3 = x**3
    f_term, g_term = 1.0, x
    f_sum, g_sum = [f_term], [g_term]
    k = 0
    while True:
        k += 1
        f_term *= x3 / ((3 * k - 1) * (3 * k))
        g_term *= x3 / ((3 * k) * (3 * k + 1))
        f_sum.append(f_term)
        g_sum.append(g_term)
        ratio = abs(x3) / (9.0 * k * k)
        if ratio < 0.5 and max(abs(f_term), abs(g_term)) < 1e-17:
            break
    return AI0 * math.fsum(f_sum) + AIP0 * math.fsum(g_sum)


def log_factorial_ratio(n, n_dim):
    """``log sqrt(n! / N**n)`` via ``lgamma``."""
    return 0.5 * (math.lgamma(n + 1) - n * math.log(n_dim))


def airy_regime_ratio(n, n_dim, z, omega=1.0, min_ai=1e-3):
    """``pi_n(z)`` divided by the Airy-window approximation.

    The approximation is
    ``(2 pi)**(1/4) exp(N z**2) 2**(-n) n**(-1/12) sqrt(n! / N**n) Ai(-k)``
    with ``k = (n - N z**2) (N z**2)**(-1/3)``, evaluated in log space.

    Raises
    ------
    DomainError
        Outside the parabolic window, or when ``|Ai(-k)| < min_ai``.
    RangeGuardError
        When ``|k| > 8``.
    """
    z = complex(z)
    if classify_regime(z, n_dim, n, omega) is not Regime.PARABOLIC:
        raise DomainError(f"n={n} is not in the parabolic window of z={z!r}, N={n_dim}")
    if abs(z.imag) > 0:
        raise DomainError("the Airy ratio is implemented for real z")
    nz2 = n_dim * z.real**2
    k = (n - nz2) * nz2 ** (-1.0 / 3.0)
    ai = airy_ai(-k)
    if abs(ai) < min_ai:
        raise DomainError(f"Ai(-k) = {ai:.3g} is too close to zero (k = {k:.6g})")
    log_model = (0.25 * math.log(2 * math.pi) + nz2 - n * LOG2 - math.log(n) / 12.0
                 + log_factorial_ratio(n, n_dim) + math.log(abs(ai)))
    pair = hermite_pi(z, n, n_dim)
    mant = complex(pair.v[0]).real
    return math.copysign(1.0, mant * ai) * math.exp(pair.log_prefactor.real + math.log(abs(mant)) - log_model)


# ---------------------------------------------------------------------------
# Chebyshev machinery and CLT
# ---------------------------------------------------------------------------


@dataclass
class ChebyshevSeries:
    coeffs: np.ndarray
    source: str = ""

    def __call__(self, x):
        # f = f_0 + 2 sum f_k T_k
        c = 2.0 * self.coeffs.copy()
        c[0] = self.coeffs[0]
        return np.polynomial.chebyshev.chebval(x, c)

    @property
    def sigma(self):
        """``Sigma(f) = sum_k k f_k**2``."""
        k = np.arange(self.coeffs.size)
        return float(np.sum(k * self.coeffs**2))


def chebyshev_coeffs(f, order, nodes=None, source=""):
    """``f_k = int f T_k / (pi sqrt(1 - x**2)) dx`` for ``k = 0..order``.

    Gauss-Chebyshev quadrature with ``M`` nodes is exact whenever
    ``deg(f) + k < 2M``; the default ``M = 2 (order + 1) + 32`` also gives
    near machine accuracy for entire ``f``.
    """
    m = nodes or 2 * (order + 1) + 32
    theta = np.pi * (np.arange(m) + 0.5) / m
    fx = np.asarray(f(np.cos(theta)), dtype=float)
    k = np.arange(order + 1)[:, None]
    coeffs = (np.cos(k * theta) @ fx) / m
    coeffs[np.abs(coeffs) < 1e-15] = 0.0
    return ChebyshevSeries(coeffs, source or getattr(f, "__name__", "f"))


def m_functional(series: ChebyshevSeries, f_at_pm1):
    """``m(f) = (f(1) + f(-1)) / 4 - f_0 / 2``."""
    return 0.25 * (f_at_pm1[0] + f_at_pm1[1]) - 0.5 * series.coeffs[0]


def clt_prediction(series: ChebyshevSeries, beta, f_at_pm1):
    """Predicted ``(mean, variance)``: ``(1 - 2/beta) m(f)`` and ``(2/beta) Sigma(f)``.

    For ``T_2`` the exact finite-``N`` mean is ``(2/beta - 1) m(f)``, of the
    opposite sign, so the Monte Carlo harness compares magnitudes and
    reports the measured sign separately.
    """
    mean = (1.0 - 2.0 / beta) * m_functional(series, f_at_pm1)
    return float(mean), float(2.0 / beta * series.sigma)


def semicircle_integral(f, nodes=256):
    """``int f(x) (2/pi) sqrt(1 - x**2) dx`` by Gauss-Chebyshev of the second kind."""
    j = np.arange(1, nodes + 1)
    theta = j * np.pi / (nodes + 1)
    return float(2.0 / (nodes + 1) * np.sum(np.sin(theta) ** 2 * f(np.cos(theta))))


def clt_statistic(f, model: TridiagonalModel, beta):
    """``sum_j f(lambda_j) - N int f rho``."""
    eigs = tridiag_eigenvalues(model, beta, residual=False).eigenvalues
    return float(np.sum(f(eigs)) - eigs.size * semicircle_integral(f))


def hermite_zeros(n_dim):
    d, e2 = hermite_coefficients(n_dim, n_dim)
    return jacobi_eigenvalues(d, e2)


def hermite_zero_identity(f, n_dim, order=16):
    """``sum f(z_j) - N int f rho + m(f)`` over the zeros ``z_j`` of ``pi_N``."""
    zeros = hermite_zeros(n_dim)
    series = chebyshev_coeffs(f, order)
    m = m_functional(series, (float(f(np.array(1.0))), float(f(np.array(-1.0)))))
    return float(np.sum(f(zeros)) - n_dim * semicircle_integral(f) + m)


def named_function(name):
    """Named test functions: ``T<k>`` (Chebyshev), ``x<k>`` (monomial), ``exp``, ``cos``."""
    m = re.fullmatch(r"T(\d+)", name)
    if m:
        k = int(m.group(1))
        c = np.zeros(k + 1)
        c[k] = 1.0
        return lambda x: np.polynomial.chebyshev.chebval(x, c)
    m = re.fullmatch(r"x(\d+)", name)
    if m:
        p = int(m.group(1))
        return lambda x: np.asarray(x, dtype=float) ** p
    if name == "exp":
        return np.exp
    if name == "cos":
        return np.cos
    raise ValueError(f"unknown test function {name!r}")


def clt_samples(f, n_dim, beta, replicas, seed, chunk=64, threads=1):
    from .parallel import map_chunks

    cfg = EnsembleConfig(n_dim, beta, seed)
    centre = n_dim * semicircle_integral(f)

    def work(start, count):
        d, e2 = sample_batch(cfg, count, start).scaled(beta)
        eigs = eigenvalues_batch(d, e2)
        return np.sum(f(eigs), axis=1) - centre

    return map_chunks(work, replicas, chunk, threads)


def run_clt(f_name, n_dim, beta, replicas, seed, order=16, threads=1):
    """Monte Carlo summary of the linear statistic against the CLT prediction."""
    f = named_function(f_name)
    stats = clt_samples(f, n_dim, beta, replicas, seed, threads=threads)
    series = chebyshev_coeffs(f, order, source=f_name)
    f_pm = (float(f(np.array(1.0))), float(f(np.array(-1.0))))
    mean, var = clt_prediction(series, beta, f_pm)
    return {
        "beta": float(beta), "N": int(n_dim), "replicas": int(replicas), "f_name": f_name,
        "sample_mean": float(np.mean(stats)), "sample_var": float(np.var(stats, ddof=1)),
        "predicted_mean_abs": abs(mean), "predicted_var": var,
        "se_mean": float(np.std(stats, ddof=1) / math.sqrt(replicas)),
        "m_f": float(m_functional(series, f_pm)),
        "sign_of_mean": int(np.sign(np.mean(stats))),
    }


def clt_json(result, spec=None):
    return format_json(result, spec=spec)
