"""Transfer-matrix recurrence for the characteristic polynomial and its factorization.

Conventions
-----------
The scaled matrix is ``A / sqrt(4 N beta)`` with diagonal ``d_k = b_k / (2 sqrt(N beta))``
and squared off-diagonal ``e2_k = a_k**2 / (4 N beta)``.  The recurrence is

    Phi_n = (z - d_n) Phi_{n-1} - e2_{n-1} Phi_{n-2},   Phi_0 = 1, Phi_{-1} = 0,

so the one-step transfer matrix is ``T_n = [[z - d_n, -e2_{n-1}], [1, 0]]``.
Replacing ``d_n`` by 0 and ``e2_{n-1}`` by ``(n-1)/(4N)`` gives the monic
Hermite polynomials ``pi_n`` orthogonal for the weight ``exp(-2 N x**2)``.

Square roots ``sqrt(z**2 - t)`` are always taken as
``sqrt(z - sqrt t) * sqrt(z + sqrt t)`` with principal factors.  That product
has its cut on ``[-sqrt t, sqrt t]``, behaves like ``z`` at infinity and, on
the cut approached from above, has nonnegative imaginary part.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from ._io import format_csv, format_json
from .errors import ParabolicSingularityError
from .sampling import TridiagonalModel, noise_from_model

LOG2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Branches: J and lambda
# ---------------------------------------------------------------------------


def _csqrt_shift(z, t):
    """``sqrt(z**2 - t)`` on the branch that behaves like ``z`` (vectorized)."""
    # Adding 0.0 maps a signed-zero imaginary part to +0 in both factors;
    # otherwise z - r and z + r could land on opposite sides of the cut.
    z = np.asarray(z, dtype=complex) + 0.0
    r = np.sqrt(np.asarray(t, dtype=float))
    return np.sqrt(z - r) * np.sqrt(z + r)


def inverse_joukowsky(z):
    """Inverse Joukowsky map ``J(z) = z - sqrt(z**2 - 1)`` with ``|J| <= 1``.

    On ``[-1, 1]`` the boundary value from the upper half-plane is returned,
    ``J(cos theta) = exp(-i theta)``.

    Parameters
    ----------
    z : complex or array_like

    Returns
    -------
    complex or numpy.ndarray
    """
    zz = np.asarray(z, dtype=complex) + 0.0
    s = _csqrt_shift(zz, 1.0)
    # 1 / (z + s) avoids the cancellation in z - s for large |z|.
    with np.errstate(divide="ignore", invalid="ignore"):
        j = np.where(np.abs(zz) > 1.0, 1.0 / (zz + s), zz - s)
    return complex(j) if j.ndim == 0 else j


def lambda_pm(z, t):
    """Eigenvalues ``lambda_+`` and ``lambda_-`` of the deterministic step at time ``t``.

    ``lambda_pm = (z +- sqrt(z**2 - t)) / 2`` with ``|lambda_+| >= |lambda_-|``.

    Returns
    -------
    (lambda_plus, lambda_minus)
    """
    zz = np.asarray(z, dtype=complex)
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise ValueError("t must be nonnegative")
    lp = np.where(tt == 0, zz, 0.5 * (zz + _csqrt_shift(zz, tt)))
    with np.errstate(divide="ignore", invalid="ignore"):
        lm = np.where(lp != 0, 0.25 * tt / lp, 0.0)
    if lp.ndim == 0:
        return complex(lp), complex(lm)
    return lp, lm


@dataclass(frozen=True)
class SpectralPoint:
    z: complex
    t: float
    lambda_plus: complex
    lambda_minus: complex
    j_value: complex

    @classmethod
    def at(cls, z, t):
        lp, lm = lambda_pm(z, t)
        j = inverse_joukowsky(z / math.sqrt(t)) if t > 0 else 0j
        return cls(complex(z), float(t), lp, lm, j)

    @property
    def rho(self):
        return self.lambda_minus / self.lambda_plus


def _check_step(z, n_dim, s, ks):
    """Raise if ``sqrt(z**2 - k/N)`` vanishes (or nearly) at any of ``ks``."""
    scale = 64 * np.finfo(float).eps * max(1.0, abs(z) ** 2)
    bad = np.abs(s) ** 2 <= scale
    if np.any(bad):
        k = int(np.asarray(ks)[np.argmax(bad)])
        raise ParabolicSingularityError(k, z)


def delta_step(z, n_dim, k):
    """Step size ``delta_k`` of ``lambda_+`` relative to the eigenvalue gap.

    ``delta_k = (lambda_+(k/N) - lambda_+((k-1)/N)) / (lambda_+(k/N) - lambda_-(k/N))``.
    """
    if not 1 <= k <= n_dim:
        raise ValueError(f"k must lie in 1..{n_dim}, got {k}")
    z = complex(z)
    s = complex(_csqrt_shift(z, k / n_dim))
    _check_step(z, n_dim, np.array([s]), [k])
    lp, _ = lambda_pm(z, k / n_dim)
    lp1, _ = lambda_pm(z, (k - 1) / n_dim)
    return (lp - lp1) / s


# ---------------------------------------------------------------------------
# Regimes and domains
# ---------------------------------------------------------------------------


class Regime(str, enum.Enum):
    HYPERBOLIC = "hyperbolic"
    PARABOLIC = "parabolic"
    ELLIPTIC = "elliptic"


@dataclass(frozen=True)
class HyperbolicWindow:
    """Turning index ``N_p``, window half-width ``omega_N`` and last hyperbolic index ``N_H``."""

    n_p: int
    omega_n: float
    n_h: int
    omega_param: float = 1.0

    @classmethod
    def of(cls, z, n_dim, omega=1.0):
        n_p = int(math.floor(n_dim * complex(z).real ** 2))
        w = n_p ** (1.0 / 3.0) * (omega * math.log(n_p)) ** (2.0 / 3.0) if n_p >= 2 else 0.0
        n_h = max(0, int(math.floor(min(n_p - w, n_dim))))
        return cls(n_p, w, n_h, float(omega))


def classify_regime(z, n_dim, n, omega=1.0) -> Regime:
    """Regime of the transfer step ``n`` at spectral parameter ``z``.

    Parabolic when ``|n - N (Re z)**2| <= omega_N`` (ties go here), hyperbolic
    below that window and elliptic above it.
    """
    win = HyperbolicWindow.of(z, n_dim, omega)
    turn = n_dim * complex(z).real ** 2
    if abs(n - turn) <= win.omega_n:
        return Regime.PARABOLIC
    return Regime.HYPERBOLIC if n < turn else Regime.ELLIPTIC


def in_domain_P(z, n_dim, alpha=1 / 9) -> bool:
    z = complex(z)
    return abs(z.imag) >= n_dim**-alpha or abs(z.real) >= 1 + 0.5 * n_dim ** (-2 * alpha)


def in_domain_DH(z, n_dim, delta=1 / 45) -> bool:
    z = complex(z)
    return 0 <= z.imag <= 2 * z.real and z.real >= n_dim ** (delta - 0.5)


# ---------------------------------------------------------------------------
# Recurrences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaledPair:
    """``(Phi_n, Phi_{n-1}) = exp(log_prefactor) * v`` with ``max|v|`` in ``[1/2, 2]``."""

    v: np.ndarray
    log_prefactor: complex

    @property
    def value(self):
        return np.exp(self.log_prefactor) * self.v

    @property
    def log_first(self):
        """Principal-branch ``log`` of the first component (``log Phi_n``)."""
        with np.errstate(divide="ignore"):
            return self.log_prefactor + np.log(complex(self.v[0]))


@dataclass
class Trajectory:
    """Scaled ``(Phi_n, Phi_{n-1})`` for ``n = 1..N`` (stored as arrays)."""

    z: complex
    hi: np.ndarray
    lo: np.ndarray
    exponent: np.ndarray

    def __len__(self):
        return self.hi.size

    def __getitem__(self, i) -> ScaledPair:
        if i < 0:
            i += len(self)
        return ScaledPair(np.array([self.hi[i], self.lo[i]]), complex(self.exponent[i] * LOG2))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def final(self) -> ScaledPair:
        return self[-1]

    def log_phi(self):
        """``log Phi_n`` for ``n = 1..N`` (principal branch for the mantissa)."""
        with np.errstate(divide="ignore"):
            return self.exponent * LOG2 + np.log(self.hi)

    def values(self):
        """Unscaled ``Phi_n`` (may overflow for large N)."""
        return self.hi * np.exp2(self.exponent.astype(float))


def _raw_trajectory(z, d, e2):
    n_dim = d.size
    hi = np.empty(n_dim, dtype=complex)
    lo = np.empty(n_dim, dtype=complex)
    p1, p0 = z - d[0], 1.0 + 0j
    for n in range(n_dim):
        if n:
            p1, p0 = (z - d[n]) * p1 - e2[n - 1] * p0, p1
        hi[n], lo[n] = p1, p0
    return hi, lo, np.zeros(n_dim, dtype=np.int64)


def char_poly(z, model: TridiagonalModel, beta, renormalize=True) -> Trajectory:
    """Characteristic polynomials ``Phi_n(z)`` of the leading minors, ``n = 1..N``.

    Parameters
    ----------
    z : complex
    model : TridiagonalModel
    beta : float
    renormalize : bool, default True
        Rescale the pair by a power of two after every step.  Turning this
        off is only useful for small N (overflow near N ~ 700).

    Returns
    -------
    Trajectory
        ``traj[n - 1]`` is the ScaledPair ``(Phi_n, Phi_{n-1})``.
    """
    d, e2 = model.scaled(beta)
    z = complex(z)
    if renormalize:
        hi, lo, ex = kernels.charpoly_trajectory(z, d, e2)
    else:
        hi, lo, ex = _raw_trajectory(z, d, e2)
    return Trajectory(z, np.asarray(hi), np.asarray(lo), np.asarray(ex))


def hermite_coefficients(n_dim, n):
    """Scaled Jacobi data ``(d, e2)`` of the deterministic recurrence up to step ``n``."""
    return np.zeros(n), np.arange(1, n, dtype=float) / (4.0 * n_dim)


def hermite_trajectory(z, n, n_dim) -> Trajectory:
    d, e2 = hermite_coefficients(n_dim, n)
    hi, lo, ex = kernels.charpoly_trajectory(complex(z), d, e2)
    return Trajectory(complex(z), np.asarray(hi), np.asarray(lo), np.asarray(ex))


def hermite_pi(z, n, n_dim) -> ScaledPair:
    """``(pi_n(z), pi_{n-1}(z))`` in scaled form; ``pi_0 = 1`` and ``pi_{-1} = 0``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return ScaledPair(np.array([1.0 + 0j, 0j]), 0j)
    return hermite_trajectory(z, n, n_dim).final


def log_charpoly_batch(z, d, e2):
    """``log Phi_N(z)`` per row of scaled arrays ``d`` (R, N) and ``e2`` (R, N-1)."""
    d = np.ascontiguousarray(d, dtype=float)
    e2 = np.ascontiguousarray(e2, dtype=float)
    if e2.shape[1] == 0:
        e2 = np.zeros((d.shape[0], 0))
    hi, _, ex = kernels.charpoly_final_batch(complex(z), d, e2)
    with np.errstate(divide="ignore"):
        return np.asarray(ex) * LOG2 + np.log(np.asarray(hi))


def log_hermite(z, n, n_dim):
    """``log pi_n(z)`` (principal branch on the mantissa)."""
    return hermite_pi(z, n, n_dim).log_first


# ---------------------------------------------------------------------------
# Hyperbolic factorization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FactoredStep:
    """One factor ``T_k = exp(log_scalar) V_{k+1} U_k V_k^{-1}``."""

    k: int
    u_matrix: np.ndarray
    eta_11: complex
    eta_12: complex
    eta_21: complex
    eta_22: complex
    delta_k: complex
    rho_km1: complex
    log_scalar: complex


def v_matrix(z, n_dim, k):
    """``V_k = [[lambda_+((k-1)/N), lambda_-((k-1)/N)], [1, 1]]``."""
    lp, lm = lambda_pm(z, (k - 1) / n_dim)
    return np.array([[lp, lm], [1.0, 1.0]], dtype=complex)


def _step_constants(z, n_dim):
    """Deterministic per-step quantities for ``k = 1..N`` (index ``k - 1``)."""
    k = np.arange(1, n_dim + 1)
    t = k / n_dim
    tm1 = (k - 1) / n_dim
    s = _csqrt_shift(z, t)
    _check_step(z, n_dim, s, k)
    lp = 0.5 * (z + s)
    lp1 = 0.5 * (z + _csqrt_shift(z, tm1))
    with np.errstate(divide="ignore", invalid="ignore"):
        lm1 = np.where(lp1 != 0, 0.25 * tm1 / lp1, 0.0)
        rho = np.where(lp1 != 0, lm1 / lp1, 0.0)
    return {
        "k": k,
        "gap": s,
        "lp1": lp1,
        "delta": (lp - lp1) / s,
        "rho": rho,
        # sqrt((k-1)/N) / (2 lambda_+((k-1)/N)) = J(z sqrt(N/(k-1)))
        "jy": np.where(lp1 != 0, 0.5 * np.sqrt(tm1) / np.where(lp1 != 0, lp1, 1.0), 0.0),
    }


@dataclass
class FactoredSteps:
    """Factorization data for ``k = 2..N`` as arrays with a leading replica axis optional.

    Arrays have last axis of length ``N - 1``; position ``i`` holds ``k = i + 2``.
    ``eta11_first`` is ``eta_{1,11}``, needed by the discrete field only.
    """

    z: complex
    n_dim: int
    eta11: np.ndarray
    eta12: np.ndarray
    eta21: np.ndarray
    eta22: np.ndarray
    delta: np.ndarray
    rho: np.ndarray
    log_scalar: np.ndarray
    eta11_first: np.ndarray | complex

    def __len__(self):
        return self.eta11.shape[-1]

    def u_matrices(self):
        """Array ``(..., N-1, 2, 2)`` of ``U_k``."""
        shape = self.eta11.shape + (2, 2)
        u = np.empty(shape, dtype=complex)
        u[..., 0, 0] = 1.0
        u[..., 0, 1] = self.eta12
        u[..., 1, 0] = self.eta21
        u[..., 1, 1] = self.rho - self.eta22
        return u

    def step(self, k) -> FactoredStep:
        if self.eta11.ndim != 1:
            raise ValueError("step() needs a single-replica FactoredSteps")
        i = k - 2
        if not 0 <= i < len(self):
            raise IndexError(f"k must lie in 2..{self.n_dim}")
        u = np.array([[1.0, self.eta12[i]], [self.eta21[i], self.rho[i] - self.eta22[i]]])
        return FactoredStep(
            k, u, *(complex(a[i]) for a in (self.eta11, self.eta12, self.eta21, self.eta22)),
            complex(self.delta[i]), complex(self.rho[i]), complex(self.log_scalar[i]),
        )

    def __iter__(self):
        return (self.step(k) for k in range(2, self.n_dim + 1))


def factor_noise(z, x, y, n_dim, beta) -> FactoredSteps:
    """Factorization from noise arrays ``x``, ``y`` of shape ``(..., N)``.

    The entries follow from ``V_{k+1}^{-1} T_k V_k`` written as
    ``lambda_+((k-1)/N) (1 - delta_k - eta_{k,11}) U_k``.
    """
    z = complex(z)
    c = _step_constants(z, n_dim)
    pref = 1.0 / (math.sqrt(2.0 * beta * n_dim) * c["gap"])
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float) * c["jy"]
    e11 = pref * (xs + ys)
    first = e11[..., 0]
    sl = slice(1, None)
    e11 = e11[..., sl]
    dl, rho, lp1 = c["delta"][sl], c["rho"][sl], c["lp1"][sl]
    mix = pref[sl] * (rho * xs[..., sl] + ys[..., sl])
    den = 1.0 - dl - e11
    e12 = (rho * dl - mix) / den
    e21 = (dl + e11) / den
    e22 = -(rho * e11 + mix) / den
    log_scalar = np.log(lp1) + np.log(den)
    shape = e11.shape
    return FactoredSteps(
        z, n_dim, e11, e12, e21, e22,
        np.broadcast_to(dl, shape), np.broadcast_to(rho, shape), log_scalar, first,
    )


def factored_steps(z, model: TridiagonalModel, beta) -> FactoredSteps:
    """Hyperbolic factorization of every transfer step ``k = 2..N``.

    Raises
    ------
    ParabolicSingularityError
        If ``z**2 = k/N`` (to within a few ulps) for some visited ``k``.
    """
    noise = noise_from_model(model, beta)
    return factor_noise(z, noise.x, noise.y, model.n_dim, beta)


def transfer_matrix(z, model: TridiagonalModel, beta, k):
    d, e2 = model.scaled(beta)
    return np.array([[z - d[k - 1], -e2[k - 2]], [1.0, 0.0]], dtype=complex)


def reconstruct_pair(steps: FactoredSteps, model: TridiagonalModel, beta):
    """``(Phi_N, Phi_{N-1})`` rebuilt from the factorization.

    Returns the pair as ``(log_scale, vector)`` with the product of scalars
    kept in log form.
    """
    z, n = steps.z, steps.n_dim
    d, _ = model.scaled(beta)
    prod = np.eye(2, dtype=complex)
    for u in steps.u_matrices():
        prod = u @ prod
    vec = v_matrix(z, n, n + 1) @ prod @ np.linalg.solve(v_matrix(z, n, 2), [z - d[0], 1.0])
    return complex(np.sum(steps.log_scalar)), vec


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def trajectory_csv(traj: Trajectory, n_dim, omega=1.0, spec=None) -> str:
    lp = traj.log_phi()
    rows = [
        (n, float(lp[n - 1].real), float(lp[n - 1].imag), classify_regime(traj.z, n_dim, n, omega).value)
        for n in range(1, len(traj) + 1)
    ]
    return format_csv(["n", "re_logphi", "im_logphi", "regime"], rows, spec=spec)


def grid_json(zs, model: TridiagonalModel, beta, spec=None) -> str:
    out = []
    for z in zs:
        lp = char_poly(z, model, beta).final.log_first
        out.append({"z_re": complex(z).real, "z_im": complex(z).imag,
                    "log_phi_re": lp.real, "log_phi_im": lp.imag})
    return format_json({"grid": out}, spec=spec)
