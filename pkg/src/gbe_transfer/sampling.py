"""Seeded draws of the tridiagonal model and its normalized noise variables.

Every random quantity is drawn from a dedicated substream identified by
``(seed, replica, kind)``.  The substream is a Philox counter-based generator
keyed by a :class:`numpy.random.SeedSequence` with that spawn key, so the
position ``k`` inside a model is simply the counter offset within the stream.
Replicas can therefore be generated in any order, on any number of threads,
and always produce the same arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._io import format_csv
from .errors import DomainError

# Variable kinds, used as the second spawn-key component.
KIND_DIAG = 0
KIND_OFFDIAG = 1
KIND_BRIDGE = 2
KIND_GAF = 3
KIND_AUX = 4


def substream(seed: int, replica: int, kind: int) -> np.random.Generator:
    """Independent generator for one (replica, variable-kind) pair."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica), int(kind)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class EnsembleConfig:
    """Matrix size ``n_dim`` (N), inverse temperature ``beta`` and seed."""

    n_dim: int
    beta: float
    seed: int = 0

    def __post_init__(self):
        if int(self.n_dim) != self.n_dim or self.n_dim < 1:
            raise DomainError(f"n_dim must be a positive integer, got {self.n_dim!r}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be positive, got {self.beta!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise DomainError(f"seed must fit in 64 unsigned bits, got {self.seed!r}")


@dataclass(frozen=True)
class TruncationConfig:
    level: float

    def __post_init__(self):
        if not self.level > 0:
            raise DomainError(f"truncation level must be positive, got {self.level!r}")


@dataclass
class TridiagonalModel:
    """One draw: diagonal ``b_1..b_N`` and off-diagonal ``a_1..a_{N-1}``."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        self.diag = np.ascontiguousarray(self.diag, dtype=float)
        self.offdiag = np.ascontiguousarray(self.offdiag, dtype=float)
        if self.diag.ndim != 1 or self.diag.size < 1:
            raise DomainError("diag must be a nonempty 1-d array")
        if self.offdiag.shape != (self.diag.size - 1,):
            raise DomainError("offdiag must have length len(diag) - 1")
        if np.any(self.offdiag < 0):
            raise DomainError("offdiag entries must be nonnegative")

    @property
    def n_dim(self) -> int:
        return self.diag.size

    def scaled(self, beta):
        """Diagonal and squared off-diagonal of ``A / sqrt(4 N beta)``."""
        n = self.n_dim
        d = self.diag / (2.0 * math.sqrt(n * beta))
        e2 = self.offdiag**2 / (4.0 * n * beta)
        return d, e2

    @classmethod
    def noise_free(cls, n_dim, beta):
        """The model with ``b = 0`` and ``a_k**2 = beta * k``."""
        return cls(np.zeros(n_dim), np.sqrt(beta * np.arange(1, n_dim)))


@dataclass
class ModelBatch:
    """``R`` independent models stacked row-wise."""

    diag: np.ndarray
    offdiag: np.ndarray
    first_replica: int = 0

    @property
    def replicas(self) -> int:
        return self.diag.shape[0]

    @property
    def n_dim(self) -> int:
        return self.diag.shape[1]

    def model(self, r) -> TridiagonalModel:
        return TridiagonalModel(self.diag[r], self.offdiag[r])

    def scaled(self, beta):
        n = self.n_dim
        d = np.ascontiguousarray(self.diag / (2.0 * math.sqrt(n * beta)))
        e2 = np.ascontiguousarray(self.offdiag**2 / (4.0 * n * beta))
        return d, e2


@dataclass
class NoiseSequence:
    """Centered, normalized noise ``X_k`` and ``Y_k`` (index 0 holds k = 1)."""

    x: np.ndarray
    y: np.ndarray
    beta: float = field(default=float("nan"))

    @classmethod
    def zeros(cls, n_dim, beta=float("nan")):
        return cls(np.zeros(n_dim), np.zeros(n_dim), beta)


def sample_chi(alpha, rng: np.random.Generator, size=None):
    """Draw from the chi distribution with ``alpha`` degrees of freedom.

    Uses ``chi_alpha = sqrt(2 G)`` with ``G ~ Gamma(alpha / 2, 1)``.  The gamma
    draw is numpy's Marsaglia-Tsang sampler, which boosts shapes below one.

    Parameters
    ----------
    alpha : float or array_like
        Degrees of freedom, strictly positive.
    rng : numpy.random.Generator
    size : int or tuple, optional
        Output shape when ``alpha`` is a scalar.

    Returns
    -------
    float or numpy.ndarray
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(~(a > 0)):
        raise DomainError(f"chi degrees of freedom must be positive, got {alpha!r}")
    g = rng.standard_gamma(a / 2.0, size=size)
    out = np.sqrt(2.0 * g)
    return float(out) if np.ndim(out) == 0 else out


def _draw(config: EnsembleConfig, replica: int):
    n = config.n_dim
    b = substream(config.seed, replica, KIND_DIAG).normal(0.0, math.sqrt(2.0), size=n)
    dof = config.beta * np.arange(1, n)
    rng = substream(config.seed, replica, KIND_OFFDIAG)
    a = sample_chi(dof, rng) if n > 1 else np.empty(0)
    return b, np.asarray(a, dtype=float)


def sample_model(config: EnsembleConfig, replica: int = 0) -> TridiagonalModel:
    """Draw the model for one replica of ``config``.

    ``diag`` entries are i.i.d. N(0, 2) and ``offdiag[i-1] ~ chi_{beta i}``.
    """
    b, a = _draw(config, replica)
    return TridiagonalModel(b, a)


def sample_batch(config: EnsembleConfig, replicas: int, start: int = 0) -> ModelBatch:
    """Replicas ``start .. start + replicas - 1`` stacked into arrays.

    Row ``r`` equals ``sample_model(config, start + r)`` bit for bit.
    """
    n = config.n_dim
    diag = np.empty((replicas, n))
    off = np.empty((replicas, n - 1))
    for r in range(replicas):
        diag[r], off[r] = _draw(config, start + r)
    return ModelBatch(diag, off, start)


def noise_from_model(model: TridiagonalModel, beta) -> NoiseSequence:
    """``X_k = b_k / sqrt 2`` and ``Y_k = (a_{k-1}^2 - beta (k-1)) / sqrt(2 beta (k-1))``."""
    x = model.diag / math.sqrt(2.0)
    km1 = np.arange(1, model.n_dim, dtype=float)
    y = np.zeros(model.n_dim)
    y[1:] = (model.offdiag**2 - beta * km1) / np.sqrt(2.0 * beta * km1)
    return NoiseSequence(x, y, float(beta))


def noise_from_batch(batch: ModelBatch, beta):
    """Vectorized :func:`noise_from_model`; returns arrays ``(X, Y)`` of shape (R, N)."""
    x = batch.diag / math.sqrt(2.0)
    km1 = np.arange(1, batch.n_dim, dtype=float)
    y = np.zeros_like(batch.diag)
    y[:, 1:] = (batch.offdiag**2 - beta * km1) / np.sqrt(2.0 * beta * km1)
    return x, y


def truncation_holds(noise: NoiseSequence, trunc: TruncationConfig, beta) -> bool:
    """Whether the noise lies in the truncation event at level ``S``.

    The event asks for ``|Y_k| <= sqrt(S)`` when ``k >= ceil(S / beta)``,
    ``|Y_k| <= S`` when ``k < ceil(S / beta)`` and ``|X_k| <= sqrt(S)`` for
    every k.
    """
    s = trunc.level
    root = math.sqrt(s)
    k = np.arange(1, noise.y.size + 1)
    cut = math.ceil(s / beta)
    y = np.abs(noise.y)
    ok_y = np.where(k >= cut, y <= root, y <= s)
    return bool(np.all(ok_y) and np.all(np.abs(noise.x) <= root))


def model_to_csv(model: TridiagonalModel, config: EnsembleConfig, spec=None) -> str:
    """CSV with columns ``index, b, a``; the last row has an empty ``a``."""
    meta = dict(spec or {})
    meta.update(N=config.n_dim, beta=config.beta, seed=config.seed)
    rows = []
    for i in range(model.n_dim):
        a = model.offdiag[i] if i < model.n_dim - 1 else ""
        rows.append((i + 1, float(model.diag[i]), a if a == "" else float(a)))
    return format_csv(["index", "b", "a"], rows, spec=meta)
