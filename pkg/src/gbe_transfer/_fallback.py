"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures, same return conventions. Loops that the compiled core runs
per replica are vectorized across replicas (or across eigenvalue indices)
here instead.
"""

import math

import numpy as np

_TINY = np.finfo(float).tiny


def _renorm(p1, p0):
    m = np.maximum(
        np.maximum(np.abs(p1.real), np.abs(p1.imag)),
        np.maximum(np.abs(p0.real), np.abs(p0.imag)),
    )
    _, e = np.frexp(np.where(m > 0.0, m, 1.0))
    scale = np.ldexp(1.0, -e)
    return p1 * scale, p0 * scale, e.astype(np.int64)


def charpoly_trajectory(z, d, e2):
    n_dim = d.shape[0]
    hi = np.empty(n_dim, dtype=np.complex128)
    lo = np.empty(n_dim, dtype=np.complex128)
    ex = np.empty(n_dim, dtype=np.int64)
    z = complex(z)
    p1, p0 = z - d[0], 1.0 + 0.0j
    acc = 0
    for n in range(n_dim):
        if n > 0:
            p1, p0 = (z - d[n]) * p1 - e2[n - 1] * p0, p1
        m = max(abs(p1.real), abs(p1.imag), abs(p0.real), abs(p0.imag))
        if m > 0.0:
            e = math.frexp(m)[1]
            p1 = math.ldexp(1.0, -e) * p1
            p0 = math.ldexp(1.0, -e) * p0
            acc += e
        hi[n], lo[n], ex[n] = p1, p0, acc
    return hi, lo, ex


def charpoly_final_batch(z, d, e2):
    n_rep, n_dim = d.shape
    p1 = complex(z) - d[:, 0].astype(np.complex128)
    p0 = np.ones(n_rep, dtype=np.complex128)
    acc = np.zeros(n_rep, dtype=np.int64)
    for n in range(1, n_dim):
        p1, p0 = (z - d[:, n]) * p1 - e2[:, n - 1] * p0, p1
        if n % 8 == 0:
            p1, p0, e = _renorm(p1, p0)
            acc += e
    p1, p0, e = _renorm(p1, p0)
    return p1, p0, acc + e


def _pivmin(e2):
    big = max(1.0, float(e2.max())) if e2.size else 1.0
    return _TINY * big * 1e10


def _count_below_many(d, e2, x, pivmin):
    q = d[0] - x
    q = np.where(np.abs(q) < pivmin, -pivmin, q)
    cnt = (q < 0.0).astype(np.int64)
    for i in range(1, d.shape[0]):
        q = (d[i] - x) - e2[i - 1] / q
        q = np.where(np.abs(q) < pivmin, -pivmin, q)
        cnt += q < 0.0
    return cnt


def sturm_count(d, e2, x):
    return int(_count_below_many(d, e2, np.asarray([x], dtype=float), _pivmin(e2))[0])


def tridiag_eigvals(d, e2, rtol=1e-12):
    n_dim = d.shape[0]
    off = np.sqrt(e2)
    r = np.zeros(n_dim)
    r[1:] += off
    r[:-1] += off
    lo, hi = float((d - r).min()), float((d + r).max())
    tol = rtol * max(1.0, abs(lo), abs(hi))
    lo -= tol
    hi += tol
    a = np.full(n_dim, lo)
    b = np.full(n_dim, hi)
    k = np.arange(n_dim)
    pivmin = _pivmin(e2)
    steps = max(1, math.ceil(math.log2((hi - lo) / tol)))
    for _ in range(steps):
        mid = 0.5 * (a + b)
        above = _count_below_many(d, e2, mid, pivmin) > k
        b = np.where(above, mid, b)
        a = np.where(above, a, mid)
    return 0.5 * (a + b)


def tridiag_eigvals_batch(d, e2, rtol=1e-12):
    return np.stack([tridiag_eigvals(d[r], e2[r], rtol) for r in range(d.shape[0])])


def matprod2_batch(m):
    n_rep = m.shape[0]
    out = np.broadcast_to(np.eye(2, dtype=np.complex128), (n_rep, 2, 2)).copy()
    for k in range(m.shape[1]):
        out = np.einsum("rij,rjk->rik", m[:, k], out)
    return out
