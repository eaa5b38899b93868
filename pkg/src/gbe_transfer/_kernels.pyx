# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every function here has a numpy twin in ``_fallback`` with the same
signature and semantics; ``_backend`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport frexp, ldexp, fabs, log, M_LN2

cnp.import_array()


cdef inline double _cmax(double complex a, double complex b) nogil:
    cdef double x = fabs(a.real)
    cdef double y = fabs(a.imag)
    if y > x:
        x = y
    y = fabs(b.real)
    if y > x:
        x = y
    y = fabs(b.imag)
    if y > x:
        x = y
    return x


def charpoly_trajectory(double complex z, double[::1] d, double[::1] e2):
    """Scaled trajectory of (Phi_n, Phi_{n-1}) for n = 1..N.

    ``d`` holds b_n / (2 sqrt(N beta)) and ``e2`` holds a_n^2 / (4 N beta).
    Rescaling is by exact powers of two, so the mantissas are unaffected.
    """
    cdef Py_ssize_t n_dim = d.shape[0]
    hi_arr = np.empty(n_dim, dtype=np.complex128)
    lo_arr = np.empty(n_dim, dtype=np.complex128)
    ex_arr = np.empty(n_dim, dtype=np.int64)
    cdef double complex[::1] hi = hi_arr
    cdef double complex[::1] lo = lo_arr
    cdef long long[::1] ex = ex_arr
    cdef double complex p1, p0, tmp
    cdef long long acc = 0
    cdef int e
    cdef Py_ssize_t n
    cdef double m
    with nogil:
        p1 = z - d[0]
        p0 = 1.0
        m = _cmax(p1, p0)
        if m > 0.0:
            frexp(m, &e)
            p1 = ldexp(1.0, -e) * p1
            p0 = ldexp(1.0, -e) * p0
            acc += e
        hi[0] = p1
        lo[0] = p0
        ex[0] = acc
        for n in range(1, n_dim):
            tmp = (z - d[n]) * p1 - e2[n - 1] * p0
            p0 = p1
            p1 = tmp
            m = _cmax(p1, p0)
            if m > 0.0:
                frexp(m, &e)
                p1 = ldexp(1.0, -e) * p1
                p0 = ldexp(1.0, -e) * p0
                acc += e
            hi[n] = p1
            lo[n] = p0
            ex[n] = acc
    return hi_arr, lo_arr, ex_arr


def charpoly_final_batch(double complex z, double[:, ::1] d, double[:, ::1] e2):
    """Final scaled pair for each row (replica).

    Returns ``(hi, lo, ex)`` with (Phi_N, Phi_{N-1}) = 2**ex * (hi, lo).
    """
    cdef Py_ssize_t n_rep = d.shape[0]
    cdef Py_ssize_t n_dim = d.shape[1]
    hi_arr = np.empty(n_rep, dtype=np.complex128)
    lo_arr = np.empty(n_rep, dtype=np.complex128)
    ex_arr = np.empty(n_rep, dtype=np.int64)
    cdef double complex[::1] hi = hi_arr
    cdef double complex[::1] lo = lo_arr
    cdef long long[::1] ex = ex_arr
    cdef double complex p1, p0, tmp
    cdef long long acc
    cdef int e
    cdef Py_ssize_t r, n
    cdef double m
    with nogil:
        for r in range(n_rep):
            p1 = z - d[r, 0]
            p0 = 1.0
            acc = 0
            for n in range(1, n_dim):
                tmp = (z - d[r, n]) * p1 - e2[r, n - 1] * p0
                p0 = p1
                p1 = tmp
                m = _cmax(p1, p0)
                if m > 4.0 or m < 0.25:
                    if m > 0.0:
                        frexp(m, &e)
                        p1 = ldexp(1.0, -e) * p1
                        p0 = ldexp(1.0, -e) * p0
                        acc += e
            m = _cmax(p1, p0)
            if m > 0.0:
                frexp(m, &e)
                p1 = ldexp(1.0, -e) * p1
                p0 = ldexp(1.0, -e) * p0
                acc += e
            hi[r] = p1
            lo[r] = p0
            ex[r] = acc
    return hi_arr, lo_arr, ex_arr


cdef inline Py_ssize_t _count_below(const double* d, const double* e2,
                                    Py_ssize_t n_dim, double x,
                                    double pivmin) nogil:
    cdef Py_ssize_t i, cnt = 0
    cdef double q = d[0] - x
    if fabs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        cnt += 1
    for i in range(1, n_dim):
        q = (d[i] - x) - e2[i - 1] / q
        if fabs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            cnt += 1
    return cnt


def sturm_count(double[::1] d, double[::1] e2, double x):
    """Number of eigenvalues strictly below ``x``."""
    cdef Py_ssize_t n_dim = d.shape[0]
    cdef double pivmin = _pivmin(&d[0], &e2[0] if n_dim > 1 else NULL, n_dim)
    return _count_below(&d[0], &e2[0] if n_dim > 1 else NULL, n_dim, x, pivmin)


cdef inline double _pivmin(const double* d, const double* e2,
                           Py_ssize_t n_dim) nogil:
    cdef double big = 1.0
    cdef Py_ssize_t i
    for i in range(n_dim - 1):
        if e2[i] > big:
            big = e2[i]
    return 2.2250738585072014e-308 * big * 1e10


cdef inline double _phi_end(const double* d, const double* e2,
                            Py_ssize_t n_dim, double x, int* ex) nogil:
    # Phi_N(x) as mantissa * 2**ex, via the multiplicative recurrence
    cdef double p1 = x - d[0]
    cdef double p0 = 1.0
    cdef double tmp, m
    cdef int e, acc = 0
    cdef Py_ssize_t i
    for i in range(1, n_dim):
        tmp = (x - d[i]) * p1 - e2[i - 1] * p0
        p0 = p1
        p1 = tmp
        m = fabs(p1) if fabs(p1) > fabs(p0) else fabs(p0)
        if m > 1e100 or m < 1e-100:
            if m > 0.0:
                frexp(m, &e)
                p1 = ldexp(p1, -e)
                p0 = ldexp(p0, -e)
                acc += e
    p1 = frexp(p1, &e)
    ex[0] = acc + e
    return p1


cdef double _refine(const double* d, const double* e2, Py_ssize_t n_dim,
                    double a, double b, double tol, double pivmin,
                    Py_ssize_t k) nogil:
    # a < root < b with a single eigenvalue inside; Illinois regula falsi
    # with a bisection fallback whenever the bracket stops halving
    cdef int ea, eb, ec, side = 0
    cdef double fa = _phi_end(d, e2, n_dim, a, &ea)
    cdef double fb = _phi_end(d, e2, n_dim, b, &eb)
    cdef double fc, c, w, prev = 2.0 * (b - a), ratio
    cdef Py_ssize_t cnt
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa > 0.0) == (fb > 0.0):
        # underflowed values; plain Sturm bisection
        while b - a > tol:
            c = 0.5 * (a + b)
            cnt = _count_below(d, e2, n_dim, c, pivmin)
            if cnt > k:
                b = c
            else:
                a = c
        return 0.5 * (a + b)
    while b - a > tol:
        w = b - a
        if w > 0.5 * prev or eb - ea > 900 or ea - eb > 900:
            c = 0.5 * (a + b)
        else:
            ratio = ldexp(fb / fa, eb - ea)
            c = a + w / (1.0 - ratio)
            if c < a + 0.5 * tol:
                c = a + 0.5 * tol
            elif c > b - 0.5 * tol:
                c = b - 0.5 * tol
        prev = w
        if c <= a or c >= b:
            break
        fc = _phi_end(d, e2, n_dim, c, &ec)
        if fc == 0.0:
            return c
        if (fc > 0.0) == (fa > 0.0):
            a = c
            fa = fc
            ea = ec
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            b = c
            fb = fc
            eb = ec
            if side == 1:
                fa *= 0.5
            side = 1
    return 0.5 * (a + b)


cdef void _eigvals(const double* d, const double* e2, Py_ssize_t n_dim,
                   double rtol, double* out, double* upper,
                   Py_ssize_t* upper_cnt) nogil:
    cdef double lo = d[0]
    cdef double hi = d[0]
    cdef double r, a, b, mid, tol, radius
    cdef Py_ssize_t i, k, c, j, ca, cb
    cdef double pivmin = _pivmin(d, e2, n_dim)
    # Gershgorin enclosure
    for i in range(n_dim):
        r = 0.0
        if i > 0:
            r += e2[i - 1] ** 0.5
        if i < n_dim - 1:
            r += e2[i] ** 0.5
        if d[i] - r < lo:
            lo = d[i] - r
        if d[i] + r > hi:
            hi = d[i] + r
    radius = fabs(lo)
    if fabs(hi) > radius:
        radius = fabs(hi)
    if radius < 1.0:
        radius = 1.0
    tol = rtol * radius
    lo -= tol
    hi += tol
    for k in range(n_dim):
        upper[k] = hi
        upper_cnt[k] = n_dim
    a = lo
    ca = 0
    for k in range(n_dim):
        b = upper[k]
        cb = upper_cnt[k]
        # isolate eigenvalue k by Sturm bisection
        while b - a > tol and not (ca == k and cb == k + 1):
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            c = _count_below(d, e2, n_dim, mid, pivmin)
            if c > k:
                b = mid
                cb = c
                j = c - 1
                while j > k and upper[j] > mid:
                    upper[j] = mid
                    upper_cnt[j] = c
                    j -= 1
            else:
                a = mid
                ca = c
        if b - a > tol:
            out[k] = _refine(d, e2, n_dim, a, b, tol, pivmin, k)
            # (out[k], b] holds no other eigenvalue
            a = b
            ca = cb
        else:
            out[k] = 0.5 * (a + b)


def tridiag_eigvals(double[::1] d, double[::1] e2, double rtol=1e-12):
    cdef Py_ssize_t n_dim = d.shape[0]
    out_arr = np.empty(n_dim, dtype=np.float64)
    upper_arr = np.empty(n_dim, dtype=np.float64)
    cnt_arr = np.empty(n_dim, dtype=np.intp)
    cdef double[::1] out = out_arr
    cdef double[::1] upper = upper_arr
    cdef Py_ssize_t[::1] cnt = cnt_arr
    with nogil:
        _eigvals(&d[0], &e2[0] if n_dim > 1 else NULL, n_dim, rtol,
                 &out[0], &upper[0], &cnt[0])
    return out_arr


def tridiag_eigvals_batch(double[:, ::1] d, double[:, ::1] e2, double rtol=1e-12):
    cdef Py_ssize_t n_rep = d.shape[0]
    cdef Py_ssize_t n_dim = d.shape[1]
    out_arr = np.empty((n_rep, n_dim), dtype=np.float64)
    upper_arr = np.empty(n_dim, dtype=np.float64)
    cnt_arr = np.empty(n_dim, dtype=np.intp)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] upper = upper_arr
    cdef Py_ssize_t[::1] cnt = cnt_arr
    cdef Py_ssize_t r
    with nogil:
        for r in range(n_rep):
            _eigvals(&d[r, 0], &e2[r, 0] if n_dim > 1 else NULL, n_dim, rtol,
                     &out[r, 0], &upper[0], &cnt[0])
    return out_arr


def matprod2_batch(double complex[:, :, :, ::1] m):
    """Ordered products M[r, K-1] @ ... @ M[r, 0] for each row r."""
    cdef Py_ssize_t n_rep = m.shape[0]
    cdef Py_ssize_t n_fac = m.shape[1]
    out_arr = np.empty((n_rep, 2, 2), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    cdef double complex a, b, c, dd, na, nb, nc, nd
    cdef Py_ssize_t r, k
    with nogil:
        for r in range(n_rep):
            a = 1.0
            b = 0.0
            c = 0.0
            dd = 1.0
            for k in range(n_fac):
                na = m[r, k, 0, 0] * a + m[r, k, 0, 1] * c
                nb = m[r, k, 0, 0] * b + m[r, k, 0, 1] * dd
                nc = m[r, k, 1, 0] * a + m[r, k, 1, 1] * c
                nd = m[r, k, 1, 0] * b + m[r, k, 1, 1] * dd
                a = na
                b = nb
                c = nc
                dd = nd
            out[r, 0, 0] = a
            out[r, 0, 1] = b
            out[r, 1, 0] = c
            out[r, 1, 1] = dd
    return out_arr
