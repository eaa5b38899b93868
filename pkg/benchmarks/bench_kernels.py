"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat 3]``.  Each row
reports the best wall time of both backends and the largest difference of
their outputs, so the benchmark doubles as an equivalence check.
"""

import argparse
import time

import numpy as np

from gbe_transfer import _fallback
from gbe_transfer.sampling import EnsembleConfig, sample_batch

try:
    from gbe_transfer import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _diff(a, b):
    if isinstance(a, tuple):
        # (mantissa, ..., exponent) triples: compare reconstructed logs
        la = np.log(np.asarray(a[0])) + np.asarray(a[-1]) * np.log(2)
        lb = np.log(np.asarray(b[0])) + np.asarray(b[-1]) * np.log(2)
        return float(np.max(np.abs(la - lb)))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def cases(rng):
    cfg = EnsembleConfig(3200, 2.0, 1)
    d1, e1 = sample_batch(cfg, 1).scaled(2.0)
    cfg = EnsembleConfig(800, 2.0, 2)
    db, eb = sample_batch(cfg, 256).scaled(2.0)
    cfg = EnsembleConfig(400, 2.0, 3)
    de, ee = sample_batch(cfg, 8).scaled(2.0)
    m = rng.normal(size=(256, 400, 2, 2)) * 0.7 + 1j * rng.normal(size=(256, 400, 2, 2)) * 0.1
    m = np.ascontiguousarray(m)
    yield "charpoly_trajectory N=3200", lambda k: k.charpoly_trajectory(2.0 + 0j, d1[0], e1[0])
    yield "charpoly_final_batch R=256 N=800", lambda k: k.charpoly_final_batch(2.0 + 0j, db, eb)
    yield "tridiag_eigvals_batch R=8 N=400", lambda k: k.tridiag_eigvals_batch(de, ee, 1e-12)
    yield "matprod2_batch R=256 K=400", lambda k: k.matprod2_batch(m)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'cython [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for label, call in cases(rng):
        tc, oc = best_time(lambda: call(_kernels), args.repeat)
        tp, op = best_time(lambda: call(_fallback), args.repeat)
        print(f"{label:36s} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f} {_diff(oc, op):10.2e}")


if __name__ == "__main__":
    main()
