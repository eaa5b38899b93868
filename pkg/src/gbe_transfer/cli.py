"""Command-line front end: ``gbe-transfer <command> [options]``.

Every command writes one self-describing file (CSV for tables, JSON for
summaries) whose metadata block holds the fully resolved parameters and the
library version.  Output goes to ``--out``; without it, to
``$GBE_TRANSFER_OUT/<command>.<ext>`` (current directory if unset).  ``--out -``
writes to stdout.

Exit status: 0 on success, 2 for invalid parameters, 3 for numeric domain
violations such as a parabolic singularity or a point on a branch cut.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from ._io import format_csv, format_json, write_text
from .errors import DomainError, GBEError

log = logging.getLogger("gbe_transfer")

OUT_ENV = "GBE_TRANSFER_OUT"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(GBEError):
    pass


def parse_complex(text):
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from exc


def parse_list(conv):
    def parse(text):
        try:
            return [conv(t) for t in str(text).split(",") if t.strip()]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise argparse.ArgumentTypeError(f"bad list {text!r}: {exc}") from exc

    return parse


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


# ---------------------------------------------------------------------------
# Commands.  Each returns ("table", header, rows) or ("summary", dict).
# ---------------------------------------------------------------------------


def cmd_sample(a):
    from .sampling import EnsembleConfig, sample_model

    cfg = EnsembleConfig(a.N, a.beta, a.seed)
    m = sample_model(cfg, a.replica)
    rows = [(i + 1, float(m.diag[i]), float(m.offdiag[i]) if i < a.N - 1 else "") for i in range(a.N)]
    return "table", ["index", "b", "a"], rows


def cmd_charpoly(a):
    from .sampling import EnsembleConfig, sample_model
    from .transfer import char_poly, classify_regime

    m = sample_model(EnsembleConfig(a.N, a.beta, a.seed))
    if a.grid:
        out = []
        for z in a.grid:
            lp = char_poly(z, m, a.beta).final.log_first
            out.append({"z_re": z.real, "z_im": z.imag, "log_phi_re": lp.real, "log_phi_im": lp.imag})
        return "summary", {"grid": out}
    traj = char_poly(a.z, m, a.beta)
    lp = traj.log_phi()
    rows = [(n, float(lp[n - 1].real), float(lp[n - 1].imag), classify_regime(a.z, a.N, n, a.Omega).value)
            for n in range(1, a.N + 1)]
    return "table", ["n", "re_logphi", "im_logphi", "regime"], rows


def cmd_coupling(a):
    from .field import coupling_samples

    s = coupling_samples(a.z, a.N, a.beta, a.replicas, a.seed, alpha=a.alpha, threads=a.threads)
    rows = [(r, float(s.log_ratio[r].real), float(s.log_ratio[r].imag), float(s.field[r].real),
             float(s.field[r].imag), float(s.ratio[r])) for r in range(a.replicas)]
    log.info("median coupling ratio %.6g", float(np.median(s.ratio)))
    return "table", ["replica", "log_ratio_re", "log_ratio_im", "field_re", "field_im", "coupling_ratio"], rows


def cmd_projector(a):
    from .expansion import DEVIATION_COLUMNS, DeviationConfig, deviation_table

    cfg = DeviationConfig(tuple(a.N), a.z, a.beta, a.Omega, a.replicas, tuple(a.epsilon), a.seed)
    rows = deviation_table(cfg, threads=a.threads)
    return "table", DEVIATION_COLUMNS, [[r[c] for c in DEVIATION_COLUMNS] for r in rows]


def cmd_psi_check(a):
    from .expansion import MatrixFamily, parity_violations, psi_bruteforce, psi_recursive
    from .sampling import KIND_AUX, substream

    worst, parity = 0.0, 0
    for f in range(a.families):
        rng = substream(a.seed, f, KIND_AUX)
        fam = MatrixFamily.random(a.max_span, rng)
        for span in range(1, a.max_span + 1):
            for j in range(a.max_order + 1):
                brute = psi_bruteforce(fam, j, 1, span)
                rec = psi_recursive(fam, j, 1, span)
                worst = max(worst, float(np.max(np.abs(brute.matrix - rec.matrix))))
                parity += parity_violations(brute) + parity_violations(rec)
    return "summary", {"families": a.families, "max_span": a.max_span, "max_order": a.max_order,
                       "max_discrepancy": worst, "parity_violations": parity,
                       "passed": bool(worst <= 1e-12 and parity == 0)}


def cmd_field_cov(a):
    from .field import covariance_w, covariance_wt, field_w_samples, gaf_w_samples

    zs = a.z_list
    rows = []
    if a.method == "closed":
        for z in zs:
            for w in zs:
                v = covariance_w(z, w) if a.t == 1.0 else covariance_wt(z, w, a.t, a.t)
                rows.append((z, w, v, "closed"))
    else:
        if a.method == "gaf":
            if a.t != 1.0:
                raise UsageError("the gaf method only samples t = 1")
            samples = gaf_w_samples(zs, a.samples, a.seed)
        else:
            samples = field_w_samples(zs, a.t, a.steps, a.samples, a.seed)
        emp = samples.T @ samples / samples.shape[0]
        for i, z in enumerate(zs):
            for j, w in enumerate(zs):
                rows.append((z, w, emp[i, j], a.method))
                closed = covariance_wt(z, w, a.t, a.t)
                rows.append((z, w, closed, "closed"))
    table = [(complex(z).real, complex(z).imag, complex(w).real, complex(w).imag,
              complex(v).real, complex(v).imag, k) for z, w, v, k in rows]
    return "table", ["z_re", "z_im", "w_re", "w_im", "value_re", "value_im", "kind"], table


def cmd_clt(a):
    from .asymptotics import run_clt

    try:
        return "summary", run_clt(a.f, a.N, a.beta, a.replicas, a.seed, threads=a.threads)
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise UsageError(str(exc)) from exc


def cmd_asymptotics(a):
    from .asymptotics import (airy_regime_ratio, hermite_zero_identity, named_function,
                              plancherel_rotach_ratio)

    f = named_function(a.f)
    out = {"plancherel_rotach": [], "airy": [], "hermite_zero": []}
    for n in a.N:
        out["plancherel_rotach"].append({"N": n, "z": a.z, "ratio": plancherel_rotach_ratio(n, n, a.z, a.Omega)})
        out["airy"].append({"N": n, "z": 1.0, "ratio": airy_regime_ratio(n, n, 1.0, a.Omega)})
        out["hermite_zero"].append({"N": n, "f": a.f, "discrepancy": hermite_zero_identity(f, n)})
    return "summary", out


COMMANDS = {
    "sample": cmd_sample,
    "charpoly": cmd_charpoly,
    "coupling": cmd_coupling,
    "projector": cmd_projector,
    "psi-check": cmd_psi_check,
    "field-cov": cmd_field_cov,
    "clt": cmd_clt,
    "asymptotics": cmd_asymptotics,
}


def build_parser():
    p = argparse.ArgumentParser(prog="gbe-transfer", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--beta", type=_positive_float, default=2.0)
    common.add_argument("--Omega", type=_positive_float, default=1.0)
    common.add_argument("--alpha", type=_positive_float, default=1 / 9)
    common.add_argument("--delta", type=_positive_float, default=1 / 45)
    common.add_argument("--threads", type=_positive_int, default=1)
    common.add_argument("--out", default=None, help="output path, '-' for stdout")
    common.add_argument("--format", choices=["csv", "json"], default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="draw one tridiagonal model")
    s.add_argument("--N", type=_positive_int, required=True)
    s.add_argument("--replica", type=int, default=0)

    s = sub.add_parser("charpoly", parents=[common], help="characteristic polynomial trajectory")
    s.add_argument("--N", type=_positive_int, required=True)
    s.add_argument("--z", type=parse_complex, default=2.0)
    s.add_argument("--grid", type=parse_list(parse_complex), default=None)

    s = sub.add_parser("coupling", parents=[common], help="coupling ratio Monte Carlo")
    s.add_argument("--N", type=_positive_int, required=True)
    s.add_argument("--z", type=parse_complex, default=2.0)
    s.add_argument("--replicas", type=_positive_int, default=1000)

    s = sub.add_parser("projector", parents=[common], help="deviation of the U-product from diag(1,0)")
    s.add_argument("--N", type=parse_list(_positive_int), required=True)
    s.add_argument("--z", type=parse_complex, default=1.5)
    s.add_argument("--replicas", type=_positive_int, default=2000)
    s.add_argument("--epsilon", type=parse_list(float), default=[0.0, 0.01, 0.05, 0.1, 0.2, 0.5])

    s = sub.add_parser("psi-check", parents=[common], help="brute-force vs recursive psi terms")
    s.add_argument("--max-span", dest="max_span", type=_positive_int, default=12)
    s.add_argument("--max-order", dest="max_order", type=int, default=4)
    s.add_argument("--families", type=_positive_int, default=100)

    s = sub.add_parser("field-cov", parents=[common], help="covariances of the field W")
    s.add_argument("--z", dest="z_list", type=parse_list(parse_complex), default=[2.0, 1.5 + 0.5j])
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--method", choices=["closed", "gaf", "paths"], default="closed")
    s.add_argument("--samples", type=_positive_int, default=100000)
    s.add_argument("--steps", type=_positive_int, default=256)

    s = sub.add_parser("clt", parents=[common], help="CLT for linear eigenvalue statistics")
    s.add_argument("--N", type=_positive_int, required=True)
    s.add_argument("--f", default="T2")
    s.add_argument("--replicas", type=_positive_int, default=5000)

    s = sub.add_parser("asymptotics", parents=[common], help="Plancherel-Rotach, Airy and Hermite-zero checks")
    s.add_argument("--N", type=parse_list(_positive_int), default=[200, 400, 800])
    s.add_argument("--z", type=parse_complex, default=2.0)
    s.add_argument("--f", default="T2")
    return p


def _render(kind, payload, fmt, spec):
    if kind == "table":
        header, rows = payload
        if fmt == "json":
            return format_json({"columns": header, "rows": [list(r) for r in rows]}, spec=spec), "json"
        return format_csv(header, rows, spec=spec), "csv"
    if fmt == "csv":
        flat = [(k, json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in sorted(payload.items())]
        return format_csv(["key", "value"], flat, spec=spec), "csv"
    return format_json(payload, spec=spec), "json"


def resolved_spec(args):
    spec = {k: v for k, v in vars(args).items() if k not in ("out", "verbose")}
    return spec


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    spec = resolved_spec(args)
    try:
        kind, *payload = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except DomainError as exc:
        print(f"gbe-transfer: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    body = payload if kind == "table" else payload[0]
    text, ext = _render(kind, body, args.format, spec)
    out = args.out
    if out is None:
        out = os.path.join(os.environ.get(OUT_ENV, "."), f"{args.command}.{ext}")
    if out == "-":
        sys.stdout.write(text)
    else:
        write_text(out, text)
        print(out)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
