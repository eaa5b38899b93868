"""Self-describing CSV / JSON writers used by the CLI and the harnesses."""

import csv
import io
import json
import math
import os

from . import __version__


def _clean(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


def metadata(spec):
    return {"library": "gbe_transfer", "version": __version__, "spec": _clean(spec)}


def format_csv(header, rows, spec=None, comments=()):
    """CSV text with ``#``-prefixed metadata lines before the header row."""
    buf = io.StringIO()
    if spec is not None:
        buf.write("# " + json.dumps(metadata(spec), sort_keys=True) + "\n")
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _fmt(v.item())
    return v


def format_json(payload, spec=None):
    body = dict(_clean(payload)) if isinstance(payload, dict) else {"data": _clean(payload)}
    if spec is not None:
        body["meta"] = metadata(spec)
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def read_csv(path_or_text):
    """Parse a CSV written by :func:`format_csv`; returns (meta, header, rows)."""
    if os.path.exists(str(path_or_text)):
        with open(path_or_text) as fh:
            text = fh.read()
    else:
        text = str(path_or_text)
    meta = None
    lines = []
    for line in text.splitlines():
        if line.startswith("# "):
            if meta is None and line[2:].startswith("{"):
                meta = json.loads(line[2:])
            continue
        lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return meta, header, list(reader)


def write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
