"""Small shared helpers: canonical text formatting, atomic writes, hashing."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


def fmt_time(t: float) -> str:
    """Canonical timestamp text: fixed-point seconds with 6 fractional digits.

    Parsing this text and re-formatting it reproduces the same bytes, which
    keeps saved files stable under load/save round trips.
    """
    return format(float(t), ".6f")


def fmt_value(v: float) -> str:
    """Canonical value text: shortest repr that round-trips the float exactly."""
    return repr(float(v))


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text to `path` via a temp file + rename so readers never see partial files."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj) -> None:
    atomic_write_text(path, dump_json(obj))


def read_json(path: str | Path):
    with open(path) as fh:
        return json.load(fh)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
