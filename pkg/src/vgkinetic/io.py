"""Artifact writers: CSV tables and flat ``key = value`` summaries.

Every file starts with a provenance comment line
``# vgkinetic <version> config_sha256=<hash> seed=<seed>``. Floats are
written as their shortest round-trip repr, so files are exact and compare
byte for byte across runs.
"""
from __future__ import annotations

import hashlib
import math
from pathlib import Path

import numpy as np

VERSION = "0.1.0"


def config_hash(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


def provenance(config_sha256: str, seed) -> str:
    return f"# vgkinetic {VERSION} config_sha256={config_sha256} seed={seed}"


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    if isinstance(x, (tuple, list)):
        return " ".join(format_value(y) for y in x)
    return str(x)


def write_csv(path, columns: dict, header: str) -> Path:
    """Write equal-length columns as CSV below the provenance line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    arrays = [np.asarray(columns[k]).ravel() for k in names]
    n = arrays[0].size if arrays else 0
    if any(a.size != n for a in arrays):
        raise ValueError("columns differ in length")
    lines = [header, ",".join(names)]
    lines += [",".join(format_value(a[i]) for a in arrays) for i in range(n)]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_summary(path, items: dict, header: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [header] + [f"{k} = {format_value(v)}" for k, v in items.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_summary(path) -> dict:
    """Inverse of :func:`write_summary`; values stay strings."""
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or "=" not in line:
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def density_columns(fld) -> dict:
    """Long-format columns ``v, g, density`` at cell centres."""
    V, G = np.meshgrid(fld.grid.v_centers, fld.grid.g_centers, indexing="ij")
    return {"v": V.ravel(), "g": G.ravel(), "density": fld.values.ravel()}
