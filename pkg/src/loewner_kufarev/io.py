"""Plain-text artifacts: columnar tables, key-value reports and a hash manifest.

Everything is written atomically (temporary file, then rename) and formatted
deterministically so that identical runs produce identical bytes.
"""
from __future__ import annotations

import hashlib
import math
import os
import tempfile
from pathlib import Path

import numpy as np

MANIFEST = "manifest.txt"


def fmt(value) -> str:
    """Stable text form of a scalar; floats use round-trip precision."""
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(value, (complex, np.complexfloating)):
        return f"{fmt(value.real)}{'+' if value.imag >= 0 or math.isnan(value.imag) else '-'}{fmt(abs(value.imag))}j"
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(fmt(v) for v in value)
    return str(value).replace("\n", " ")


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def kv_text(pairs: dict) -> str:
    return "".join(f"{k} = {fmt(v)}\n" for k, v in pairs.items())


def write_kv(path, pairs: dict) -> Path:
    return atomic_write(path, kv_text(pairs))


def read_kv(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            k, _, v = line.partition(" = ")
            out[k] = v
    return out


def columns_text(columns: dict, header: str | None = None) -> str:
    """Whitespace-separated columns; complex arrays split into ``_re``/``_im``."""
    names, data = [], []
    for name, col in columns.items():
        col = np.asarray(col).ravel()
        if np.iscomplexobj(col):
            names += [f"{name}_re", f"{name}_im"]
            data += [col.real, col.imag]
        else:
            names.append(name)
            data.append(col.astype(float))
    sizes = {d.size for d in data}
    if len(sizes) > 1:
        raise ValueError(f"column lengths differ: {sorted(sizes)}")
    lines = [] if header is None else [f"# {h}" for h in header.splitlines()]
    lines.append("# " + " ".join(names))
    for row in zip(*data):
        lines.append(" ".join(fmt(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_columns(path, columns: dict, header: str | None = None) -> Path:
    return atomic_write(path, columns_text(columns, header))


def read_columns(path) -> dict:
    names, rows = None, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            names = line[1:].split()
        elif line.strip():
            rows.append([float(x) for x in line.split()])
    arr = np.array(rows, dtype=float).reshape(-1, len(names))
    return {n: arr[:, i] for i, n in enumerate(names)}


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(directory) -> Path:
    """List every file in ``directory`` (except the manifest) with its SHA-256, sorted by name."""
    directory = Path(directory)
    files = sorted(p for p in directory.rglob("*")
                   if p.is_file() and p.name != MANIFEST and not p.name.startswith("."))
    text = "".join(f"{sha256(p)}  {p.relative_to(directory).as_posix()}\n" for p in files)
    return atomic_write(directory / MANIFEST, text)


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        digest, _, name = line.partition("  ")
        out[name] = digest
    return out
