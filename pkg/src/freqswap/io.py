"""Output containers: long-format CSV, npz matrices and the run manifest.

Floats are written with a fixed repr so that identical inputs give
byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import time
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import SpectralGrid
from .units import domega_dlambda, omega_to_nm

FLOAT_FMT = "{:.12g}"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT.format(float(x))
    if x is None:
        return ""
    return str(x)


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def write_columns(path, columns: dict) -> Path:
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    return write_rows(path, names, zip(*cols))


def read_columns(path) -> dict:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [row for row in r]
    out = {}
    for i, name in enumerate(header):
        vals = [row[i] for row in rows]
        try:
            out[name] = np.array([float(v) if v != "" else np.nan for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out


def jsi_long(grid_row: SpectralGrid, grid_col: SpectralGrid, intensity) -> dict:
    """Long-format columns with the density converted to per nm^2."""
    w1, w2 = grid_row.points, grid_col.points
    l1, l2 = omega_to_nm(w1), omega_to_nm(w2)
    jac = domega_dlambda(l1)[:, None] * domega_dlambda(l2)[None, :]
    dens = np.asarray(intensity) * jac
    L1, L2 = np.meshgrid(l1, l2, indexing="ij")
    return {"omega1_nm": L1.ravel(), "omega2_nm": L2.ravel(), "density": dens.ravel()}


def write_jsi(path, grid_row: SpectralGrid, grid_col: SpectralGrid, intensity) -> Path:
    return write_columns(path, jsi_long(grid_row, grid_col, intensity))


def write_fringe(path, tau, **columns) -> Path:
    cols = {"tau_ps": np.asarray(tau)}
    cols.update({k: np.asarray(v) for k, v in columns.items()})
    return write_columns(path, cols)


def save_matrix(path, values, **axes) -> Path:
    """npz container readable by ``np.load``; entries carry a fixed timestamp so bytes are reproducible."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"values": np.asarray(values), **{k: np.asarray(v) for k, v in axes.items()}}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())
    return path


def load_matrix(path) -> dict:
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def write_report(path, doc: dict) -> Path:
    """Structured ``key: value`` text; nested mappings are indented."""
    lines = []

    def emit(d, indent):
        for k, v in d.items():
            if isinstance(v, dict):
                lines.append(" " * indent + f"{k}:")
                emit(v, indent + 2)
            elif isinstance(v, (list, tuple, np.ndarray)):
                lines.append(" " * indent + f"{k}: [" + ", ".join(fmt(x) for x in v) + "]")
            else:
                lines.append(" " * indent + f"{k}: {fmt(v)}")

    emit(doc, 0)
    return write_text(path, "\n".join(lines) + "\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    version: str
    seed: int
    files: dict = field(default_factory=dict)  # relative name -> (sha256, bytes)
    timings: dict = field(default_factory=dict)

    def add(self, root, path) -> None:
        path = Path(path)
        rel = path.relative_to(root).as_posix()
        self.files[rel] = (sha256_file(path), path.stat().st_size)

    def text(self) -> str:
        out = [
            f"command: {self.command}",
            f"config_hash: {self.config_hash}",
            f"version: {self.version}",
            f"seed: {self.seed}",
            "files:",
        ]
        for name in sorted(self.files):
            digest, size = self.files[name]
            out.append(f"  {digest}  {size:>12d}  {name}")
        out.append("timings_s:")
        for k, v in self.timings.items():
            out.append(f"  {k}: {v:.3f}")
        return "\n".join(out) + "\n"

    def checksums(self) -> dict:
        return {k: v[0] for k, v in self.files.items()}


def parse_manifest(path) -> dict:
    """Read back the file table of a manifest as {name: sha256}."""
    files, section = {}, None
    for line in Path(path).read_text().splitlines():
        if not line.startswith(" "):
            section = line.split(":", 1)[0]
            continue
        if section == "files":
            digest, _size, name = line.split(maxsplit=2)
            files[name] = digest
    return files


class Timer:
    def __init__(self):
        self.timings = {}

    def __call__(self, name):
        timer = self

        class _Span:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = timer.timings.get(name, 0.0) + time.perf_counter() - self.t0

        return _Span()
