"""Plain-text file formats used between pipeline stages.

Density matrix::

    # dualrail density-matrix v1
    # cutoff 3
    # basis |n1,n2> row-major (mode 1 slow)
    # columns k l m n re im  (element <k,l|rho|m,n>)
    0 0 0 0 2.5000000000000000e-01 0.0000000000000000e+00
    ...

Samples: ``phi1 phi2 x1 x2`` per line, batches contiguous. Reports: ``key = value``.
Floats are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fock import DensityMatrix
from .homodyne import HomodyneBasis, QuadratureBatch

DM_MAGIC = "# dualrail density-matrix v1"
SAMPLES_MAGIC = "# dualrail samples v1"


class FormatError(ValueError):
    """A data file does not follow its documented layout."""


def fmt(x: float) -> str:
    return f"{float(x):.16e}"


def atomic_write(path, text: str) -> Path:
    """Write via a temporary file in the same directory and rename."""
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


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def density_to_text(rho: DensityMatrix, comments: Iterable[str] = ()) -> str:
    lines = [DM_MAGIC, f"# cutoff {rho.cutoff}",
             "# basis |n1,n2> row-major (mode 1 slow)",
             "# columns k l m n re im  (element <k,l|rho|m,n>)"]
    lines += [f"# {c}" for c in comments]
    t = rho.tensor()
    c = rho.cutoff + 1
    for k in range(c):
        for l in range(c):
            for m in range(c):
                for n in range(c):
                    v = t[k, l, m, n]
                    lines.append(f"{k} {l} {m} {n} {fmt(v.real)} {fmt(v.imag)}")
    return "\n".join(lines) + "\n"


def write_density(path, rho: DensityMatrix, comments: Iterable[str] = ()) -> Path:
    return atomic_write(path, density_to_text(rho, comments))


def read_density(path) -> DensityMatrix:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != DM_MAGIC:
        raise FormatError(f"{path}: not a density-matrix file")
    cutoff = None
    rows = []
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "cutoff":
                cutoff = int(parts[1])
            continue
        rows.append(line.split())
    if cutoff is None:
        raise FormatError(f"{path}: missing cutoff header")
    c = cutoff + 1
    if len(rows) != c ** 4:
        raise FormatError(f"{path}: expected {c ** 4} elements, found {len(rows)}")
    t = np.zeros((c, c, c, c), dtype=complex)
    for row in rows:
        if len(row) != 6:
            raise FormatError(f"{path}: malformed row {' '.join(row)!r}")
        k, l, m, n = (int(v) for v in row[:4])
        t[k, l, m, n] = complex(float(row[4]), float(row[5]))
    return DensityMatrix(t.reshape(c * c, c * c), cutoff)


def samples_to_text(batches: Sequence[QuadratureBatch], comments: Iterable[str] = ()) -> str:
    lines = [SAMPLES_MAGIC, "# columns phi1 phi2 x1 x2"]
    lines += [f"# {c}" for c in comments]
    for batch in batches:
        p1, p2 = fmt(batch.basis.phi1), fmt(batch.basis.phi2)
        lines += [f"{p1} {p2} {fmt(x1)} {fmt(x2)}" for x1, x2 in batch.samples]
    return "\n".join(lines) + "\n"


def write_samples(path, batches: Sequence[QuadratureBatch], comments: Iterable[str] = ()) -> Path:
    return atomic_write(path, samples_to_text(batches, comments))


def read_samples(path) -> list[QuadratureBatch]:
    text = Path(path).read_text(encoding="utf-8")
    if not text.startswith(SAMPLES_MAGIC):
        raise FormatError(f"{path}: not a samples file")
    data = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if not data:
        raise FormatError(f"{path}: no samples")
    arr = np.array([[float(v) for v in line.split()] for line in data])
    if arr.shape[1] != 4:
        raise FormatError(f"{path}: expected 4 columns")
    batches = []
    start = 0
    for i in range(1, arr.shape[0] + 1):
        if i == arr.shape[0] or arr[i, 0] != arr[start, 0] or arr[i, 1] != arr[start, 1]:
            basis = HomodyneBasis(arr[start, 0], arr[start, 1])
            batches.append(QuadratureBatch(basis, arr[start:i, 2:]))
            start = i
    return batches


def _value_text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if v is None:
        return "none"
    return str(v)


def report_to_text(items: Iterable[tuple[str, object]], title: str = "report") -> str:
    lines = [f"# dualrail {title}"]
    lines += [f"{k} = {_value_text(v)}" for k, v in items]
    return "\n".join(lines) + "\n"


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence], comments: Iterable[str] = ()) -> Path:
    """Whitespace-separated plot-ready table with a commented header."""
    lines = [f"# {c}" for c in comments] + ["# " + " ".join(columns)]
    for row in rows:
        lines.append(" ".join(_value_text(v) for v in row))
    return atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(path, manifest: dict) -> Path:
    return atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
