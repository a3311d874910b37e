"""Binary field snapshots, CSV series and hashed run manifests.

Snapshot layout (little-endian)::

    offset  size  content
    0       4     magic b"NL4S"
    4       4     format version (uint32)
    8       4     d_sim (uint32)
    12      4     n (uint32)
    16      8     L (float64)
    24      8     time (float64)
    32      8     gamma (float64, NaN when unset)
    40      8     N (float64, NaN when unset)
    48      ...   n^d_sim complex samples, interleaved (re, im) float64, row-major
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .spectral import GridSpec, PhysicalField

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "SnapshotError",
    "SnapshotMeta",
    "snapshot_save",
    "snapshot_load",
    "sha256_file",
    "write_series_csv",
    "read_csv",
]

MAGIC = b"NL4S"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIdddd")


class SnapshotError(ValueError):
    """Malformed snapshot file."""


@dataclass(frozen=True)
class SnapshotMeta:
    time: float = 0.0
    gamma: float = float("nan")
    N: float = float("nan")


def snapshot_save(field: PhysicalField, path, time: float = 0.0, gamma: Optional[float] = None, N: Optional[float] = None) -> Path:
    g = field.grid
    head = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        g.d_sim,
        g.n,
        float(g.L),
        float(time),
        float("nan") if gamma is None else float(gamma),
        float("nan") if N is None else float(N),
    )
    data = np.ascontiguousarray(field.values, dtype="<c16")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(data.tobytes(order="C"))
    return path


def snapshot_load(path, with_meta: bool = False):
    """Read a snapshot; raises :class:`SnapshotError` on any structural problem."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SnapshotError(f"truncated header: expected at least {_HEADER.size} bytes, got {len(raw)}")
    magic, version, d_sim, n, L, t, gamma, N = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        for off, (a, b) in enumerate(zip(magic, MAGIC)):
            if a != b:
                break
        raise SnapshotError(f"bad magic at byte offset {off}: expected {MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported format version {version} at byte offset 4 (expected {FORMAT_VERSION})")
    try:
        grid = GridSpec(int(d_sim), int(n), float(L))
    except ValueError as exc:
        raise SnapshotError(f"invalid grid in header: {exc}") from exc
    count = n**d_sim
    expected = _HEADER.size + 16 * count
    if len(raw) != expected:
        raise SnapshotError(f"payload length mismatch: expected {expected} bytes, got {len(raw)}")
    vals = np.frombuffer(raw, dtype="<c16", count=count, offset=_HEADER.size).reshape(grid.shape).astype(complex)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals.ravel()))[0])
        raise SnapshotError(f"non-finite sample at flat index {bad} (byte offset {_HEADER.size + 16 * bad})")
    f = PhysicalField(grid, vals)
    if with_meta:
        return f, SnapshotMeta(t, gamma, N)
    return f


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_series_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> Path:
    """RFC 4180 CSV with a header row; floats written at full precision."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(list(header))
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
