"""Readers and writers for the fvecs / bvecs / ivecs vector containers.

Every record is a little-endian int32 dimension followed by that many
float32 (fvecs), uint8 (bvecs) or int32 (ivecs) values.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError, MalformedFileError

_ELEM = {"fvecs": np.dtype("<f4"), "bvecs": np.dtype("u1"), "ivecs": np.dtype("<i4")}


def _format_of(path, fmt):
    if fmt is None:
        fmt = os.path.splitext(str(path))[1].lstrip(".").lower()
    if fmt not in _ELEM:
        raise ConfigError(f"config error: unknown vector format {fmt!r}")
    return fmt


def _read_raw(path, fmt: str) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return np.empty((0, 0), dtype=_ELEM[fmt])
    if raw.size < 4:
        raise MalformedFileError("truncated dimension header", 0)
    d = int(raw[:4].view("<i4")[0])
    if d < 0:
        raise MalformedFileError(f"negative dimension {d}", 0)
    elem = _ELEM[fmt]
    rec = 4 + d * elem.itemsize
    n, tail = divmod(raw.size, rec)
    rtype = np.dtype([("d", "<i4"), ("v", elem, (d,))])
    recs = raw[:n * rec].view(rtype)
    bad = np.flatnonzero(recs["d"] != d)
    if bad.size:
        raise MalformedFileError(
            f"inconsistent dimension {int(recs['d'][bad[0]])} (expected {d})", int(bad[0]) * rec)
    if tail:
        raise MalformedFileError("truncated record", n * rec)
    return recs["v"].reshape(n, d)


def read_vectors(path, fmt: str | None = None) -> np.ndarray:
    """Read a vector file as reals.

    fvecs and bvecs come back as float32 (exact for uint8); ivecs as float64
    so every int32 survives.  The format defaults to the file extension.
    """
    fmt = _format_of(path, fmt)
    v = _read_raw(path, fmt)
    return v.astype(np.float64 if fmt == "ivecs" else np.float32)


def read_ivecs(path) -> np.ndarray:
    """Read an ivecs file as int32 (e.g. ground-truth neighbour lists)."""
    return _read_raw(path, "ivecs").astype(np.int32)


def write_vectors(path, data, fmt: str | None = None):
    fmt = _format_of(path, fmt)
    a = np.asarray(data)
    if a.ndim != 2:
        raise ConfigError("config error: expected a 2-D array")
    elem = _ELEM[fmt]
    n, d = a.shape
    recs = np.empty(n, dtype=[("d", "<i4"), ("v", elem, (d,))])
    recs["d"] = d
    recs["v"] = a
    recs.tofile(path)
