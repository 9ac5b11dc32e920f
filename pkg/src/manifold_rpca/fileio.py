"""Binary matrix/mask files, PGM frames and trace CSVs.

RPCM matrix file (little-endian)::

    b"RPCM" | u32 version=1 | u64 rows | u64 cols | rows*cols float64, row-major

RPCMASK observation-mask file::

    b"RPCMASK" | u32 version=1 | u64 rows | u64 cols | u64 count | count x (u32 row, u32 col)
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .thresholding import ObservationMask

MATRIX_MAGIC = b"RPCM"
MASK_MAGIC = b"RPCMASK"
VERSION = 1
TRACE_HEADER = ("iter", "objective", "ref_error", "elapsed_ms")

_MATRIX_HEAD = struct.Struct("<4sIQQ")
_MASK_HEAD = struct.Struct("<7sIQQQ")
_PAIR = np.dtype([("row", "<u4"), ("col", "<u4")])


def write_matrix(path, A):
    A = np.ascontiguousarray(A, dtype="<f8")
    if A.ndim != 2:
        raise InputError(f"expected a matrix, got shape {A.shape}")
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEAD.pack(MATRIX_MAGIC, VERSION, A.shape[0], A.shape[1]))
        fh.write(A.tobytes())


def read_matrix(path):
    data = Path(path).read_bytes()
    if len(data) < _MATRIX_HEAD.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, cols = _MATRIX_HEAD.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    need = _MATRIX_HEAD.size + 8 * rows * cols
    if len(data) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(data)}")
    A = np.frombuffer(data, dtype="<f8", offset=_MATRIX_HEAD.size, count=rows * cols)
    return A.reshape(rows, cols).astype(float)


def load_matrix(path):
    """Read ``.rpcm`` or comma-separated ``.csv`` by extension (sniffing the magic)."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if head == MATRIX_MAGIC:
        return read_matrix(path)
    if path.suffix.lower() in (".csv", ".txt"):
        try:
            A = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
        return A
    raise FormatError(f"{path}: not an RPCM file (magic {head!r})")


def write_mask(path, mask):
    idx = mask.indices()
    pairs = np.empty(len(idx), dtype=_PAIR)
    pairs["row"] = idx[:, 0]
    pairs["col"] = idx[:, 1]
    rows, cols = mask.shape
    with open(path, "wb") as fh:
        fh.write(_MASK_HEAD.pack(MASK_MAGIC, VERSION, rows, cols, len(idx)))
        fh.write(pairs.tobytes())


def read_mask(path, rate_p=None):
    data = Path(path).read_bytes()
    if len(data) < _MASK_HEAD.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, cols, count = _MASK_HEAD.unpack_from(data)
    if magic != MASK_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    need = _MASK_HEAD.size + _PAIR.itemsize * count
    if len(data) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(data)}")
    pairs = np.frombuffer(data, dtype=_PAIR, offset=_MASK_HEAD.size, count=count)
    idx = np.stack([pairs["row"], pairs["col"]], axis=1).astype(np.int64)
    return ObservationMask.from_indices(rows, cols, idx, rate_p)


def write_pgm(path, img):
    """Write an 8-bit binary PGM, min-max scaling ``img`` to 0..255."""
    img = np.asarray(img, dtype=float)
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros(img.shape) if hi <= lo else (img - lo) / (hi - lo)
    pix = np.round(scaled * 255).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path):
    """Read a binary (P5) PGM into floats in [0, 1]."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: only binary P5 PGM is supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    count = w * h
    pix = np.frombuffer(data, dtype=dtype, offset=pos, count=-1)
    if pix.size < count:
        raise FormatError(f"{path}: truncated PGM data")
    return pix[:count].reshape(h, w).astype(float) / maxval


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for rec in trace.records:
            ref = "" if rec.ref_error is None else repr(rec.ref_error)
            writer.writerow([rec.iter, repr(rec.objective), ref, f"{rec.elapsed_ms:.3f}"])


def read_trace(path):
    """Return the rows of a trace CSV as dicts with numeric values (None for blanks)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_HEADER:
            raise FormatError(f"{path}: unexpected trace header {reader.fieldnames}")
        rows = []
        for row in reader:
            rows.append(
                {
                    "iter": int(row["iter"]),
                    "objective": float(row["objective"]),
                    "ref_error": float(row["ref_error"]) if row["ref_error"] else None,
                    "elapsed_ms": float(row["elapsed_ms"]),
                }
            )
        return rows
