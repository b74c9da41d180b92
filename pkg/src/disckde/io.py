"""Point files (CSV) and the binary index format.

Index layout, all integers and floats little-endian:

    b"KDCS"  u32 version
    u32 len + utf-8 kernel descriptor
    build params: f64 eps, xi, delta, alpha_override (NaN if unset), phi, c1; u64 seed; u32 num_trees
    dataset: u64 n, u32 d, n*d f64 (row major)
    u32 tree count, then per tree: f64 alpha, u32 len + utf-8 JSON stats, and
    every flat array in a fixed order as u64 rows + raw data.

Trees are stored in node preorder; coresets reference dataset rows through
the shared index pool instead of repeating coordinates.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from typing import BinaryIO

import numpy as np

from .core import BuildParams
from .errors import DataError, IndexFormatError
from .kernels import parse_kernel
from .tree import CORESET_FIELDS, FAR_FIELDS, MATRIX_FIELDS, NODE_FIELDS, POOL_DTYPE, FlatTree, Forest, summarize

MAGIC = b"KDCS"
VERSION = 1


def read_points(path: str) -> np.ndarray:
    """Read a rectangular CSV of floats; errors carry the offending line number."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        try:
            rows = _parse_rows(path, fh)
        except UnicodeDecodeError:
            raise DataError(f"{path}: not a text file") from None
    if not rows:
        raise DataError(f"{path}: no points")
    return np.asarray(rows, dtype=np.float64)


def _parse_rows(path: str, fh) -> list:
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(fh), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{path}:{lineno}: non-finite value")
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, found {len(vals)}")
        rows.append(vals)
    return rows


def write_points(path: str, P: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.asarray(P):
            w.writerow([repr(float(v)) for v in row])


def _write_str(fh: BinaryIO, s: str) -> None:
    b = s.encode("utf-8")
    fh.write(struct.pack("<I", len(b)))
    fh.write(b)


def _write_array(fh: BinaryIO, arr: np.ndarray, dtype) -> None:
    a = np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<"))
    fh.write(struct.pack("<Q", a.shape[0]))
    fh.write(a.tobytes())


def _array_layout(d: int):
    for name, dt, width in NODE_FIELDS + CORESET_FIELDS + FAR_FIELDS:
        yield name, dt, width
    for name, dt in MATRIX_FIELDS:
        yield name, dt, d
    yield "pool", POOL_DTYPE, None


def save_index(forest: Forest, path: str) -> None:
    p = forest.params
    data = forest.data
    n, d = data.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        _write_str(fh, forest.kernel.descriptor)
        alpha_o = math.nan if p.alpha_override is None else p.alpha_override
        fh.write(struct.pack("<6dQI", p.eps, p.xi, p.delta, alpha_o, p.phi, p.c1, p.seed, p.num_trees))
        fh.write(struct.pack("<QI", n, d))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(forest.trees)))
        for tree in forest.trees:
            fh.write(struct.pack("<d", tree.alpha))
            _write_str(fh, json.dumps(tree.stats, sort_keys=True))
            arrays = tree.arrays()
            for name, dt, _ in _array_layout(d):
                _write_array(fh, arrays[name], dt)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int) -> bytes:
        if self.pos + nbytes > len(self.buf):
            raise IndexFormatError("index file is truncated")
        out = self.buf[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (ln,) = self.unpack("<I")
        return self.take(ln).decode("utf-8")

    def array(self, dtype, width=None) -> np.ndarray:
        (rows,) = self.unpack("<Q")
        dt = np.dtype(dtype).newbyteorder("<")
        count = rows * (width or 1)
        a = np.frombuffer(self.take(count * dt.itemsize), dtype=dt).astype(np.dtype(dtype))
        return a if width is None else a.reshape(rows, width)


def load_index(path: str) -> Forest:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise IndexFormatError(f"{path} is not an index file (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise IndexFormatError(f"index version {version} is not supported (expected {VERSION})")
    kernel = parse_kernel(r.string())
    eps, xi, delta, alpha_o, phi, c1, seed, num_trees = r.unpack("<6dQI")
    params = BuildParams(
        eps=eps, xi=xi, delta=delta, alpha_override=None if math.isnan(alpha_o) else alpha_o,
        phi=phi, seed=seed, num_trees=num_trees, c1=c1,
    )
    n, d = r.unpack("<QI")
    data = np.frombuffer(r.take(n * d * 8), dtype="<f8").astype(np.float64).reshape(n, d)
    (count,) = r.unpack("<I")
    trees = []
    for _ in range(count):
        (alpha,) = r.unpack("<d")
        stats = json.loads(r.string())
        arrays = {name: r.array(dt, width) for name, dt, width in _array_layout(d)}
        trees.append(FlatTree(data, kernel, alpha, arrays, stats))
    if r.pos != len(buf):
        raise IndexFormatError("trailing bytes after the last tree")
    stats = summarize(n, d, params, [t.stats for t in trees], 0.0)
    return Forest(data, kernel, params, trees, stats)
