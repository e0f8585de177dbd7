"""Matrix files.

Binary layout (little-endian)::

    offset  size  field
    0       8     magic  b"WDLMAT01"
    8       4     dtype  b"f8\\0\\0" (float64) or b"c16\\0" (complex128)
    12      8     rows   uint64
    20      8     cols   uint64
    28      ...   row-major data; complex entries as interleaved (re, im)

CSV export writes real matrices as plain comma-separated rows and complex
ones with ``re,im`` column pairs.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"WDLMAT01"
_HEADER = struct.Struct("<8s4sQQ")
_DTYPES = {b"f8\0\0": np.dtype("<f8"), b"c16\0": np.dtype("<c16")}
_TAGS = {v: k for k, v in _DTYPES.items()}


class MatrixFormatError(ValueError):
    pass


def write_matrix(path, m):
    m = np.asarray(m)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError("only 2D arrays can be stored")
    dtype = np.dtype("<c16") if np.iscomplexobj(m) else np.dtype("<f8")
    data = np.ascontiguousarray(m, dtype=dtype)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, _TAGS[dtype], data.shape[0], data.shape[1]))
        fh.write(data.tobytes(order="C"))
    return Path(path)


def read_matrix(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MatrixFormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, tag, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}")
    if tag not in _DTYPES:
        raise MatrixFormatError(f"{path}: unknown dtype tag {tag!r}")
    dtype = _DTYPES[tag]
    expected = rows * cols * dtype.itemsize
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise MatrixFormatError(f"{path}: expected {expected} data bytes for {rows}x{cols}, found {len(body)}")
    return np.frombuffer(body, dtype=dtype).reshape(rows, cols).copy()


def write_csv(path, m, fmt="%.10g"):
    m = np.asarray(m)
    if m.ndim == 1:
        m = m[:, None]
    if np.iscomplexobj(m):
        out = np.empty((m.shape[0], 2 * m.shape[1]))
        out[:, 0::2], out[:, 1::2] = m.real, m.imag
        header = ",".join(f"re{j},im{j}" for j in range(m.shape[1]))
        np.savetxt(path, out, delimiter=",", fmt=fmt, header=header, comments="")
    else:
        np.savetxt(path, m, delimiter=",", fmt=fmt)
    return Path(path)


def read_csv(path):
    text = Path(path).read_text().splitlines()
    if text and text[0].startswith("re0"):
        vals = np.loadtxt(text[1:], delimiter=",", ndmin=2)
        return vals[:, 0::2] + 1j * vals[:, 1::2]
    return np.loadtxt(text, delimiter=",", ndmin=2)
