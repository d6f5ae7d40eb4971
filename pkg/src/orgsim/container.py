"""Binary formats: the PORG sectioned container and PODS record framing.

PORG (little-endian), used for checkpoints and fitted ICA models.

Layout::

    "PORG" | version u32 | section count u32
    per section: tag (4 ASCII bytes) | payload length u64 | payload
    CRC-32 (u32) over every preceding byte

Payloads are built from two blocks: a tagged key/value *config block* and
a list of named float64 *array blocks*.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from orgsim.errors import (
    ChecksumError,
    FormatError,
    MagicError,
    StorageError,
    TruncatedError,
    VersionError,
)

MAGIC = b"PORG"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_SECTION = struct.Struct("<4sQ")


class _Reader:
    def __init__(self, buf: bytes, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError(f"need {n} bytes at offset {self.pos}, have {len(self.buf) - self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def done(self) -> bool:
        return self.pos == len(self.buf)


# -- config block: u32 count, then (u16 key len, key, u8 type, value) ---------

def encode_config(values: dict) -> bytes:
    out = [struct.pack("<I", len(values))]
    for key, value in values.items():
        k = key.encode("utf-8")
        out.append(struct.pack("<H", len(k)) + k)
        if isinstance(value, bool):
            out.append(b"b" + struct.pack("<B", int(value)))
        elif isinstance(value, (int, np.integer)):
            out.append(b"i" + struct.pack("<q", int(value)))
        elif isinstance(value, (float, np.floating)):
            out.append(b"f" + struct.pack("<d", float(value)))
        elif isinstance(value, str):
            v = value.encode("utf-8")
            out.append(b"s" + struct.pack("<I", len(v)) + v)
        elif value is None:
            out.append(b"n")
        else:
            raise TypeError(f"config value for {key!r} has unsupported type {type(value).__name__}")
    return b"".join(out)


def decode_config(r: _Reader) -> dict:
    (count,) = r.unpack("<I")
    values = {}
    for _ in range(count):
        (klen,) = r.unpack("<H")
        key = r.take(klen).decode("utf-8")
        kind = r.take(1)
        if kind == b"b":
            values[key] = bool(r.unpack("<B")[0])
        elif kind == b"i":
            values[key] = r.unpack("<q")[0]
        elif kind == b"f":
            values[key] = r.unpack("<d")[0]
        elif kind == b"s":
            (vlen,) = r.unpack("<I")
            values[key] = r.take(vlen).decode("utf-8")
        elif kind == b"n":
            values[key] = None
        else:
            raise FormatError(f"unknown config value type {kind!r} for key {key!r}")
    return values


# -- array blocks: u32 count, then (u16 name len, name, u8 rank, u64 dims, f64 data)

def encode_arrays(arrays) -> bytes:
    items = list(arrays.items() if isinstance(arrays, dict) else arrays)
    out = [struct.pack("<I", len(items))]
    for name, arr in items:
        arr = np.asarray(arr)
        if arr.dtype != np.float64:
            raise FormatError(f"array {name!r} is {arr.dtype}; only float64 is stored")
        n = name.encode("utf-8")
        out.append(struct.pack("<H", len(n)) + n + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def decode_arrays(r: _Reader) -> dict:
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}Q")
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = r.take(8 * size)
        arrays[name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(dims)
    return arrays


def encode_payload(config: dict, arrays) -> bytes:
    return encode_config(config) + encode_arrays(arrays)


def decode_payload(payload: bytes):
    r = _Reader(payload)
    config = decode_config(r)
    arrays = decode_arrays(r)
    if not r.done():
        raise FormatError(f"{len(payload) - r.pos} trailing bytes in section payload")
    return config, arrays


# -- container ------------------------------------------------------------------

def pack_container(sections) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(sections))]
    for tag, payload in sections:
        tag = tag.encode("ascii") if isinstance(tag, str) else tag
        if len(tag) != 4:
            raise FormatError(f"section tag must be 4 bytes, got {tag!r}")
        parts.append(_SECTION.pack(tag, len(payload)))
        parts.append(payload)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def unpack_container(data: bytes) -> list:
    """Return ``[(tag, payload), ...]``; raise a specific :class:`FormatError` subclass."""
    if len(data) < 4 or data[:4] != MAGIC:
        raise MagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < _HEADER.size + 4:
        raise TruncatedError("file shorter than the container header")
    _, version, count = _HEADER.unpack_from(data, 0)
    end = len(data) - 4
    r = _Reader(data[:end], _HEADER.size)
    sections = []
    for _ in range(count):
        tag, length = r.unpack("<4sQ")
        sections.append((tag.decode("ascii", errors="replace"), r.take(length)))
    if not r.done():
        raise TruncatedError("section table does not account for every byte")
    (crc,) = struct.unpack_from("<I", data, end)
    if zlib.crc32(data[:end]) & 0xFFFFFFFF != crc:
        raise ChecksumError("CRC-32 mismatch")
    if version != VERSION:
        raise VersionError(f"container version {version}, this build reads {VERSION}")
    return sections


def write_container(path, sections) -> None:
    data = pack_container(sections)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def read_container(path) -> list:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    return unpack_container(data)


# -- PODS record framing ----------------------------------------------------------
#
# "PODS" | version u32 | n_pairs u64 | window_len u32 | n_mfcc u32 | n_targets u32
# followed by n_pairs records of float32: window (window_len x n_mfcc) then target.
# window_len == 0 marks a plain matrix file (one n_targets-wide row per record).

PODS_MAGIC = b"PODS"
PODS_VERSION = 1
PODS_HEADER = struct.Struct("<4sIQIII")


def pack_pods_header(n_pairs: int, window_len: int, n_mfcc: int, n_targets: int) -> bytes:
    return PODS_HEADER.pack(PODS_MAGIC, PODS_VERSION, n_pairs, window_len, n_mfcc, n_targets)


def read_pods_header(path):
    """Return ``(n_pairs, window_len, n_mfcc, n_targets)`` after validating the file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(PODS_HEADER.size)
        size = path.stat().st_size
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    if len(head) < 4 or head[:4] != PODS_MAGIC:
        raise MagicError(f"{path}: bad magic {head[:4]!r}, expected {PODS_MAGIC!r}")
    if len(head) < PODS_HEADER.size:
        raise TruncatedError(f"{path}: header truncated")
    _, version, n_pairs, window_len, n_mfcc, n_targets = PODS_HEADER.unpack(head)
    if version != PODS_VERSION:
        raise VersionError(f"{path}: PODS version {version}, this build reads {PODS_VERSION}")
    expected = PODS_HEADER.size + n_pairs * (window_len * n_mfcc + n_targets) * 4
    if size != expected:
        raise TruncatedError(f"{path}: {size} bytes on disk, header implies {expected}")
    return n_pairs, window_len, n_mfcc, n_targets


def write_matrix(path, rows) -> None:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise FormatError("matrix export needs a 2-D array")
    try:
        with open(path, "wb") as fh:
            fh.write(pack_pods_header(rows.shape[0], 0, 0, rows.shape[1]))
            fh.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def read_matrix(path) -> np.ndarray:
    n_rows, window_len, _, n_cols = read_pods_header(path)
    if window_len != 0:
        raise FormatError(f"{path} holds (window, target) pairs, not a plain matrix")
    if n_rows == 0:
        return np.zeros((0, n_cols))
    mm = np.memmap(path, dtype="<f4", mode="r", offset=PODS_HEADER.size, shape=(n_rows, n_cols))
    return np.array(mm, dtype=np.float64)
