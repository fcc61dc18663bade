"""Binary array container and on-disk cache keyed by content hash.

Layout (all little-endian)::

    magic      6 bytes   e.g. b"SWEIG1"
    key       32 bytes   SHA-256 digest of whatever produced the arrays
    count      u4        number of arrays
    per array: ndim u4, shape u4 * ndim, float64 data (C order)
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile

import numpy as np

from .errors import VersionError

MAGIC_LEN = 6
KEY_LEN = 32


def digest(*parts) -> str:
    """Hex SHA-256 over a sequence of str/bytes/int/float parts."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, bytes):
            h.update(p)
        else:
            h.update(repr(p).encode())
        h.update(b"\0")
    return h.hexdigest()


def pack(magic: bytes, key: str, arrays) -> bytes:
    if len(magic) != MAGIC_LEN:
        raise ValueError("magic must be 6 bytes")
    out = [magic, bytes.fromhex(key) if key else bytes(KEY_LEN), struct.pack("<I", len(arrays))]
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        out.append(struct.pack("<I", a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(a.tobytes())
    return b"".join(out)


def unpack(blob: bytes, magic: bytes):
    """Return ``(key_hex, arrays)``; raises :class:`VersionError` on any mismatch."""
    if blob[:MAGIC_LEN] != magic:
        raise VersionError(f"expected magic {magic!r}, got {blob[:MAGIC_LEN]!r}")
    pos = MAGIC_LEN
    key = blob[pos:pos + KEY_LEN].hex()
    pos += KEY_LEN
    try:
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        arrays = []
        for _ in range(n):
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            nbytes = 8 * size
            if pos + nbytes > len(blob):
                raise VersionError("truncated array payload")
            arrays.append(np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64))
            pos += nbytes
    except struct.error as exc:
        raise VersionError(f"truncated container: {exc}") from None
    if pos != len(blob):
        raise VersionError("trailing bytes after last array")
    return key, arrays


def atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class DiskCache:
    """Directory of content-addressed blobs. ``None`` directory disables caching."""

    def __init__(self, directory=None):
        self.directory = os.fspath(directory) if directory is not None else None
        self.hits = 0
        self.misses = 0

    def path(self, key: str, suffix: str) -> str | None:
        if self.directory is None:
            return None
        return os.path.join(self.directory, key[:2], key + suffix)

    def get(self, key: str, suffix: str) -> bytes | None:
        p = self.path(key, suffix)
        if p is None:
            return None
        if not os.path.exists(p):
            self.misses += 1
            return None
        with open(p, "rb") as fh:
            data = fh.read()
        self.hits += 1
        return data

    def put(self, key: str, suffix: str, data: bytes) -> None:
        p = self.path(key, suffix)
        if p is not None:
            atomic_write(p, data)
