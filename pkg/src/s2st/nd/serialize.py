"""Binary encoding for named float32 tensors.

Layout, all little-endian regardless of host byte order:

    u32 count
    repeated count times:
        u32 name_len, name (UTF-8, no NUL)
        u32 rank, u32 extents[rank]
        f32 payload[prod(extents)] in C order

Checkpoints and exported weights wrap this block behind their own magic
and metadata; this module only guarantees the tensor payload round-trips
bit for bit and that truncated/oversized input is rejected rather than
silently misread.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import CheckpointError

_U32 = struct.Struct("<I")
_MAX_NAME = 4096
_MAX_RANK = 16


def pack_named(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [_U32.pack(len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        if not raw or len(raw) > _MAX_NAME:
            raise CheckpointError(f"bad tensor name length {len(raw)}")
        # ascontiguousarray would promote 0-d arrays to 1-d, so keep rank
        a = np.asarray(arr, dtype="<f4")
        if not a.flags.c_contiguous:
            a = a.copy(order="C")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
        parts.append(_U32.pack(a.ndim))
        for ext in a.shape:
            parts.append(_U32.pack(ext))
        parts.append(a.tobytes())
    return b"".join(parts)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(
                f"truncated tensor block: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def unpack_named(buf: bytes) -> dict[str, np.ndarray]:
    cur = _Cursor(buf)
    count = cur.u32()
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = cur.u32()
        if name_len == 0 or name_len > _MAX_NAME:
            raise CheckpointError(f"bad tensor name length {name_len}")
        name = cur.take(name_len).decode("utf-8")
        rank = cur.u32()
        if rank > _MAX_RANK:
            raise CheckpointError(f"tensor {name!r}: implausible rank {rank}")
        shape = tuple(cur.u32() for _ in range(rank))
        n = 1
        for ext in shape:
            n *= ext
        data = np.frombuffer(cur.take(4 * n), dtype="<f4").reshape(shape)
        if name in out:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        out[name] = data.astype(np.float32).copy()
    if cur.pos != len(buf):
        raise CheckpointError(
            f"{len(buf) - cur.pos} trailing bytes after tensor block")
    return out
