"""Archive container.

Layout (little-endian)::

    b"QPKT" | u16 version | u32 header_len | header (UTF-8 JSON) | streams...

The header lists the byte length of each stream in ``STREAMS`` order and a
CRC-32 over the concatenated streams.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

MAGIC = b"QPKT"
VERSION = 1
STREAMS = ("quant", "levels", "outliers", "corrections")
_PRE = struct.Struct("<4sHI")


class ArchiveError(ValueError):
    pass


class ChecksumError(ArchiveError):
    pass


class VersionError(ArchiveError):
    pass


@dataclass(frozen=True)
class Archive:
    header: dict
    streams: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        body = [self.streams.get(name, b"") for name in STREAMS]
        h = dict(self.header)
        h["stream_lengths"] = [len(b) for b in body]
        h["checksum"] = zlib.crc32(b"".join(body))
        hb = json.dumps(h, sort_keys=True, separators=(",", ":")).encode()
        return _PRE.pack(MAGIC, VERSION, len(hb)) + hb + b"".join(body)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Archive":
        if len(data) < _PRE.size:
            raise ChecksumError("archive truncated before header")
        magic, version, hlen = _PRE.unpack_from(data, 0)
        if magic != MAGIC:
            raise ArchiveError(f"bad magic {magic!r}")
        if version != VERSION:
            raise VersionError(f"archive version {version}, reader supports {VERSION}")
        start = _PRE.size + hlen
        if len(data) < start:
            raise ChecksumError("archive truncated inside header")
        try:
            header = json.loads(data[_PRE.size:start].decode())
            lengths = [int(n) for n in header["stream_lengths"]]
            checksum = int(header["checksum"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ArchiveError(f"unreadable header: {exc}") from None
        if len(lengths) != len(STREAMS) or start + sum(lengths) != len(data):
            raise ChecksumError(
                f"stream lengths {lengths} do not match {len(data) - start} payload bytes"
            )
        payload = data[start:]
        if zlib.crc32(payload) != checksum:
            raise ChecksumError("stream checksum mismatch")
        streams, pos = {}, 0
        for name, n in zip(STREAMS, lengths):
            streams[name] = payload[pos:pos + n]
            pos += n
        return cls(header, streams)

    def with_stream(self, name: str, blob: bytes) -> "Archive":
        streams = dict(self.streams)
        streams[name] = blob
        return replace(self, streams=streams)

    @property
    def nbytes(self) -> int:
        return len(self.to_bytes())


def pack_corrections(indices: np.ndarray, values: np.ndarray, dtype, level: int = 6) -> bytes:
    """``u64 count`` then ``(u64 index, value)`` pairs, deflated."""
    dt = np.dtype([("idx", "<u8"), ("val", np.dtype(dtype).newbyteorder("<"))])
    rec = np.empty(len(indices), dtype=dt)
    rec["idx"] = indices
    rec["val"] = values
    return zlib.compress(struct.pack("<Q", len(indices)) + rec.tobytes(), level)


def unpack_corrections(blob: bytes, dtype) -> tuple[np.ndarray, np.ndarray]:
    raw = zlib.decompress(blob)
    (count,) = struct.unpack_from("<Q", raw, 0)
    dt = np.dtype([("idx", "<u8"), ("val", np.dtype(dtype).newbyteorder("<"))])
    if len(raw) != 8 + count * dt.itemsize:
        raise ArchiveError("correction stream size does not match its count")
    rec = np.frombuffer(raw, dtype=dt, offset=8, count=count)
    return rec["idx"].astype(np.int64), rec["val"].copy()
