"""Fragment wire format, version 1.

Every datagram is a fixed 24-byte little-endian header followed by the
fragment payload::

    offset  size  field
    0       1     version (always 1)
    1       1     priority (0 lowest .. 255 highest)
    2       2     flow_id
    4       4     message_seq
    8       2     frag_index
    10      2     frag_count
    12      4     total_message_len
    16      8     send_timestamp_us
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

VERSION = 1
HEADER = struct.Struct("<BBHIHHIQ")
HEADER_SIZE = HEADER.size  # 24


class WireError(ValueError):
    """Base class for datagrams that cannot be decoded."""


class TooShort(WireError):
    pass


class BadVersion(WireError):
    pass


class BadCounts(WireError):
    pass


@dataclass(frozen=True, slots=True)
class FragmentHeader:
    priority: int
    flow_id: int
    message_seq: int
    frag_index: int
    frag_count: int
    total_message_len: int
    send_timestamp_us: int
    version: int = VERSION


@dataclass(frozen=True, slots=True)
class Fragment:
    header: FragmentHeader
    payload: bytes

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + len(self.payload)


def encode_fragment(f: Fragment) -> bytes:
    h = f.header
    return HEADER.pack(
        h.version,
        h.priority,
        h.flow_id,
        h.message_seq,
        h.frag_index,
        h.frag_count,
        h.total_message_len,
        h.send_timestamp_us,
    ) + bytes(f.payload)


def decode_fragment(buf: bytes) -> Fragment:
    """Parse one datagram; the payload is everything after the header."""
    if len(buf) < HEADER_SIZE:
        raise TooShort(f"datagram of {len(buf)} bytes is shorter than the {HEADER_SIZE}-byte header")
    version, prio, flow, seq, idx, count, total, ts = HEADER.unpack_from(buf)
    if version != VERSION:
        raise BadVersion(f"unsupported wire version {version}")
    if count == 0 or idx >= count:
        raise BadCounts(f"frag_index={idx} frag_count={count}")
    header = FragmentHeader(prio, flow, seq, idx, count, total, ts, version)
    return Fragment(header, bytes(buf[HEADER_SIZE:]))


def peek_flow(buf: bytes) -> tuple[int, int]:
    """(flow_id, message_seq) of an encoded datagram without a full decode."""
    _, _, flow, seq = struct.unpack_from("<BBHI", buf)
    return flow, seq
