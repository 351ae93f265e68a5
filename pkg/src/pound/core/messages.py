from __future__ import annotations

from dataclasses import dataclass

from ..wire import HEADER_SIZE, Fragment, FragmentHeader

DEFAULT_MTU = 1500
# 24 wire header + 20 IP + 8 UDP
DEFAULT_HEADER_OVERHEAD = 52
DEFAULT_LINK_RATE_BPS = 6_000_000
FALLBACK_REASSEMBLY_TIMEOUT_US = 500_000


@dataclass(frozen=True)
class Message:
    flow_id: int
    seq: int
    payload: bytes
    publish_time: int  # microseconds


@dataclass(frozen=True)
class FlowConfig:
    flow_id: int
    priority: int
    nominal_period_us: int
    max_message_len: int = 65536

    def __post_init__(self):
        if self.nominal_period_us <= 0:
            raise ValueError("nominal_period_us must be positive")
        if not 0 <= self.priority <= 255:
            raise ValueError("priority must be in 0..255")

    @property
    def reassembly_timeout_us(self) -> int:
        return 2 * self.nominal_period_us


@dataclass(frozen=True)
class SessionConfig:
    mtu: int = DEFAULT_MTU
    header_overhead: int = DEFAULT_HEADER_OVERHEAD
    link_rate_bps: float = DEFAULT_LINK_RATE_BPS
    reassembly_timeout_us: int = FALLBACK_REASSEMBLY_TIMEOUT_US
    queue_capacity_bytes: int = 1 << 20

    def __post_init__(self):
        if self.max_fragment_payload <= 0:
            raise ValueError(
                f"mtu={self.mtu} minus header_overhead={self.header_overhead} leaves no payload"
            )
        if self.header_overhead < 0:
            raise ValueError("header_overhead must be >= 0")
        if self.link_rate_bps <= 0:
            raise ValueError("link_rate_bps must be positive")

    @property
    def max_fragment_payload(self) -> int:
        return self.mtu - self.header_overhead

    def frame_bytes(self, payload_len: int) -> int:
        """Bytes charged to the link for one fragment (used for pacing)."""
        return payload_len + self.header_overhead + HEADER_SIZE


def fragment(m: Message, max_payload: int, priority: int, now: int) -> list[Fragment]:
    """Split a message into ceil(len/max_payload) fragments (at least one)."""
    if max_payload <= 0:
        raise ValueError("max_payload must be positive")
    data = bytes(m.payload)
    total = len(data)
    count = max(1, -(-total // max_payload))
    if count > 0xFFFF:
        raise ValueError(f"message of {total} bytes needs {count} fragments (max 65535)")
    return [
        Fragment(
            FragmentHeader(
                priority=priority,
                flow_id=m.flow_id,
                message_seq=m.seq,
                frag_index=i,
                frag_count=count,
                total_message_len=total,
                send_timestamp_us=now,
            ),
            data[i * max_payload:(i + 1) * max_payload],
        )
        for i in range(count)
    ]
