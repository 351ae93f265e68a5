"""Flow descriptions, payload generation and delivery logs."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from .core.sender import Clock


@dataclass(frozen=True)
class FlowSpec:
    name: str
    message_size: int
    period_us: int
    count: int
    priority: int = 0
    transport: str = "pound"
    src: int = 0
    dst: int = 1
    flow_id: int = 0
    start_us: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"flow {self.name!r}: count must be >= 1")
        if self.period_us <= 0:
            raise ValueError(f"flow {self.name!r}: period must be positive")
        if self.message_size < 0:
            raise ValueError(f"flow {self.name!r}: message_size must be >= 0")
        if not 0 <= self.priority <= 255:
            raise ValueError(f"flow {self.name!r}: priority must be in 0..255")

    @property
    def offered_bps(self) -> float:
        return self.message_size * 8 / (self.period_us / 1e6)

    def publish_times(self) -> list[int]:
        return [self.start_us + k * self.period_us for k in range(self.count)]


def payload_for(seed: int, flow_id: int, seq: int, size: int) -> bytes:
    """Seeded pseudorandom payload, reproducible at the receiver for checking."""
    return random.Random(f"{seed}:{flow_id}:{seq}").randbytes(size)


def generate_flow(spec: FlowSpec, clock: Clock, send: Callable[[bytes], object],
                  seed: int = 0) -> int:
    """Publish `spec.count` messages at `spec.period_us` cadence. Returns messages sent."""
    for seq, t in enumerate(spec.publish_times()):
        delay = t - clock.now_us()
        if delay > 0:
            clock.sleep_us(delay)
        send(payload_for(seed, spec.flow_id, seq, spec.message_size))
    return spec.count


@dataclass(frozen=True)
class Delivery:
    flow: str
    seq: int
    publish_us: int
    deliver_us: int
    size: int


@dataclass
class SampleLog:
    deliveries: list[Delivery] = field(default_factory=list)
    sent: dict[str, int] = field(default_factory=dict)

    def record(self, flow: str, seq: int, publish_us: int, deliver_us: int, size: int) -> None:
        self.deliveries.append(Delivery(flow, seq, publish_us, deliver_us, size))

    def for_flow(self, flow: str) -> "SampleLog":
        return SampleLog([d for d in self.deliveries if d.flow == flow],
                         {flow: self.sent.get(flow, 0)})

    @property
    def flows(self) -> list[str]:
        return list(self.sent)
