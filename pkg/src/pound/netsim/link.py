from __future__ import annotations

import random
from dataclasses import dataclass, field


@dataclass(frozen=True)
class LinkModel:
    rate_bps: float = 6e6
    loss_prob: float = 0.0
    max_retries: int = 7
    # DIFS/SIFS/ACK/backoff lumped into one per-attempt constant
    overhead_us: int = 200
    propagation_us: int = 0

    def __post_init__(self):
        if self.rate_bps <= 0:
            raise ValueError("rate_bps must be positive")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1)")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def airtime_us(self, frame_bytes: int) -> int:
        """Cost of one transmission attempt, rounded to the nearest microsecond."""
        bits = frame_bytes * 8 * 1_000_000
        return int((bits + self.rate_bps / 2) // self.rate_bps) + self.overhead_us

    @property
    def max_attempts(self) -> int:
        return 1 + self.max_retries


@dataclass(frozen=True)
class Delivered:
    at: int
    attempts: int


@dataclass(frozen=True)
class Lost:
    at: int
    attempts: int


def transmit_frame(link: LinkModel, frame_bytes: int, now: int, rng: random.Random) -> Delivered | Lost:
    """MAC-level delivery with up to 1 + max_retries Bernoulli attempts."""
    if frame_bytes <= 0:
        raise ValueError("frame_bytes must be positive")
    cost = link.airtime_us(frame_bytes)
    p = link.loss_prob
    if p <= 0.0:
        return Delivered(now + cost + link.propagation_us, 1)
    for attempt in range(1, link.max_attempts + 1):
        if p < 1.0 and rng.random() >= p:
            return Delivered(now + attempt * cost + link.propagation_us, attempt)
    return Lost(now + link.max_attempts * cost, link.max_attempts)


def expected_attempts(loss_prob: float, max_retries: int) -> float:
    """Mean attempts used, counting all attempts of a lost frame."""
    m = 1 + max_retries
    if loss_prob >= 1.0:
        return float(m)
    return (1.0 - loss_prob ** m) / (1.0 - loss_prob)


@dataclass
class Topology:
    """An n-node chain; links[i] joins node i and node i+1."""

    n: int
    links: list[LinkModel] = field(default_factory=list)
    shared_medium: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("a topology needs at least 2 nodes")
        if not self.links:
            self.links = [LinkModel() for _ in range(self.n - 1)]
        if len(self.links) != self.n - 1:
            raise ValueError(f"{self.n} nodes need {self.n - 1} links, got {len(self.links)}")

    @classmethod
    def chain(cls, n: int, link: LinkModel | None = None, shared_medium: bool = True) -> "Topology":
        return cls(n, [link or LinkModel()] * (n - 1), shared_medium)

    def link_between(self, a: int, b: int) -> LinkModel:
        if abs(a - b) != 1:
            raise ValueError(f"nodes {a} and {b} are not adjacent")
        return self.links[min(a, b)]

    def next_hop(self, node: int, dst: int) -> int:
        return node + 1 if dst > node else node - 1

    def path(self, src: int, dst: int) -> list[int]:
        step = 1 if dst >= src else -1
        return list(range(src, dst + step, step))
