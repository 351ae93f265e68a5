from __future__ import annotations

from fractions import Fraction


def pacing_interval(nbytes: int, link_rate_bps: float) -> int:
    """Serialization time of `nbytes` at the nominal rate, rounded to the nearest microsecond."""
    if link_rate_bps <= 0:
        raise ValueError("link_rate_bps must be positive")
    exact = Fraction(nbytes * 8 * 1_000_000) / Fraction(link_rate_bps)
    return int(exact + Fraction(1, 2))


class Pacer:
    """Per-frame waits whose running total is ceil(total_bits / rate).

    Rounding each frame independently would drift by up to half a
    microsecond per frame; carrying the fractional remainder keeps the
    cumulative wait exact.
    """

    def __init__(self, link_rate_bps: float):
        if link_rate_bps <= 0:
            raise ValueError("link_rate_bps must be positive")
        self.rate = Fraction(link_rate_bps)
        self._bits = 0
        self._waited = 0

    def wait_for(self, frame_bytes: int) -> int:
        self._bits += frame_bytes * 8
        target = -(-Fraction(self._bits * 1_000_000) // self.rate)
        wait = int(target) - self._waited
        self._waited = int(target)
        return wait

    @property
    def total_wait_us(self) -> int:
        return self._waited
