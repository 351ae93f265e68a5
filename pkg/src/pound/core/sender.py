from __future__ import annotations

import logging
import threading
import time
from typing import Callable, Protocol

from ..wire import encode_fragment
from .messages import SessionConfig
from .pacing import Pacer
from .txqueue import TxQueue

log = logging.getLogger(__name__)


class Clock(Protocol):
    def now_us(self) -> int: ...

    def sleep_us(self, us: int) -> None: ...


class MonotonicClock:
    """Microseconds since construction; this is the sender epoch."""

    def __init__(self):
        self._t0 = time.monotonic_ns()

    def now_us(self) -> int:
        return (time.monotonic_ns() - self._t0) // 1000

    def sleep_us(self, us: int) -> None:
        if us > 0:
            time.sleep(us / 1e6)


class VirtualClock:
    """Clock whose sleeps advance time instantly. For tests and dry runs."""

    def __init__(self, start_us: int = 0):
        self.t = start_us

    def now_us(self) -> int:
        return self.t

    def sleep_us(self, us: int) -> None:
        self.t += max(0, us)


class Sender:
    """One pop-send-wait cycle of the transmit loop.

    `channel` is any callable taking an encoded datagram; it may raise
    OSError, in which case the fragment is counted as failed and dropped.
    """

    def __init__(self, queue: TxQueue, channel: Callable[[bytes], object], cfg: SessionConfig):
        self.queue = queue
        self.channel = channel
        self.cfg = cfg
        self.pacer = Pacer(cfg.link_rate_bps)
        self.sent = 0
        self.failed = 0
        self.sent_frame_bytes = 0

    def step(self) -> int | None:
        """Send the next fragment. Returns the wait before the next pop, or None if idle."""
        frag = self.queue.pop_next()
        if frag is None:
            return None
        datagram = encode_fragment(frag)
        try:
            ok = self.channel(datagram)
        except OSError as exc:
            log.debug("send failed: %s", exc)
            ok = False
        if ok is False:
            self.failed += 1
            return 0
        self.sent += 1
        nbytes = self.cfg.frame_bytes(len(frag.payload))
        self.sent_frame_bytes += nbytes
        return self.pacer.wait_for(nbytes)


def run_sender(queue: TxQueue, channel: Callable[[bytes], object], cfg: SessionConfig,
               clock: Clock, stop: threading.Event | None = None,
               idle_poll_s: float = 0.1) -> Sender:
    """Transmit loop: pop, send, sleep for the frame's serialization time.

    Blocks on the queue while it is empty. Returns the Sender (with its
    counters) once `stop` is set; with no stop event it returns as soon
    as the queue runs dry, which is how virtual-clock runs end.
    """
    sender = Sender(queue, channel, cfg)
    while stop is None or not stop.is_set():
        wait = sender.step()
        if wait is None:
            if stop is None:
                break
            queue.wait(idle_poll_s)
            continue
        clock.sleep_us(wait)
    return sender
