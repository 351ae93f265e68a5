"""Bounded transmit queue ordered by flow priority."""

from __future__ import annotations

import heapq
import threading
from dataclasses import dataclass, field

from ..wire import Fragment


@dataclass
class EnqueueReport:
    accepted: bool
    evicted: list[tuple[int, int]] = field(default_factory=list)
    rejected: bool = False


@dataclass
class _Entry:
    priority: int
    flow_id: int
    seq: int
    nbytes: int
    nfrags: int


class TxQueue:
    """Fragments pop in (priority desc, enqueue order asc, frag_index asc) order.

    Capacity is counted in wire bytes (header + payload). When a message
    does not fit, whole messages of strictly lower priority are evicted,
    lowest priority first and oldest first within a priority. If that
    cannot make room, the incoming message is rejected and the queue is
    left untouched.

    One lock guards all state, so any number of producers may enqueue
    while a single consumer pops.
    """

    def __init__(self, capacity_bytes: int):
        if capacity_bytes <= 0:
            raise ValueError("capacity_bytes must be positive")
        self.capacity_bytes = capacity_bytes
        self._heap: list[tuple[int, int, int, Fragment]] = []
        self._msgs: dict[int, _Entry] = {}
        self._dead: dict[int, int] = {}  # evicted order -> stale heap entries left
        self._order = 0
        self._bytes = 0
        self._cond = threading.Condition()
        self.evictions = 0
        self.rejections = 0

    @property
    def current_bytes(self) -> int:
        return self._bytes

    def __len__(self) -> int:
        with self._cond:
            return sum(e.nfrags for e in self._msgs.values())

    def enqueue(self, frags: list[Fragment]) -> EnqueueReport:
        if not frags:
            raise ValueError("nothing to enqueue")
        h0 = frags[0].header
        key = (h0.flow_id, h0.message_seq)
        if any((f.header.flow_id, f.header.message_seq) != key for f in frags):
            raise ValueError("all fragments must belong to one message")
        prio = h0.priority
        need = sum(f.wire_size for f in frags)

        with self._cond:
            victims: list[int] = []
            free = self.capacity_bytes - self._bytes
            if need > free:
                if need > self.capacity_bytes:
                    self.rejections += 1
                    return EnqueueReport(accepted=False, rejected=True)
                lower = sorted(
                    (o for o, e in self._msgs.items() if e.priority < prio),
                    key=lambda o: (self._msgs[o].priority, o),
                )
                for o in lower:
                    if free >= need:
                        break
                    victims.append(o)
                    free += self._msgs[o].nbytes
                if free < need:
                    self.rejections += 1
                    return EnqueueReport(accepted=False, rejected=True)

            evicted = []
            for o in victims:
                e = self._msgs.pop(o)
                self._bytes -= e.nbytes
                self._dead[o] = e.nfrags
                evicted.append((e.flow_id, e.seq))
            self.evictions += len(evicted)

            order = self._order
            self._order += 1
            for f in frags:
                heapq.heappush(self._heap, (-prio, order, f.header.frag_index, f))
            self._msgs[order] = _Entry(prio, h0.flow_id, h0.message_seq, need, len(frags))
            self._bytes += need
            self._cond.notify()
            return EnqueueReport(accepted=True, evicted=evicted)

    def pop_next(self) -> Fragment | None:
        with self._cond:
            return self._pop_locked()

    def _pop_locked(self) -> Fragment | None:
        while self._heap:
            _, order, _, frag = heapq.heappop(self._heap)
            left = self._dead.get(order)
            if left is not None:
                if left == 1:
                    del self._dead[order]
                else:
                    self._dead[order] = left - 1
                continue
            e = self._msgs[order]
            e.nbytes -= frag.wire_size
            e.nfrags -= 1
            self._bytes -= frag.wire_size
            if e.nfrags == 0:
                del self._msgs[order]
            return frag
        return None

    def wait(self, timeout: float | None = None) -> bool:
        """Block until the queue is non-empty; False on timeout."""
        with self._cond:
            return self._cond.wait_for(lambda: bool(self._msgs), timeout)

    def wake(self) -> None:
        with self._cond:
            self._cond.notify_all()

    def messages(self) -> list[tuple[int, int, int]]:
        """(priority, flow_id, seq) of every message with fragments queued."""
        with self._cond:
            return [(e.priority, e.flow_id, e.seq) for _, e in sorted(self._msgs.items())]

    def fragments_of(self, flow_id: int, seq: int) -> int:
        with self._cond:
            return sum(e.nfrags for e in self._msgs.values() if (e.flow_id, e.seq) == (flow_id, seq))

    def queued_bytes(self, flow_id: int, seq: int) -> int:
        """Wire bytes of this message still waiting to be sent."""
        with self._cond:
            return sum(e.nbytes for e in self._msgs.values() if (e.flow_id, e.seq) == (flow_id, seq))
