"""Single-threaded discrete-event simulator of a wireless chain.

Time is integer microseconds. All randomness comes from one
`random.Random(seed)`, so a (scenario, seed) pair always yields the same
trace. In shared-medium mode one frame at most is on the air anywhere in
the network; contending nodes are served round-robin, which is what halves
the end-to-end bandwidth through each relay.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable

from .link import Delivered, LinkModel, Lost, Topology, transmit_frame

log = logging.getLogger(__name__)

ENQUEUED = "enqueued"
SENT = "sent"
DELIVERED = "delivered"
LOST = "lost"
DROPPED = "dropped"

TRACE_COLUMNS = ("time_us", "node", "event", "frame_id", "flow_id", "message_seq")


@dataclass(slots=True)
class Frame:
    id: int
    src: int
    dst: int
    size: int
    port: Hashable
    data: Any
    flow_id: int = -1
    seq: int = -1


class OsQueue:
    """Kernel transmit FIFO; overflow is a silent, counted drop."""

    def __init__(self, capacity_frames: int = 1000):
        if capacity_frames <= 0:
            raise ValueError("capacity_frames must be positive")
        self.capacity = capacity_frames
        self.frames: deque[Frame] = deque()
        self.drops = 0

    def __len__(self) -> int:
        return len(self.frames)

    def push(self, frame: Frame) -> bool:
        if len(self.frames) >= self.capacity:
            self.drops += 1
            return False
        self.frames.append(frame)
        return True

    def pop(self) -> Frame:
        return self.frames.popleft()


class EventTrace:
    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.records: list[tuple[int, int, str, int, int, int]] = []

    def add(self, t: int, node: int, kind: str, frame: Frame) -> None:
        if self.enabled:
            self.records.append((t, node, kind, frame.id, frame.flow_id, frame.seq))

    def __len__(self) -> int:
        return len(self.records)

    def count(self, kind: str) -> int:
        return sum(1 for r in self.records if r[2] == kind)

    def write_csv(self, fp) -> None:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        w.writerows(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


@dataclass
class Node:
    index: int
    os_queue: OsQueue
    handlers: dict[Hashable, Callable[[Frame], None]] = field(default_factory=dict)
    available_from: int = 0
    down_from: int | None = None

    def available(self, now: int) -> bool:
        # going down sets available_from to the rejoin time
        return now >= self.available_from


@dataclass
class _Domain:
    nodes: list[int]
    busy: bool = False
    rr: int = 0


@dataclass(frozen=True)
class Outage:
    node: int
    start_us: int
    duration_us: int = 5_000_000
    # time to rejoin the ad-hoc cell once the interface is back up
    rejoin_us: int = 0
    # extra time before a relay forwards again (neighbour/route refresh on both sides)
    relay_extra_us: int = 0


class Simulator:
    def __init__(self, topology: Topology, seed: int = 0, os_queue_frames: int = 1000,
                 record_trace: bool = True):
        self.topology = topology
        self.rng = random.Random(seed)
        self.now = 0
        self._events: list[tuple[int, int, Callable, tuple]] = []
        self._tie = itertools.count()
        self._frame_ids = itertools.count()
        self.nodes = [Node(i, OsQueue(os_queue_frames)) for i in range(topology.n)]
        if topology.shared_medium:
            self._domains = [_Domain(list(range(topology.n)))]
            self._domain_of = [0] * topology.n
        else:
            self._domains = [_Domain([i]) for i in range(topology.n)]
            self._domain_of = list(range(topology.n))
        self.trace = EventTrace(record_trace)
        # (start, end, node) of every transmission, for medium-exclusivity checks
        self.tx_log: list[tuple[int, int, int]] = []
        self.outages: list[Outage] = []
        self.outage_listeners: list[Callable[[Outage, int], None]] = []

    # -- event loop -------------------------------------------------------

    def at(self, t: int, fn: Callable, *args) -> None:
        if t < self.now:
            raise ValueError(f"cannot schedule in the past ({t} < {self.now})")
        heapq.heappush(self._events, (int(t), next(self._tie), fn, args))

    def after(self, dt: int, fn: Callable, *args) -> None:
        self.at(self.now + int(dt), fn, *args)

    def run(self, until: int | None = None) -> None:
        ev = self._events
        while ev:
            if until is not None and ev[0][0] > until:
                self.now = until
                return
            t, _, fn, args = heapq.heappop(ev)
            self.now = t
            fn(*args)

    @property
    def pending_events(self) -> int:
        return len(self._events)

    # -- frames -----------------------------------------------------------

    def send(self, node: int, dst: int, size: int, port: Hashable, data: Any = None,
             flow_id: int = -1, seq: int = -1) -> bool:
        """Hand a frame to `node`'s OS queue. False if it was dropped there."""
        frame = Frame(next(self._frame_ids), node, dst, size, port, data, flow_id, seq)
        return self._enqueue(node, frame)

    def _enqueue(self, node: int, frame: Frame) -> bool:
        n = self.nodes[node]
        if not n.available(self.now) or not n.os_queue.push(frame):
            self.trace.add(self.now, node, DROPPED, frame)
            return False
        self.trace.add(self.now, node, ENQUEUED, frame)
        self._kick(self._domains[self._domain_of[node]])
        return True

    def _kick(self, dom: _Domain) -> None:
        if dom.busy:
            return
        k = len(dom.nodes)
        for i in range(k):
            idx = dom.nodes[(dom.rr + i) % k]
            node = self.nodes[idx]
            if node.os_queue.frames and node.available(self.now):
                dom.rr = (dom.rr + i + 1) % k
                self._start_tx(dom, node)
                return

    def _start_tx(self, dom: _Domain, node: Node) -> None:
        frame = node.os_queue.pop()
        hop = self.topology.next_hop(node.index, frame.dst)
        link = self.topology.link_between(node.index, hop)
        if self.nodes[hop].available(self.now):
            outcome = transmit_frame(link, frame.size, self.now, self.rng)
        else:
            outcome = Lost(self.now + link.max_attempts * link.airtime_us(frame.size), link.max_attempts)
        self.trace.add(self.now, node.index, SENT, frame)
        dom.busy = True
        end = outcome.at - link.propagation_us if isinstance(outcome, Delivered) else outcome.at
        self.tx_log.append((self.now, end, node.index))
        self.at(end, self._medium_free, dom)
        if isinstance(outcome, Delivered):
            self.at(outcome.at, self._arrive, frame, hop)
        else:
            self.at(outcome.at, self.trace.add, outcome.at, node.index, LOST, frame)

    def _medium_free(self, dom: _Domain) -> None:
        dom.busy = False
        self._kick(dom)

    def _arrive(self, frame: Frame, hop: int) -> None:
        if hop != frame.dst:
            self._enqueue(hop, frame)
            return
        self.trace.add(self.now, hop, DELIVERED, frame)
        handler = self.nodes[hop].handlers.get(frame.port)
        if handler is None:
            log.debug("no handler for port %r at node %d", frame.port, hop)
            return
        handler(frame)

    def register(self, node: int, port: Hashable, handler: Callable[[Frame], None]) -> None:
        self.nodes[node].handlers[port] = handler

    # -- outages ----------------------------------------------------------

    def is_relay(self, node: int) -> bool:
        return 0 < node < self.topology.n - 1

    def add_outage(self, outage: Outage) -> int:
        """Schedule an interface outage. Returns the time the node is usable again."""
        back = outage.start_us + outage.duration_us + outage.rejoin_us
        if self.is_relay(outage.node):
            back += outage.relay_extra_us
        self.outages.append(outage)
        self.at(outage.start_us, self._go_down, outage, back)
        self.at(back, self._come_back, outage.node)
        return back

    def _go_down(self, outage: Outage, back: int) -> None:
        node = self.nodes[outage.node]
        node.down_from = self.now
        node.available_from = back
        while node.os_queue.frames:
            self.trace.add(self.now, node.index, DROPPED, node.os_queue.pop())
        for fn in self.outage_listeners:
            fn(outage, back)

    def _come_back(self, idx: int) -> None:
        node = self.nodes[idx]
        node.down_from = None
        for dom in self._domains:
            self._kick(dom)
