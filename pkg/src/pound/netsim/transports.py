"""Transport models that run over the simulated chain.

pound                    one priority queue per node, paced, single datagram stream
perflow_unreliable       each flow its own datagram stream, no pacing (UDPROS-like)
reliable_ordered[_nagle] windowed, cumulatively-acked, in-order stream with
                         delayed ACKs and optional Nagle coalescing (TCPROS-like)
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from ..core import Message, Reassembler, SessionConfig, Status, TxQueue, fragment
from ..core.reassembly import InconsistentHeader
from ..core.sender import Sender
from ..wire import decode_fragment, peek_flow
from .sim import Frame, Outage, Simulator

log = logging.getLogger(__name__)

POUND = "pound"
PERFLOW_UNRELIABLE = "perflow_unreliable"
RELIABLE_ORDERED = "reliable_ordered"
RELIABLE_ORDERED_NAGLE = "reliable_ordered_nagle"
TRANSPORTS = (POUND, PERFLOW_UNRELIABLE, RELIABLE_ORDERED, RELIABLE_ORDERED_NAGLE)

IP_UDP_OVERHEAD = 28
IP_TCP_OVERHEAD = 52  # 20 IP + 20 TCP + 12 timestamp option

DeliverFn = Callable[[Message, int], None]


@dataclass
class TransportParams:
    session: SessionConfig = field(default_factory=SessionConfig)
    tcp_window_bytes: int = 65535
    tcp_delayed_ack_us: int = 40_000
    tcp_min_rto_us: int = 200_000
    tcp_max_rto_us: int = 3_200_000
    # reconnection cost after any node on the path was down
    tcp_handshake_us: int = 0


class FlowHandle:
    """Publishing end of one flow. `publish` stamps seq and publish time."""

    def __init__(self, net: "Network", flow_id: int, src: int, dst: int, transport: str,
                 priority: int, submit: Callable[[Message], None]):
        self.net = net
        self.flow_id = flow_id
        self.src = src
        self.dst = dst
        self.transport = transport
        self.priority = priority
        self._submit = submit
        self.next_seq = 0
        self.published = 0

    def publish(self, payload: bytes) -> Message:
        msg = Message(self.flow_id, self.next_seq, payload, self.net.sim.now)
        self.next_seq += 1
        self.published += 1
        self._submit(msg)
        return msg


class PoundNode:
    """The engine from `pound.core` bound to one simulated node."""

    def __init__(self, net: "Network", node: int, session: SessionConfig):
        self.net = net
        self.sim = net.sim
        self.node = node
        self.session = session
        self.queue = TxQueue(session.queue_capacity_bytes)
        self.sender = Sender(self.queue, self._channel, session)
        self.reassembler = Reassembler(session.reassembly_timeout_us)
        self.routes: dict[int, int] = {}
        self.sinks: dict[int, DeliverFn] = {}
        self._active = False
        self.rejected = 0
        self.evicted: list[tuple[int, int]] = []
        self.sim.register(node, POUND, self._on_frame)

    def submit(self, msg: Message, priority: int) -> None:
        frags = fragment(msg, self.session.max_fragment_payload, priority, self.sim.now)
        report = self.queue.enqueue(frags)
        if report.rejected:
            self.rejected += 1
        self.evicted.extend(report.evicted)
        if not self._active:
            self._active = True
            self.sim.after(0, self._step)

    def _step(self) -> None:
        wait = self.sender.step()
        if wait is None:
            self._active = False
        else:
            self.sim.after(wait, self._step)

    def _channel(self, datagram: bytes) -> bool:
        flow, seq = peek_flow(datagram)
        size = len(datagram) + self.session.header_overhead
        return self.sim.send(self.node, self.routes[flow], size, POUND, datagram, flow, seq)

    def _on_frame(self, frame: Frame) -> None:
        try:
            res = self.reassembler.ingest(decode_fragment(frame.data), self.sim.now)
        except (InconsistentHeader, ValueError) as exc:
            log.debug("node %d: %s", self.node, exc)
            return
        if res.status is Status.COMPLETE:
            sink = self.sinks.get(res.message.flow_id)
            if sink is not None:
                sink(res.message, self.sim.now)


class PerFlowUnreliable:
    """One unpaced datagram stream per flow; a message is lost with any of its frames."""

    def __init__(self, net: "Network", flow_id: int, src: int, dst: int, on_deliver: DeliverFn,
                 mtu: int):
        self.sim = net.sim
        self.flow_id = flow_id
        self.src, self.dst = src, dst
        self.on_deliver = on_deliver
        self.max_payload = mtu - IP_UDP_OVERHEAD
        self.port = ("udp", flow_id)
        self._pending: dict[int, list] = {}
        self._done_upto = -1
        self.sim.register(dst, self.port, self._on_frame)

    def submit(self, msg: Message) -> None:
        size = len(msg.payload)
        n = max(1, -(-size // self.max_payload))
        for i in range(n):
            chunk = min(self.max_payload, size - i * self.max_payload) if size else 0
            self.sim.send(self.src, self.dst, chunk + IP_UDP_OVERHEAD, self.port, (msg, i, n),
                          self.flow_id, msg.seq)

    def _on_frame(self, frame: Frame) -> None:
        msg, i, n = frame.data
        if msg.seq <= self._done_upto and msg.seq not in self._pending:
            return
        got = self._pending.setdefault(msg.seq, set())
        got.add(i)
        if len(got) == n:
            del self._pending[msg.seq]
            self._done_upto = max(self._done_upto, msg.seq)
            # an IP reassembly buffer never outlives a newer complete datagram here
            for s in [s for s in self._pending if s < msg.seq]:
                del self._pending[s]
            self.on_deliver(msg, self.sim.now)


class ReliableOrdered:
    """TCP caricature: byte stream, go-back-N, cumulative delayed ACKs, optional Nagle.

    Never drops or reorders: lost segments are resent after a backed-off
    retransmission timeout, forever. An outage anywhere on the path
    suspends the connection until the path is back plus a handshake.
    """

    def __init__(self, net: "Network", flow_id: int, src: int, dst: int, on_deliver: DeliverFn,
                 nagle: bool, params: TransportParams):
        self.sim = net.sim
        self.flow_id = flow_id
        self.src, self.dst = src, dst
        self.on_deliver = on_deliver
        self.nagle = nagle
        self.p = params
        self.mss = params.session.mtu - IP_TCP_OVERHEAD
        self.data_port = ("tcp", flow_id, "data")
        self.ack_port = ("tcp", flow_id, "ack")
        # sender
        self.written = 0
        self.snd_una = 0
        self.snd_nxt = 0
        self.rto = params.tcp_min_rto_us
        self._rto_gen = 0
        self._rto_armed = False
        self.retransmits = 0
        # receiver
        self.rcv_nxt = 0
        self._unacked_segs = 0
        self._delack_gen = 0
        self._delack_armed = False
        self._stream: deque[tuple[int, Message]] = deque()  # (end offset, message)
        self.suspended_until = -1
        self.path = set(net.sim.topology.path(src, dst))
        self.sim.register(dst, self.data_port, self._on_data)
        self.sim.register(src, self.ack_port, self._on_ack)
        self.sim.outage_listeners.append(self._on_outage)

    def _suspended(self) -> bool:
        return self.sim.now < self.suspended_until

    # -- sender side ------------------------------------------------------

    def submit(self, msg: Message) -> None:
        self.written += len(msg.payload)
        self._stream.append((self.written, msg))
        self._try_send()

    def _try_send(self) -> None:
        if self._suspended():
            return
        while self.snd_nxt < self.written:
            seglen = min(self.mss, self.written - self.snd_nxt)
            if self.snd_nxt - self.snd_una + seglen > self.p.tcp_window_bytes:
                break
            if self.nagle and seglen < self.mss and self.snd_nxt > self.snd_una:
                break
            start = self.snd_nxt
            self.snd_nxt += seglen
            self.sim.send(self.src, self.dst, seglen + IP_TCP_OVERHEAD, self.data_port,
                          (start, self.snd_nxt), self.flow_id, start)
            if not self._rto_armed:
                self._arm_rto()

    def _arm_rto(self) -> None:
        self._rto_gen += 1
        self._rto_armed = True
        self.sim.after(self.rto, self._on_rto, self._rto_gen)

    def _on_rto(self, gen: int) -> None:
        if gen != self._rto_gen:
            return
        self._rto_armed = False
        if self.snd_una >= self.snd_nxt or self._suspended():
            return
        self.retransmits += 1
        self.snd_nxt = self.snd_una
        self.rto = min(2 * self.rto, self.p.tcp_max_rto_us)
        self._try_send()
        if not self._rto_armed and self.snd_una < self.snd_nxt:
            self._arm_rto()

    def _on_ack(self, frame: Frame) -> None:
        if self._suspended():
            return
        ack = frame.data
        if ack <= self.snd_una:
            return
        self.snd_una = ack
        self.snd_nxt = max(self.snd_nxt, ack)
        self.rto = self.p.tcp_min_rto_us
        self._rto_armed = False
        self._rto_gen += 1
        if self.snd_una < self.snd_nxt:
            self._arm_rto()
        self._try_send()

    # -- receiver side ----------------------------------------------------

    def _on_data(self, frame: Frame) -> None:
        if self._suspended():
            return
        start, end = frame.data
        if start <= self.rcv_nxt < end:
            self.rcv_nxt = end
            while self._stream and self._stream[0][0] <= self.rcv_nxt:
                _, msg = self._stream.popleft()
                self.on_deliver(msg, self.sim.now)
            self._unacked_segs += 1
            if self._unacked_segs >= 2:
                self._send_ack()
            elif not self._delack_armed:
                self._delack_armed = True
                self._delack_gen += 1
                self.sim.after(self.p.tcp_delayed_ack_us, self._on_delack, self._delack_gen)
        else:
            # duplicate or out of order: ACK at once
            self._send_ack()

    def _on_delack(self, gen: int) -> None:
        if gen == self._delack_gen and self._delack_armed:
            self._send_ack()

    def _send_ack(self) -> None:
        self._unacked_segs = 0
        self._delack_armed = False
        self._delack_gen += 1
        self.sim.send(self.dst, self.src, IP_TCP_OVERHEAD, self.ack_port, self.rcv_nxt,
                      self.flow_id, self.rcv_nxt)

    # -- outages ----------------------------------------------------------

    def _on_outage(self, outage: Outage, back: int) -> None:
        if outage.node not in self.path:
            return
        self.suspended_until = max(self.suspended_until, back + self.p.tcp_handshake_us)
        self.sim.at(self.suspended_until, self._resume, self.suspended_until)

    def _resume(self, until: int) -> None:
        if until != self.suspended_until:
            return
        self.snd_nxt = self.snd_una
        self.rto = self.p.tcp_min_rto_us
        self._rto_armed = False
        self._rto_gen += 1
        self._unacked_segs = 0
        self._delack_armed = False
        self._try_send()


class Network:
    """A Simulator plus the per-node and per-flow transport state."""

    def __init__(self, sim: Simulator, params: TransportParams | None = None):
        self.sim = sim
        self.params = params or TransportParams()
        self._pound: dict[int, PoundNode] = {}
        self.flows: dict[int, FlowHandle] = {}
        self.models: dict[int, object] = {}

    def pound_node(self, node: int) -> PoundNode:
        if node not in self._pound:
            self._pound[node] = PoundNode(self, node, self.params.session)
        return self._pound[node]

    def open_flow(self, flow_id: int, src: int, dst: int, transport: str, on_deliver: DeliverFn,
                  priority: int = 0, period_us: int | None = None) -> FlowHandle:
        if flow_id in self.flows:
            raise ValueError(f"flow {flow_id} already open")
        n = self.sim.topology.n
        if not (0 <= src < n and 0 <= dst < n) or src == dst:
            raise ValueError(f"flow {flow_id}: bad endpoints {src} -> {dst} on a {n}-node chain")
        if not 0 <= flow_id <= 0xFFFF:
            raise ValueError(f"flow id {flow_id} out of range")

        if transport == POUND:
            tx = self.pound_node(src)
            rx = self.pound_node(dst)
            tx.routes[flow_id] = dst
            rx.sinks[flow_id] = on_deliver
            if period_us:
                rx.reassembler.flow_timeouts[flow_id] = 2 * period_us
            model = tx

            def submit(msg: Message) -> None:
                tx.submit(msg, priority)
        elif transport == PERFLOW_UNRELIABLE:
            model = PerFlowUnreliable(self, flow_id, src, dst, on_deliver, self.params.session.mtu)
            submit = model.submit
        elif transport in (RELIABLE_ORDERED, RELIABLE_ORDERED_NAGLE):
            model = ReliableOrdered(self, flow_id, src, dst, on_deliver,
                                    transport == RELIABLE_ORDERED_NAGLE, self.params)
            submit = model.submit
        else:
            raise ValueError(f"unknown transport {transport!r}; expected one of {TRANSPORTS}")

        handle = FlowHandle(self, flow_id, src, dst, transport, priority, submit)
        self.flows[flow_id] = handle
        self.models[flow_id] = model
        return handle
