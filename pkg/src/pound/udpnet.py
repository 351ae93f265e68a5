"""Datagram-socket backend for the engine, and the echo-based delay probe.

A session uses one UDP socket pair for data. Receivers echo a 14-byte
record (flow_id, seq, send timestamp) over a separate socket so the sender
can compute delays with its own clock only.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable

from .core import (
    FlowConfig,
    InconsistentHeader,
    Message,
    MonotonicClock,
    Reassembler,
    SessionConfig,
    Status,
    TxQueue,
    fragment,
    run_sender,
)
from .core.sender import Clock, Sender
from .core.txqueue import EnqueueReport
from .flows import FlowSpec, SampleLog
from .netsim import Topology, TransportParams, run_scenario
from .wire import WireError, decode_fragment

log = logging.getLogger(__name__)

ECHO = struct.Struct("<HIQ")
DEFAULT_SOCKET_BUFFER = 1 << 20
MAX_DATAGRAM = 65535


class EndpointConfigError(ValueError):
    pass


def _check_port(name: str, port: int | None, allow_zero: bool) -> None:
    if port is None:
        return
    lo = 0 if allow_zero else 1
    if not isinstance(port, int) or not lo <= port <= 65535:
        raise EndpointConfigError(f"{name}={port!r} is not a valid UDP port ({lo}..65535)")


@dataclass(frozen=True)
class EndpointConfig:
    local_host: str = "127.0.0.1"
    local_port: int = 0
    peer_host: str | None = None
    peer_port: int | None = None
    sndbuf: int = DEFAULT_SOCKET_BUFFER
    rcvbuf: int = DEFAULT_SOCKET_BUFFER

    def __post_init__(self):
        _check_port("local_port", self.local_port, allow_zero=True)
        _check_port("peer_port", self.peer_port, allow_zero=False)
        if (self.peer_host is None) != (self.peer_port is None):
            raise EndpointConfigError("peer_host and peer_port must be given together")
        if self.sndbuf <= 0 or self.rcvbuf <= 0:
            raise EndpointConfigError("socket buffer sizes must be positive")


def parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise EndpointConfigError(f"expected HOST:PORT, got {text!r}")
    try:
        p = int(port)
    except ValueError:
        raise EndpointConfigError(f"bad port in {text!r}") from None
    _check_port("port", p, allow_zero=True)
    return host, p


class Endpoint:
    """A bound (and optionally connected) UDP socket with traffic counters."""

    def __init__(self, sock: socket.socket, cfg: EndpointConfig):
        self.sock = sock
        self.cfg = cfg
        self.sent = 0
        self.received = 0
        self.failed = 0
        self.refused = 0  # unreachable reports for earlier datagrams
        self.last_error: OSError | None = None
        self._lock = threading.Lock()

    @property
    def local_address(self) -> tuple[str, int]:
        return self.sock.getsockname()[:2]

    def send(self, datagram: bytes) -> bool:
        """Send to the peer. Socket errors are counted, logged and reported as False.

        On a connected socket, ECONNREFUSED reports an ICMP unreachable for an
        earlier datagram and this one was not sent, so it is retried once.
        """
        try:
            try:
                self.sock.send(datagram)
            except ConnectionRefusedError as exc:
                with self._lock:
                    self.refused += 1
                    self.last_error = exc
                self.sock.send(datagram)
        except OSError as exc:
            with self._lock:
                self.failed += 1
                self.last_error = exc
            log.debug("send to %s:%s failed: %s", self.cfg.peer_host, self.cfg.peer_port, exc)
            return False
        with self._lock:
            self.sent += 1
        return True

    def recv(self, timeout_s: float) -> bytes | None:
        """One datagram, or None after `timeout_s` without traffic."""
        self.sock.settimeout(timeout_s)
        try:
            data = self.sock.recv(MAX_DATAGRAM)
        except (socket.timeout, BlockingIOError):
            return None
        except ConnectionRefusedError as exc:
            # ICMP unreachable from an earlier send on a connected socket
            self.last_error = exc
            return None
        with self._lock:
            self.received += 1
        return data

    def close(self) -> None:
        self.sock.close()

    def __enter__(self) -> "Endpoint":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_endpoint(cfg: EndpointConfig) -> Endpoint:
    """Bind a UDP socket and connect it to the peer, if one is configured.

    OS failures come back as OSError naming the address involved.
    """
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, cfg.sndbuf)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, cfg.rcvbuf)
        try:
            sock.bind((cfg.local_host, cfg.local_port))
        except OSError as exc:
            raise OSError(exc.errno, f"cannot bind {cfg.local_host}:{cfg.local_port}: {exc.strerror}") from exc
        if cfg.peer_host is not None:
            try:
                sock.connect((cfg.peer_host, cfg.peer_port))
            except OSError as exc:
                raise OSError(exc.errno, f"cannot reach {cfg.peer_host}:{cfg.peer_port}: {exc.strerror}") from exc
    except BaseException:
        sock.close()
        raise
    return Endpoint(sock, cfg)


# -- echo records --------------------------------------------------------------

def encode_echo(flow_id: int, seq: int, send_timestamp_us: int) -> bytes:
    return ECHO.pack(flow_id, seq, send_timestamp_us)


def decode_echo(buf: bytes) -> tuple[int, int, int]:
    if len(buf) < ECHO.size:
        raise ValueError(f"echo record needs {ECHO.size} bytes, got {len(buf)}")
    return ECHO.unpack_from(buf)


@dataclass(frozen=True)
class DelaySample:
    flow_id: int
    seq: int
    send_timestamp_us: int
    echoed_us: int

    @property
    def delay_us(self) -> int:
        return self.echoed_us - self.send_timestamp_us


class DelayProbe:
    """Sender-side delay measurement from echoed timestamps.

    Both ends of every sample come from the sender's clock, so the receiver's
    clock offset never enters. Samples include the echo path and are relative.
    """

    def __init__(self, clock: Clock):
        self.clock = clock
        self.samples: list[DelaySample] = []
        self.malformed = 0
        self._lock = threading.Lock()

    def on_echo(self, record: bytes, now: int | None = None) -> DelaySample | None:
        try:
            flow_id, seq, ts = decode_echo(record)
        except ValueError:
            self.malformed += 1
            return None
        s = DelaySample(flow_id, seq, ts, self.clock.now_us() if now is None else now)
        with self._lock:
            self.samples.append(s)
        return s

    def run(self, endpoint: Endpoint, stop: threading.Event, poll_s: float = 0.05) -> None:
        while not stop.is_set():
            data = endpoint.recv(poll_s)
            if data is not None:
                self.on_echo(data)

    def to_log(self, flows: Iterable[FlowSpec], sent: dict[str, int] | None = None) -> SampleLog:
        """Echo arrivals as a delivery log (delivery time = echo arrival)."""
        flows = list(flows)
        names = {f.flow_id: f.name for f in flows}
        sizes = {f.flow_id: f.message_size for f in flows}
        out = SampleLog(sent=dict(sent) if sent else {n: 0 for n in names.values()})
        seen = set()
        with self._lock:
            samples = list(self.samples)
        for s in samples:
            if s.flow_id not in names or (s.flow_id, s.seq) in seen:
                continue
            seen.add((s.flow_id, s.seq))
            out.record(names[s.flow_id], s.seq, s.send_timestamp_us, s.echoed_us, sizes[s.flow_id])
        return out


# -- engine over sockets -------------------------------------------------------

class PoundTransmitter:
    """Publisher side: fragments messages into the priority queue; a thread paces them out."""

    def __init__(self, endpoint: Endpoint, cfg: SessionConfig, clock: Clock | None = None):
        self.endpoint = endpoint
        self.cfg = cfg
        self.clock = clock or MonotonicClock()
        self.queue = TxQueue(cfg.queue_capacity_bytes)
        self.sender: Sender | None = None
        self._seqs: dict[int, int] = {}
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> "PoundTransmitter":
        def loop():
            self.sender = run_sender(self.queue, self.endpoint.send, self.cfg, self.clock,
                                     self._stop, idle_poll_s=0.02)
        self._thread = threading.Thread(target=loop, name="pound-send", daemon=True)
        self._thread.start()
        return self

    def publish(self, flow: FlowConfig, payload: bytes) -> EnqueueReport:
        seq = self._seqs.get(flow.flow_id, 0)
        self._seqs[flow.flow_id] = seq + 1
        now = self.clock.now_us()
        msg = Message(flow.flow_id, seq, payload, now)
        return self.queue.enqueue(fragment(msg, self.cfg.max_fragment_payload, flow.priority, now))

    def drain(self, timeout_s: float) -> bool:
        """Wait until the queue is empty. True if it emptied in time."""
        deadline = self.clock.now_us() + int(timeout_s * 1e6)
        while len(self.queue) and self.clock.now_us() < deadline:
            time.sleep(0.005)
        return len(self.queue) == 0

    def stop(self) -> None:
        self._stop.set()
        self.queue.wake()
        if self._thread is not None:
            self._thread.join()


class PoundReceiver:
    """Receive loop: decode, reassemble, hand complete messages on, echo timestamps."""

    def __init__(self, endpoint: Endpoint, on_message: Callable[[Message, int], None],
                 cfg: SessionConfig = SessionConfig(), flows: Iterable[FlowConfig] = (),
                 clock: Clock | None = None, echo: Endpoint | None = None):
        self.endpoint = endpoint
        self.on_message = on_message
        self.clock = clock or MonotonicClock()
        self.echo = echo
        self.reassembler = Reassembler(cfg.reassembly_timeout_us,
                                       {f.flow_id: f.reassembly_timeout_us for f in flows})
        self.messages = 0
        self.bad_datagrams = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def handle(self, datagram: bytes) -> Message | None:
        now = self.clock.now_us()
        try:
            frag = decode_fragment(datagram)
            res = self.reassembler.ingest(frag, now)
        except (WireError, InconsistentHeader) as exc:
            self.bad_datagrams += 1
            log.debug("dropping datagram: %s", exc)
            return None
        if res.status is not Status.COMPLETE:
            return None
        msg = res.message
        self.messages += 1
        if self.echo is not None:
            self.echo.send(encode_echo(msg.flow_id, msg.seq, msg.publish_time))
        self.on_message(msg, now)
        return msg

    def run(self, poll_s: float = 0.05) -> None:
        while not self._stop.is_set():
            data = self.endpoint.recv(poll_s)
            if data is None:
                self.reassembler.expire(self.clock.now_us())
            else:
                self.handle(data)

    def start(self) -> "PoundReceiver":
        self._thread = threading.Thread(target=self.run, name="pound-recv", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()


# -- simulator adapter ---------------------------------------------------------

class _SimClock:
    def __init__(self):
        self.t = 0

    def now_us(self) -> int:
        return self.t

    def sleep_us(self, us: int) -> None:
        self.t += max(0, us)


def sim_delay_probe(topology: Topology, flows: list[FlowSpec], duration_us: int, seed: int = 0,
                    params: TransportParams | None = None, echo_delay_us: int = 0, **kwargs):
    """Run a simulated scenario with a receiver that echoes every delivery.

    The echo path costs a constant `echo_delay_us`, so with 0 every probe
    sample equals the simulator's ground-truth delay. Returns (probe, result).
    """
    clock = _SimClock()
    probe = DelayProbe(clock)

    def echo(spec: FlowSpec, msg: Message, t: int) -> None:
        clock.t = t + echo_delay_us
        probe.on_echo(encode_echo(msg.flow_id, msg.seq, msg.publish_time))

    result = run_scenario(topology, flows, duration_us, seed, params, observer=echo, **kwargs)
    return probe, result
