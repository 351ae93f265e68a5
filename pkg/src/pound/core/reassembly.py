"""Receiver-side message reconstruction.

A message is emitted once, when its last missing fragment arrives.
Incomplete messages are dropped when a newer message on the same flow
starts or completes, or when they stay pending past the flow's timeout.
"""

from __future__ import annotations

import enum
import logging
import threading
from dataclasses import dataclass, field

from ..wire import Fragment
from .messages import FALLBACK_REASSEMBLY_TIMEOUT_US, Message

log = logging.getLogger(__name__)


class InconsistentHeader(ValueError):
    """Fragment disagrees with earlier fragments of the same message."""


class Status(enum.Enum):
    COMPLETE = "complete"
    PENDING = "pending"
    DISCARDED = "discarded"


@dataclass
class IngestResult:
    status: Status
    message: Message | None = None
    # older messages of this flow dropped as a side effect of this fragment
    discarded: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class _Pending:
    frag_count: int
    total_len: int
    timestamp: int
    first_arrival: int
    slots: list[bytes | None]
    received: int = 0


class Reassembler:
    def __init__(self, default_timeout_us: int = FALLBACK_REASSEMBLY_TIMEOUT_US,
                 flow_timeouts: dict[int, int] | None = None):
        self.default_timeout_us = default_timeout_us
        self.flow_timeouts = dict(flow_timeouts or {})
        self._pending: dict[tuple[int, int], _Pending] = {}
        # highest seq per flow that started, completed or was discarded;
        # anything at or below it (other than a live pending entry) is stale
        self._floor: dict[int, int] = {}
        self._lock = threading.Lock()
        self.completed = 0
        self.discarded = 0
        self.duplicates = 0

    def timeout_for(self, flow_id: int) -> int:
        return self.flow_timeouts.get(flow_id, self.default_timeout_us)

    def ingest(self, f: Fragment, now: int) -> IngestResult:
        with self._lock:
            dropped = self._expire_locked(now)
            res = self._ingest_locked(f, now)
            res.discarded[:0] = dropped
            return res

    def expire(self, now: int) -> list[tuple[int, int]]:
        with self._lock:
            return self._expire_locked(now)

    @property
    def pending(self) -> list[tuple[int, int]]:
        with self._lock:
            return sorted(self._pending)

    def _expire_locked(self, now: int) -> list[tuple[int, int]]:
        gone = [k for k, p in self._pending.items()
                if now - p.first_arrival > self.timeout_for(k[0])]
        for k in gone:
            del self._pending[k]
        self.discarded += len(gone)
        return gone

    def _ingest_locked(self, f: Fragment, now: int) -> IngestResult:
        h = f.header
        key = (h.flow_id, h.message_seq)
        p = self._pending.get(key)

        if p is None:
            floor = self._floor.get(h.flow_id)
            if floor is not None and h.message_seq <= floor:
                if h.message_seq == floor:
                    self.duplicates += 1
                return IngestResult(Status.DISCARDED)
            older = [k for k in self._pending if k[0] == h.flow_id and k[1] < h.message_seq]
            for k in older:
                del self._pending[k]
            self.discarded += len(older)
            self._floor[h.flow_id] = h.message_seq
            p = _Pending(h.frag_count, h.total_message_len, h.send_timestamp_us, now,
                         [None] * h.frag_count)
            self._pending[key] = p
        else:
            older = []
            if p.frag_count != h.frag_count or p.total_len != h.total_message_len:
                del self._pending[key]
                self.discarded += 1
                raise InconsistentHeader(
                    f"flow {h.flow_id} seq {h.message_seq}: expected count={p.frag_count} "
                    f"len={p.total_len}, got count={h.frag_count} len={h.total_message_len}"
                )

        if p.slots[h.frag_index] is not None:
            self.duplicates += 1
            return IngestResult(Status.PENDING, discarded=older)
        p.slots[h.frag_index] = f.payload
        p.received += 1
        if p.received < p.frag_count:
            return IngestResult(Status.PENDING, discarded=older)

        del self._pending[key]
        payload = b"".join(p.slots)
        if len(payload) != p.total_len:
            self.discarded += 1
            log.debug("flow %d seq %d: length mismatch %d != %d", *key, len(payload), p.total_len)
            return IngestResult(Status.DISCARDED, discarded=older + [key])
        self.completed += 1
        return IngestResult(Status.COMPLETE, Message(h.flow_id, h.message_seq, payload, p.timestamp),
                            discarded=older)
