import random
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ListQueue
from pound.core import (
    FlowConfig,
    InconsistentHeader,
    Message,
    Pacer,
    Reassembler,
    SessionConfig,
    Status,
    TxQueue,
    VirtualClock,
    fragment,
    pacing_interval,
    run_sender,
)
from pound.core.sender import Sender
from pound.wire import decode_fragment


def msg(size, flow=1, seq=0, t=0, rng=None):
    data = (rng or random.Random(size * 31 + seq)).randbytes(size)
    return Message(flow, seq, data, t)


def frags(size, flow=1, seq=0, prio=0, max_payload=1448):
    return fragment(msg(size, flow, seq), max_payload, prio, 0)


# -- fragmentation -------------------------------------------------------------

def test_64k_is_44_fragments():
    assert len(fragment(msg(65536), 1500, 0, 0)) == 44


def test_small_message_single_fragment():
    (f,) = fragment(msg(100), 1448, 3, 0)
    assert f.header.frag_count == 1 and f.header.total_message_len == 100


def test_empty_message_one_empty_fragment():
    (f,) = fragment(Message(1, 0, b"", 5), 1448, 0, 5)
    assert f.payload == b"" and f.header.frag_count == 1


def test_headers_carry_message_fields():
    fs = fragment(Message(9, 4, bytes(3000), 0), 1000, 6, 1234)
    assert [f.header.frag_index for f in fs] == [0, 1, 2]
    assert {(h.flow_id, h.message_seq, h.frag_count, h.total_message_len, h.priority,
             h.send_timestamp_us) for h in (f.header for f in fs)} == {(9, 4, 3, 3000, 6, 1234)}


@given(st.integers(1, 1500), st.data())
def test_fragments_concatenate_to_payload(max_payload, data):
    payload = data.draw(st.binary(max_size=10 * max_payload))
    fs = fragment(Message(1, 0, payload, 0), max_payload, 0, 0)
    assert len(fs) == max(1, -(-len(payload) // max_payload))
    assert all(len(f.payload) <= max_payload for f in fs)
    assert b"".join(f.payload for f in fs) == payload


def test_session_defaults():
    cfg = SessionConfig()
    assert cfg.max_fragment_payload == 1448
    assert cfg.frame_bytes(1448) == 1524
    with pytest.raises(ValueError):
        SessionConfig(mtu=52, header_overhead=52)


def test_flow_timeout_is_twice_period():
    assert FlowConfig(1, 7, 20_000).reassembly_timeout_us == 40_000


# -- transmit queue ------------------------------------------------------------

def test_enqueue_into_empty_queue():
    q = TxQueue(10_000)
    rep = q.enqueue(frags(1024))
    assert rep.accepted and not rep.rejected and rep.evicted == []
    assert q.current_bytes == 1024 + 24


def test_high_priority_evicts_oldest_low_priority_message():
    q = TxQueue(3 * (65536 + 44 * 24))
    for seq in range(3):
        assert q.enqueue(frags(65536, flow=2, seq=seq, prio=1, max_payload=1500)).accepted
    rep = q.enqueue(frags(1024, flow=1, seq=0, prio=7))
    assert rep.accepted and rep.evicted == [(2, 0)]
    assert q.fragments_of(2, 0) == 0 and q.fragments_of(2, 1) == 44
    assert q.pop_next().header.flow_id == 1


def test_equal_priority_rejects_newcomer_and_leaves_queue_unchanged():
    q = TxQueue(2000)
    q.enqueue(frags(1500, flow=1, prio=3))
    before = q.messages()
    rep = q.enqueue(frags(1000, flow=2, prio=3))
    assert rep.rejected and not rep.accepted and rep.evicted == []
    assert q.messages() == before and q.rejections == 1


def test_oversized_message_rejected():
    assert TxQueue(1000).enqueue(frags(5000, prio=255)).rejected


def test_pop_order_priority_then_fifo():
    q = TxQueue(100_000)
    for seq, prio in enumerate([3, 7, 7]):
        q.enqueue(frags(10, flow=1, seq=seq, prio=prio))
    assert [q.pop_next().header.message_seq for _ in range(3)] == [1, 2, 0]
    assert q.pop_next() is None


def test_single_fragment_then_empty():
    q = TxQueue(1000)
    q.enqueue(frags(10))
    assert q.pop_next() is not None
    assert q.pop_next() is None


def test_interleaved_flows_pop_in_fragment_order():
    q = TxQueue(1 << 20)
    q.enqueue(frags(5000, flow=1, prio=2, max_payload=1000))
    q.enqueue(frags(5000, flow=2, prio=2, max_payload=1000))
    seen = {}
    while (f := q.pop_next()) is not None:
        seen.setdefault(f.header.flow_id, []).append(f.header.frag_index)
    assert seen == {1: [0, 1, 2, 3, 4], 2: [0, 1, 2, 3, 4]}


ops = st.lists(st.one_of(
    st.tuples(st.just("push"), st.integers(0, 4), st.integers(0, 6000)),
    st.tuples(st.just("pop"), st.integers(1, 5), st.just(0)),
), max_size=60)


def run_against_oracle(sequence, capacity=20_000, max_payload=1000):
    q, ref = TxQueue(capacity), ListQueue(capacity)
    seq = 0
    for op, a, b in sequence:
        if op == "push":
            fs = fragment(Message(a, seq, bytes(b), 0), max_payload, a, 0)
            rep = q.enqueue(fs)
            ok, victims = ref.enqueue((a, seq), a, [f.wire_size for f in fs])
            assert rep.accepted == ok and rep.rejected == (not ok)
            assert rep.evicted == victims
            seq += 1
        else:
            for _ in range(a):
                f = q.pop_next()
                r = ref.pop()
                got = None if f is None else ((f.header.flow_id, f.header.message_seq), f.header.frag_index)
                assert got == r
        assert q.current_bytes == ref.used() <= capacity


@given(ops)
def test_queue_matches_brute_force_oracle(sequence):
    run_against_oracle(sequence)


@given(st.lists(st.tuples(st.integers(0, 255), st.integers(0, 3000)), max_size=30))
def test_drain_is_priority_monotone(msgs):
    q = TxQueue(1 << 20)
    for seq, (prio, size) in enumerate(msgs):
        q.enqueue(fragment(Message(1, seq, bytes(size), 0), 1000, prio, 0))
    prios = []
    while (f := q.pop_next()) is not None:
        prios.append(f.header.priority)
    assert prios == sorted(prios, reverse=True)


def test_concurrent_producers_single_consumer():
    q = TxQueue(1 << 24)
    n_threads, per = 4, 200

    def produce(flow):
        for seq in range(per):
            q.enqueue(fragment(Message(flow, seq, bytes(3000), 0), 1000, flow, 0))

    threads = [threading.Thread(target=produce, args=(i,)) for i in range(n_threads)]
    for t in threads:
        t.start()
    popped = 0
    while any(t.is_alive() for t in threads) or len(q):
        if q.pop_next() is not None:
            popped += 1
    for t in threads:
        t.join()
    while q.pop_next() is not None:
        popped += 1
    assert popped == n_threads * per * 3
    assert q.current_bytes == 0


def test_wait_times_out_on_empty_queue():
    assert TxQueue(100).wait(0.01) is False


# -- pacing --------------------------------------------------------------------

@pytest.mark.parametrize("nbytes,rate,expect", [(1024, 6e6, 1365), (0, 6e6, 0), (1500, 54e6, 222)])
def test_pacing_interval(nbytes, rate, expect):
    assert pacing_interval(nbytes, rate) == expect


@given(st.lists(st.integers(1, 1600), max_size=200), st.sampled_from([1e6, 6e6, 54e6, 7.3e6]))
def test_pacer_cumulative_wait_is_exact(sizes, rate):
    p = Pacer(rate)
    total = sum(p.wait_for(s) for s in sizes)
    bits = 8 * sum(sizes)
    assert total == -(-(bits * 1_000_000) // int(rate))


# -- sender loop ---------------------------------------------------------------

def test_blocking_window_for_44_full_frames():
    cfg = SessionConfig(mtu=1500, header_overhead=0, link_rate_bps=6e6)
    q = TxQueue(1 << 20)
    q.enqueue(fragment(Message(1, 0, bytes(44 * 1476), 0), 1476, 0, 0))
    clock, sent = VirtualClock(), []
    s = run_sender(q, sent.append, cfg, clock)
    assert len(sent) == 44 and s.sent_frame_bytes == 44 * 1500
    assert clock.now_us() >= 88_000


def test_sender_elapsed_equals_pacing_bound():
    rng = random.Random(3)
    cfg = SessionConfig()
    q = TxQueue(1 << 22)
    for seq in range(100):
        q.enqueue(fragment(Message(1, seq, bytes(rng.randint(0, 1448)), 0), 1448, 0, 0))
    clock, sent = VirtualClock(), []
    s = run_sender(q, sent.append, cfg, clock)
    bits = 8 * sum(cfg.frame_bytes(len(decode_fragment(d).payload)) for d in sent)
    assert clock.now_us() == -(-(bits * 1_000_000) // 6_000_000)
    assert s.sent == 100


def test_empty_queue_sends_nothing():
    clock, sent = VirtualClock(), []
    s = run_sender(TxQueue(100), sent.append, SessionConfig(), clock)
    assert sent == [] and s.sent == 0 and clock.now_us() == 0


def test_stopped_sender_blocks_without_spinning():
    q = TxQueue(100)
    stop = threading.Event()
    calls = []
    t = threading.Thread(target=run_sender, args=(q, calls.append, SessionConfig(), VirtualClock(), stop),
                         kwargs={"idle_poll_s": 0.01})
    t.start()
    stop.wait(0.1)
    stop.set()
    q.wake()
    t.join(1)
    assert not t.is_alive() and calls == []


def test_channel_failures_counted_and_dropped():
    q = TxQueue(1 << 20)
    q.enqueue(fragment(Message(1, 0, bytes(3000), 0), 1000, 0, 0))
    n = [0]

    def flaky(datagram):
        n[0] += 1
        if n[0] == 2:
            raise OSError("no buffer space")
        return n[0] != 3 or False

    s = Sender(q, flaky, SessionConfig())
    while s.step() is not None:
        pass
    assert s.sent == 1 and s.failed == 2


# -- reassembly ----------------------------------------------------------------

def test_single_fragment_completes_immediately():
    r = Reassembler()
    (f,) = fragment(Message(1, 0, b"hello", 7), 1448, 0, 7)
    res = r.ingest(f, 10)
    assert res.status is Status.COMPLETE
    assert res.message == Message(1, 0, b"hello", 7)


def test_newer_seq_discards_older_pending():
    r = Reassembler()
    old = fragment(Message(1, 0, bytes(3000), 0), 1000, 0, 0)
    new = fragment(Message(1, 1, bytes(range(256)) * 10, 0), 1000, 0, 0)
    assert r.ingest(old[0], 0).status is Status.PENDING
    assert r.ingest(old[1], 1).status is Status.PENDING
    res = r.ingest(new[0], 2)
    assert res.status is Status.PENDING and res.discarded == [(1, 0)]
    assert r.ingest(new[1], 3).status is Status.PENDING
    done = r.ingest(new[2], 4)
    assert done.status is Status.COMPLETE and done.message.payload == bytes(range(256)) * 10
    # the straggler of the discarded message is ignored
    assert r.ingest(old[2], 5).status is Status.DISCARDED
    assert r.discarded == 1 and r.completed == 1


def test_duplicates_are_idempotent():
    r = Reassembler()
    fs = fragment(Message(1, 0, bytes(2500), 0), 1000, 0, 0)
    r.ingest(fs[0], 0)
    r.ingest(fs[0], 0)
    r.ingest(fs[1], 0)
    assert r.ingest(fs[2], 0).status is Status.COMPLETE
    assert r.ingest(fs[2], 0).status is Status.DISCARDED
    assert r.completed == 1 and r.duplicates == 2


def test_timeout_uses_flow_period():
    r = Reassembler(500_000, {1: FlowConfig(1, 7, 20_000).reassembly_timeout_us})
    a = fragment(Message(1, 0, bytes(2000), 0), 1000, 0, 0)
    b = fragment(Message(2, 0, bytes(2000), 0), 1000, 0, 0)
    r.ingest(a[0], 0)
    r.ingest(b[0], 0)
    assert r.expire(40_000) == []
    assert r.expire(40_001) == [(1, 0)]
    assert r.expire(500_001) == [(2, 0)]
    assert r.ingest(a[1], 500_002).status is Status.DISCARDED


def test_inconsistent_header_drops_message():
    r = Reassembler()
    a = fragment(Message(1, 0, bytes(2000), 0), 1000, 0, 0)
    b = fragment(Message(1, 0, bytes(3000), 0), 1000, 0, 0)
    r.ingest(a[0], 0)
    with pytest.raises(InconsistentHeader):
        r.ingest(b[1], 1)
    assert r.pending == []


@given(st.permutations(list(range(46))), st.integers(45 * 1000 + 1, 46 * 1000), st.integers(0, 2**32))
def test_any_permutation_of_46_fragments(order, size, seed):
    payload = random.Random(seed).randbytes(size)
    fs = fragment(Message(3, 9, payload, 0), 1000, 0, 0)
    assert len(fs) == 46
    r = Reassembler()
    results = [r.ingest(fs[i], 0) for i in order]
    assert [x.status for x in results[:-1]] == [Status.PENDING] * 45
    assert results[-1].status is Status.COMPLETE
    assert results[-1].message.payload == payload


def test_interleaved_flows_exactly_once():
    rng = random.Random(11)
    sent, pending = {}, []
    for flow in range(4):
        for seq in range(20):
            data = rng.randbytes(rng.randint(0, 20_000))
            sent[(flow, seq)] = data
            pending.append(fragment(Message(flow, seq, data, 0), 1448, 0, 0))
    # interleave flows but keep each flow's messages in order (as a priority queue would)
    streams = {f: [x for fs in pending if fs[0].header.flow_id == f for x in fs] for f in range(4)}
    r, got = Reassembler(), {}
    while any(streams.values()):
        f = rng.choice([k for k, v in streams.items() if v])
        res = r.ingest(streams[f].pop(0), 0)
        if res.status is Status.COMPLETE:
            key = (res.message.flow_id, res.message.seq)
            assert key not in got
            got[key] = res.message.payload
    assert got == sent
