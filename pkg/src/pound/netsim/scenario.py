from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

from ..core import Message
from ..flows import FlowSpec, SampleLog, payload_for
from .link import Topology
from .sim import EventTrace, Outage, Simulator
from .transports import TRANSPORTS, Network, TransportParams

DEFAULT_DRAIN_US = 5_000_000


class ScenarioError(ValueError):
    """Raised before simulation starts when the scenario is inconsistent."""


@dataclass
class ScenarioResult:
    trace: EventTrace
    log: SampleLog
    net: Network
    sim: Simulator
    check_payloads: bool = False
    corrupt: int = 0


def validate(topology: Topology, flows: Iterable[FlowSpec]) -> None:
    seen_ids, seen_names = set(), set()
    for f in flows:
        if f.transport not in TRANSPORTS:
            raise ScenarioError(f"flow {f.name!r}: unknown transport {f.transport!r}")
        if not (0 <= f.src < topology.n and 0 <= f.dst < topology.n) or f.src == f.dst:
            raise ScenarioError(f"flow {f.name!r}: bad endpoints {f.src}->{f.dst} on {topology.n} nodes")
        if f.flow_id in seen_ids:
            raise ScenarioError(f"flow {f.name!r}: duplicate flow_id {f.flow_id}")
        if f.name in seen_names:
            raise ScenarioError(f"duplicate flow name {f.name!r}")
        seen_ids.add(f.flow_id)
        seen_names.add(f.name)


def run_scenario(topology: Topology, flows: list[FlowSpec], duration_us: int, seed: int = 0,
                 params: TransportParams | None = None, os_queue_frames: int = 1000,
                 record_trace: bool = True, outages: Iterable[Outage] = (),
                 drain_us: int = DEFAULT_DRAIN_US, check_payloads: bool = False,
                 observer: Callable[[FlowSpec, Message, int], None] | None = None) -> ScenarioResult:
    """Publish every flow on the simulated chain and record what arrives.

    Messages are published while `t < duration_us`; the simulation then
    runs up to `drain_us` longer so in-flight messages can land. `observer`
    sees every delivered message, e.g. to echo timestamps back.
    """
    validate(topology, flows)
    sim = Simulator(topology, seed, os_queue_frames, record_trace)
    net = Network(sim, params)
    log = SampleLog()
    result = ScenarioResult(sim.trace, log, net, sim, check_payloads)

    for spec in flows:
        log.sent[spec.name] = 0

        def on_deliver(msg, t, spec=spec):
            if check_payloads and msg.payload != payload_for(seed, spec.flow_id, msg.seq, spec.message_size):
                result.corrupt += 1
            log.record(spec.name, msg.seq, msg.publish_time, t, len(msg.payload))
            if observer is not None:
                observer(spec, msg, t)

        handle = net.open_flow(spec.flow_id, spec.src, spec.dst, spec.transport, on_deliver,
                               spec.priority, spec.period_us)

        def publish(spec=spec, handle=handle):
            log.sent[spec.name] += 1
            handle.publish(payload_for(seed, spec.flow_id, handle.next_seq, spec.message_size))

        for t in spec.publish_times():
            if t >= duration_us:
                break
            sim.at(t, publish)

    for o in outages:
        sim.add_outage(o)
    sim.run(until=duration_us + drain_us)
    return result
