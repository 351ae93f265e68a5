"""Per-flow statistics and the experiment drivers built on the simulator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, TextIO

import numpy as np

from .flows import Delivery, FlowSpec, SampleLog, generate_flow, payload_for
from .netsim import LinkModel, Outage, Topology, TransportParams, run_scenario

__all__ = [
    "Delivery", "EmptyLog", "FlowSpec", "SampleLog", "StatsRow", "bandwidth_sweep",
    "compute_stats", "generate_flow", "jitter_histogram", "jitter_samples", "payload_for",
    "reconnection_gap", "resilience_scenario", "write_histogram_csv", "write_stats_csv",
    "STATS_HEADER", "HIST_HEADER", "SWEEP_HEADER",
]

STATS_HEADER = ("flow", "jd_ms", "jd_std_ms", "d_ms", "d_std_ms", "mdr_pct", "bw_mbps")
HIST_HEADER = ("bin_ms", "count")
SWEEP_HEADER = ("msg_size_bytes", "goodput_mbps")


class EmptyLog(ValueError):
    pass


@dataclass(frozen=True)
class StatsRow:
    flow: str
    jd_ms: float
    jd_std_ms: float
    d_ms: float
    d_std_ms: float
    mdr_pct: float
    bw_mbps: float

    def as_csv_row(self) -> list[str]:
        return [self.flow] + [_fmt(v) for v in (self.jd_ms, self.jd_std_ms, self.d_ms,
                                                 self.d_std_ms, self.mdr_pct, self.bw_mbps)]


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.3f}"


def _ordered(deliveries: Iterable[Delivery]) -> list[Delivery]:
    return sorted(deliveries, key=lambda d: (d.deliver_us, d.seq, d.publish_us))


def jitter_samples(log: SampleLog) -> np.ndarray:
    """Inter-arrival times in ms, consecutive deliveries in delivery order."""
    t = np.array([d.deliver_us for d in _ordered(log.deliveries)], dtype=np.int64)
    return np.diff(t) / 1000.0


def compute_stats(log: SampleLog, flow: str | None = None) -> StatsRow:
    """Mean/std of inter-arrival (J_d) and delay (D), delivery ratio and bandwidth.

    Standard deviations are population deviations. Bandwidth is delivered
    payload bits over the active span, first publish to last delivery.
    """
    if flow is not None:
        log = log.for_flow(flow)
    elif len(log.sent) == 1:
        flow = next(iter(log.sent))
    else:
        flow = ",".join(log.sent) or "?"
    ds = _ordered(log.deliveries)
    if not ds:
        raise EmptyLog(f"no deliveries for flow {flow!r}")
    sent = sum(log.sent.values())
    jd = jitter_samples(log)
    delay = np.array([(d.deliver_us - d.publish_us) / 1000.0 for d in ds])
    span_us = ds[-1].deliver_us - min(d.publish_us for d in ds)
    bits = 8 * sum(d.size for d in ds)
    return StatsRow(
        flow=flow,
        jd_ms=float(jd.mean()) if jd.size else math.nan,
        jd_std_ms=float(jd.std()) if jd.size else math.nan,
        d_ms=float(delay.mean()),
        d_std_ms=float(delay.std()),
        mdr_pct=100.0 * len(ds) / sent if sent else math.nan,
        bw_mbps=bits / span_us if span_us > 0 else math.nan,
    )


def jitter_histogram(log: SampleLog, bin_width_ms: float) -> list[tuple[float, int]]:
    """Counts of J_d samples per bin; bins start at 0 and are left-closed."""
    if bin_width_ms <= 0:
        raise ValueError("bin_width_ms must be positive")
    jd = jitter_samples(log)
    if jd.size == 0:
        return []
    idx = np.floor(jd / bin_width_ms).astype(np.int64)
    bins, counts = np.unique(idx, return_counts=True)
    return [(float(b * bin_width_ms), int(c)) for b, c in zip(bins, counts)]


def default_bin_width_ms(spec: FlowSpec) -> float:
    """2 ms bins for small (laser-class) flows, 10 ms for large (image-class) ones."""
    return 2.0 if spec.message_size <= 4096 else 10.0


def write_stats_csv(rows: Iterable[StatsRow], fp: TextIO) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(STATS_HEADER)
    for r in rows:
        w.writerow(r.as_csv_row())


def write_histogram_csv(hist: Iterable[tuple[float, int]], fp: TextIO) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(HIST_HEADER)
    for b, c in hist:
        w.writerow([f"{b:.3f}", c])


# -- resilience --------------------------------------------------------------

def reconnection_gap(log: SampleLog, flow: str, period_us: int, outage_start_us: int,
                     outage_end_us: int) -> float:
    """Seconds between the last delivery before the outage and the first after it, minus one period."""
    ts = [d.deliver_us for d in log.deliveries if d.flow == flow]
    before = [t for t in ts if t < outage_start_us]
    after = [t for t in ts if t >= outage_end_us]
    if not before or not after:
        return math.nan
    return (min(after) - max(before) - period_us) / 1e6


def resilience_scenario(topology: Topology, flows: list[FlowSpec], outage: Outage,
                        duration_us: int, seed: int = 0,
                        params: TransportParams | None = None,
                        os_queue_frames: int = 1000) -> dict[str, float]:
    """Bring `outage.node` down and report each flow's reconnection gap in seconds."""
    path_nodes = set()
    for f in flows:
        path_nodes.update(topology.path(f.src, f.dst))
    if outage.node not in path_nodes:
        raise ValueError(f"outage node {outage.node} is not on any flow's path")
    res = run_scenario(topology, flows, duration_us, seed, params, os_queue_frames,
                       record_trace=False, outages=[outage])
    end = outage.start_us + outage.duration_us
    return {f.name: reconnection_gap(res.log, f.name, f.period_us, outage.start_us, end)
            for f in flows}


# -- bandwidth sweep -----------------------------------------------------------

SWEEP_SIZES = (1024, 4096, 16384, 65536)


def bandwidth_sweep(link: LinkModel, transport: str, duration_us: int,
                    sizes: Iterable[int] = SWEEP_SIZES, offered_bps: float = 6.5e6,
                    seed: int = 0, params: TransportParams | None = None,
                    os_queue_frames: int = 1000, nodes: int = 2) -> list[tuple[int, float]]:
    """Goodput (Mbps) of one saturated flow per message size. Empty when duration is 0."""
    if duration_us <= 0:
        return []
    out = []
    for size in sizes:
        period = max(1, round(size * 8 / offered_bps * 1e6))
        spec = FlowSpec("sat", size, period, count=duration_us // period + 1,
                        transport=transport, src=0, dst=nodes - 1, flow_id=1)
        res = run_scenario(Topology.chain(nodes, link), [spec], duration_us, seed, params,
                           os_queue_frames, record_trace=False, drain_us=0)
        bits = 8 * sum(d.size for d in res.log.deliveries)
        out.append((size, bits / duration_us))
    return out


def with_transport(flows: Iterable[FlowSpec], transport: str) -> list[FlowSpec]:
    return [replace(f, transport=transport) for f in flows]
