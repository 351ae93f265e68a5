"""Command line entry point: `pound sim | bwsweep | udp send | udp recv | presets`."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import threading
import time
from dataclasses import replace
from pathlib import Path

from .bench import (
    EmptyLog,
    StatsRow,
    bandwidth_sweep,
    compute_stats,
    default_bin_width_ms,
    jitter_histogram,
    reconnection_gap,
    write_histogram_csv,
    write_stats_csv,
    SWEEP_HEADER,
)
from .config import ConfigError, ScenarioConfig, SweepSection, dump_config, load_config, parse_config, preset_names
from .control import local_loop, max_deviation, run_closed_loop, write_control_csv
from .core import FlowConfig, MonotonicClock
from .flows import FlowSpec, SampleLog, payload_for
from .netsim import TRANSPORTS, run_scenario
from .udpnet import (
    DelayProbe,
    EndpointConfig,
    EndpointConfigError,
    PoundReceiver,
    PoundTransmitter,
    open_endpoint,
    parse_hostport,
)

log = logging.getLogger("pound")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _setup_logging() -> None:
    level = os.environ.get("POUND_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


# -- config plumbing -----------------------------------------------------------

def _configure(args) -> tuple[ScenarioConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "transport", None):
        cfg.flows = [replace(f, transport=args.transport) for f in cfg.flows]
        if cfg.sweep is not None:
            cfg.sweep.transport = args.transport
        if cfg.control is not None:
            cfg.control.transport = args.transport
    if getattr(args, "priority", None) is not None:
        cfg.flows = [replace(f, priority=args.priority) for f in cfg.flows]
    if getattr(args, "count", None) is not None:
        cfg.flows = [replace(f, count=args.count) for f in cfg.flows]
    # overrides go through the same validation as the file itself
    cfg = parse_config(dump_config(cfg), f"{args.config} (with command-line overrides)")
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _stats_row(log_: SampleLog, name: str) -> StatsRow:
    try:
        return compute_stats(log_, name)
    except EmptyLog:
        nan = math.nan
        return StatsRow(name, nan, nan, nan, nan, 0.0, 0.0)


def _write_bench_outputs(out: Path, specs: list[FlowSpec], log_: SampleLog) -> list[StatsRow]:
    rows = [_stats_row(log_, s.name) for s in specs]
    with open(out / "stats.csv", "w", newline="") as fp:
        write_stats_csv(rows, fp)
    for s in specs:
        with open(out / f"hist_{s.name}.csv", "w", newline="") as fp:
            write_histogram_csv(jitter_histogram(log_.for_flow(s.name), default_bin_width_ms(s)), fp)
    return rows


def _print_rows(rows: list[StatsRow]) -> None:
    for r in rows:
        print(f"{r.flow}: J_d {r.jd_ms:.3f}±{r.jd_std_ms:.3f} ms  D {r.d_ms:.3f}±{r.d_std_ms:.3f} ms  "
              f"MDR {r.mdr_pct:.1f}%  BW {r.bw_mbps:.3f} Mbps")


# -- sim -----------------------------------------------------------------------

def _run_sweep(cfg: ScenarioConfig, out: Path) -> int:
    sweep = cfg.sweep or SweepSection()
    points = bandwidth_sweep(cfg.link_model(), sweep.transport, cfg.duration_us, sweep.sizes,
                             sweep.offered_bps, cfg.seed, cfg.transport_params(),
                             cfg.topology.os_queue_frames, cfg.topology.nodes)
    with open(out / "bwsweep.csv", "w", newline="") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for size, mbps in points:
            w.writerow([size, f"{mbps:.3f}"])
            print(f"{size:>6} B  {mbps:.3f} Mbps")
    return EXIT_OK


def _run_control(cfg: ScenarioConfig, out: Path) -> int:
    c = cfg.control
    plant = cfg.plant_params()
    specs = {s.name: s for s in cfg.flow_specs()}
    perturbing = specs[c.perturbing] if c.perturbing else None
    log_ = SampleLog()
    trace = run_closed_loop(c.transport, perturbing, cfg.duration_us, plant, cfg.seed,
                            cfg.link_model(), cfg.transport_params(), c.gain, log=log_)
    with open(out / "trace_control.csv", "w", newline="") as fp:
        write_control_csv(trace, fp)
    rows = [_stats_row(log_, name) for name in log_.sent]
    with open(out / "stats.csv", "w", newline="") as fp:
        write_stats_csv(rows, fp)
    dev = max_deviation(trace, local_loop(plant, len(trace) - 1, c.gain))
    print(f"max |Vc - Vc_local| = {dev:.4f} V over {len(trace)} samples")
    return EXIT_OK


def cmd_sim(args) -> int:
    cfg, out = _configure(args)
    if cfg.kind == "bandwidth-sweep":
        return _run_sweep(cfg, out)
    if cfg.kind == "control":
        return _run_control(cfg, out)

    specs = cfg.flow_specs()
    outage = cfg.outage_model() if cfg.kind == "resilience" else None
    res = run_scenario(cfg.topology_model(), specs, cfg.duration_us, cfg.seed,
                       cfg.transport_params(), cfg.topology.os_queue_frames,
                       record_trace=args.trace, outages=[outage] if outage else (),
                       drain_us=cfg.drain_us)
    _print_rows(_write_bench_outputs(out, specs, res.log))
    if args.trace:
        with open(out / "trace.csv", "w", newline="") as fp:
            res.trace.write_csv(fp)
    if outage is not None:
        end = outage.start_us + outage.duration_us
        with open(out / "resilience.csv", "w", newline="") as fp:
            w = csv.writer(fp, lineterminator="\n")
            w.writerow(("flow", "transport", "gap_s"))
            for s in specs:
                gap = reconnection_gap(res.log, s.name, s.period_us, outage.start_us, end)
                w.writerow([s.name, s.transport, "nan" if math.isnan(gap) else f"{gap:.3f}"])
                print(f"{s.name}: reconnection gap {gap:.3f} s")
    return EXIT_OK


def cmd_bwsweep(args) -> int:
    cfg, out = _configure(args)
    return _run_sweep(cfg, out)


# -- udp -----------------------------------------------------------------------

def _flow_configs(specs: list[FlowSpec]) -> list[FlowConfig]:
    return [FlowConfig(s.flow_id, s.priority, s.period_us, max(1, s.message_size)) for s in specs]


def cmd_udp_send(args) -> int:
    cfg, out = _configure(args)
    specs = cfg.flow_specs()
    if args.duration_s is not None:
        limit = int(args.duration_s * 1e6)
        specs = [replace(s, count=max(1, min(s.count, -(-(limit - s.start_us) // s.period_us))))
                 for s in specs]
    peer_host, peer_port = parse_hostport(args.peer)
    echo_host, echo_port = parse_hostport(args.echo_listen or f"0.0.0.0:{peer_port + 1}")

    clock = MonotonicClock()
    data = open_endpoint(EndpointConfig(peer_host=peer_host, peer_port=peer_port, local_host="0.0.0.0"))
    echo = open_endpoint(EndpointConfig(local_host=echo_host, local_port=echo_port))
    tx = PoundTransmitter(data, cfg.session_config(), clock).start()
    probe = DelayProbe(clock)
    stop, abort = threading.Event(), threading.Event()
    probe_thread = threading.Thread(target=probe.run, args=(echo, stop), daemon=True)
    probe_thread.start()
    flow_cfgs = {f.flow_id: f for f in _flow_configs(specs)}
    sent = {s.name: 0 for s in specs}

    def publish(spec: FlowSpec) -> None:
        for seq, t in enumerate(spec.publish_times()):
            if abort.wait(max(0.0, (t - clock.now_us()) / 1e6)):
                return
            tx.publish(flow_cfgs[spec.flow_id], payload_for(cfg.seed, spec.flow_id, seq, spec.message_size))
            sent[spec.name] += 1

    publishers = [threading.Thread(target=publish, args=(s,), daemon=True) for s in specs]
    for p in publishers:
        p.start()
    try:
        while any(p.is_alive() for p in publishers):
            time.sleep(0.05)
            if not probe.samples and clock.now_us() > args.peer_timeout_s * 1e6:
                abort.set()
        if not abort.is_set():
            tx.drain(timeout_s=30)
            expected = sum(sent.values())
            deadline = time.monotonic() + args.linger_s
            while len(probe.samples) < expected and time.monotonic() < deadline:
                time.sleep(0.02)
    finally:
        abort.set()
        tx.stop()
        stop.set()
        probe_thread.join()
        data.close()
        echo.close()

    if not probe.samples:
        reason = f" ({data.last_error or echo.last_error})" if (data.last_error or echo.last_error) else ""
        print(f"error: no echo from peer {args.peer} within {args.peer_timeout_s:g} s{reason}",
              file=sys.stderr)
        return EXIT_RUNTIME
    rows = _write_bench_outputs(out, specs, probe.to_log(specs, sent))
    _print_rows(rows)
    print(f"datagrams sent {data.sent}, failed {data.failed}; echoes {len(probe.samples)}")
    return EXIT_OK


def cmd_udp_recv(args) -> int:
    cfg, out = _configure(args)
    specs = cfg.flow_specs()
    host, port = parse_hostport(args.listen)
    echo_host, echo_port = parse_hostport(args.echo_to)
    data = open_endpoint(EndpointConfig(local_host=host, local_port=port))
    echo = open_endpoint(EndpointConfig(peer_host=echo_host, peer_port=echo_port, local_host="0.0.0.0"))
    names = {s.flow_id: s.name for s in specs}
    counts = {s.name: 0 for s in specs}
    last = [0.0]

    def on_message(msg, _now):
        name = names.get(msg.flow_id, str(msg.flow_id))
        counts[name] = counts.get(name, 0) + 1
        last[0] = time.monotonic()

    rx = PoundReceiver(data, on_message, cfg.session_config(), _flow_configs(specs), echo=echo).start()
    expected = sum(s.count for s in specs)
    t0 = time.monotonic()
    limit = args.duration_s if args.duration_s is not None else cfg.duration_us / 1e6 + 10
    try:
        while rx.messages < expected:
            time.sleep(0.02)
            now = time.monotonic()
            if now - t0 > limit or (last[0] and now - last[0] > args.idle_s):
                break
    finally:
        rx.stop()
        data.close()
        echo.close()

    with open(out / "received.csv", "w", newline="") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(("flow", "messages"))
        for name, n in counts.items():
            w.writerow([name, n])
    print(f"received {rx.messages} messages ({data.received} datagrams, {rx.bad_datagrams} malformed)")
    return EXIT_OK if rx.messages else EXIT_RUNTIME


def cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def _common(p: argparse.ArgumentParser, transport: bool = True) -> None:
    p.add_argument("--config", required=True, help="config file or bundled preset name")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory (default: the config's `output`)")
    if transport:
        p.add_argument("--transport", choices=TRANSPORTS, help="use this transport for every flow")
    p.add_argument("--count", type=int, help="messages per flow")
    p.add_argument("--priority", type=int, help="priority for every flow")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pound", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="run a scenario in the simulator")
    _common(p)
    p.add_argument("--trace", action="store_true", help="also write the per-frame trace.csv")
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("bwsweep", help="goodput of a saturated flow against message size")
    _common(p)
    p.set_defaults(fn=cmd_bwsweep)

    udp = sub.add_parser("udp", help="run over real UDP sockets").add_subparsers(dest="role", required=True)
    p = udp.add_parser("send", help="publish the config's flows to a receiver")
    _common(p, transport=False)
    p.add_argument("--peer", required=True, help="receiver HOST:PORT")
    p.add_argument("--echo-listen", help="HOST:PORT for echoed timestamps (default 0.0.0.0:<peer port + 1>)")
    p.add_argument("--duration-s", type=float, help="stop publishing after this many seconds")
    p.add_argument("--peer-timeout-s", type=float, default=3.0, help="give up if no echo arrives by then")
    p.add_argument("--linger-s", type=float, default=1.0, help="time to wait for trailing echoes")
    p.set_defaults(fn=cmd_udp_send)

    p = udp.add_parser("recv", help="receive, reassemble and echo timestamps")
    _common(p, transport=False)
    p.add_argument("--listen", required=True, help="HOST:PORT to receive on")
    p.add_argument("--echo-to", required=True, help="sender's echo HOST:PORT")
    p.add_argument("--duration-s", type=float, help="maximum run time")
    p.add_argument("--idle-s", type=float, default=2.0, help="stop after this long without messages")
    p.set_defaults(fn=cmd_udp_recv)

    p = sub.add_parser("presets", help="list bundled presets")
    p.set_defaults(fn=cmd_presets)
    return ap


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, EndpointConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as exc:
        log.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
