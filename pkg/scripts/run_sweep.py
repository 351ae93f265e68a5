"""Goodput against message size per transport, plus the 2- vs 3-node relay penalty."""

import argparse
import csv
from pathlib import Path

from pound.bench import bandwidth_sweep
from pound.config import load_config
from pound.netsim import TRANSPORTS


def sweep(preset: str, transport: str, sizes=None):
    cfg = load_config(preset)
    s = cfg.sweep
    return bandwidth_sweep(cfg.link_model(), transport, cfg.duration_us, sizes or s.sizes,
                           s.offered_bps, cfg.seed, cfg.transport_params(),
                           cfg.topology.os_queue_frames, cfg.topology.nodes)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out/sweep"))
    ap.add_argument("--transports", nargs="+", default=["pound", "perflow_unreliable"], choices=TRANSPORTS)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    with open(args.out / "sweep.csv", "w", newline="") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(("transport", "msg_size_bytes", "goodput_mbps"))
        for transport in args.transports:
            for size, mbps in sweep("bwsweep_2node", transport):
                w.writerow((transport, size, f"{mbps:.3f}"))
                print(f"{transport:<23} {size:>6} B  {mbps:6.3f} Mbps")

    two = dict(sweep("multihop_2node", "perflow_unreliable"))[1024]
    three = dict(sweep("multihop_3node", "perflow_unreliable"))[1024]
    print(f"relay penalty: 3-node {three:.3f} / 2-node {two:.3f} Mbps = {three / two:.3f}")


if __name__ == "__main__":
    main()
