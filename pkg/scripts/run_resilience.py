"""Reconnection gap after a 5 s interface outage, per transport and chain length."""

import argparse
import csv
from dataclasses import replace
from pathlib import Path

from pound.bench import resilience_scenario
from pound.config import load_config
from pound.netsim import TRANSPORTS


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out/resilience"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    with open(args.out / "gaps.csv", "w", newline="") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(("nodes", "transport", "flow", "gap_s"))
        for preset in ("resilience_2node", "resilience_3node"):
            cfg = load_config(preset)
            for transport in TRANSPORTS:
                specs = [replace(s, transport=transport) for s in cfg.flow_specs()]
                gaps = resilience_scenario(cfg.topology_model(), specs, cfg.outage_model(),
                                           cfg.duration_us, cfg.seed, cfg.transport_params(),
                                           cfg.topology.os_queue_frames)
                for flow, gap in gaps.items():
                    w.writerow((cfg.topology.nodes, transport, flow, f"{gap:.3f}"))
                print(f"{cfg.topology.nodes}-node {transport:<23} "
                      + "  ".join(f"{f}: {g:.3f} s" for f, g in gaps.items()))


if __name__ == "__main__":
    main()
