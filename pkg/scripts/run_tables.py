"""Laser/image benchmark on the 2- and 3-node chains, once per transport.

Writes one stats CSV per (topology, transport) and prints a summary table.
"""

import argparse
from dataclasses import replace
from pathlib import Path

from pound.bench import compute_stats, write_stats_csv
from pound.config import load_config
from pound.netsim import TRANSPORTS, run_scenario


def run(preset: str, transport: str, seed: int | None):
    cfg = load_config(preset)
    specs = [replace(s, transport=transport) for s in cfg.flow_specs()]
    res = run_scenario(cfg.topology_model(), specs, cfg.duration_us,
                       cfg.seed if seed is None else seed, cfg.transport_params(),
                       cfg.topology.os_queue_frames, record_trace=False, drain_us=cfg.drain_us)
    return [compute_stats(res.log, s.name) for s in specs]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out/tables"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--transports", nargs="+", default=list(TRANSPORTS), choices=TRANSPORTS)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    print(f"{'preset':<18} {'transport':<23} {'flow':<6} {'J_d':>8} {'std':>8} {'D':>9} {'std':>8} {'MDR%':>6}")
    for preset in ("laser_image_2node", "laser_image_3node"):
        for transport in args.transports:
            rows = run(preset, transport, args.seed)
            with open(args.out / f"{preset}_{transport}.csv", "w", newline="") as fp:
                write_stats_csv(rows, fp)
            for r in rows:
                print(f"{preset:<18} {transport:<23} {r.flow:<6} {r.jd_ms:8.2f} {r.jd_std_ms:8.2f} "
                      f"{r.d_ms:9.2f} {r.d_std_ms:8.2f} {r.mdr_pct:6.1f}")


if __name__ == "__main__":
    main()
