"""Networked RLC loop against the local loop, with and without a competing image flow."""

import argparse
from dataclasses import replace
from pathlib import Path

from pound.config import load_config
from pound.control import local_loop, max_deviation, run_closed_loop, write_control_csv
from pound.netsim import TRANSPORTS


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out/control"))
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    cfg = load_config("control_rlc")
    plant, c = cfg.plant_params(), cfg.control
    seed = cfg.seed if args.seed is None else args.seed
    perturb = {s.name: s for s in cfg.flow_specs()}[c.perturbing]
    steps = cfg.duration_us // plant.T_us
    local = local_loop(plant, steps, c.gain)
    with open(args.out / "local.csv", "w", newline="") as fp:
        write_control_csv(local, fp)

    print(f"{'transport':<23} {'perturbed':<9} {'max |dVc| (V)':>13} {'stale %':>8}")
    for transport in TRANSPORTS:
        for perturbed in (False, True):
            p = replace(perturb, transport=transport) if perturbed else None
            trace = run_closed_loop(transport, p, cfg.duration_us, plant, seed,
                                    cfg.link_model(), cfg.transport_params(), c.gain)
            tag = f"{transport}_{'perturbed' if perturbed else 'clean'}"
            with open(args.out / f"{tag}.csv", "w", newline="") as fp:
                write_control_csv(trace, fp)
            stale = 100 * sum(not s.fresh for s in trace) / len(trace)
            print(f"{transport:<23} {str(perturbed):<9} {max_deviation(trace, local):13.4f} {stale:8.1f}")


if __name__ == "__main__":
    main()
