#!/usr/bin/env python3
"""Sum secrecy rate vs thermal noise variance for all implementations."""

import argparse

from fdcran.config import NetworkConfig
from fdcran.experiments import MODES, Scenario, emit, run_scenario, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="noise_sweep.csv")
    ap.add_argument("--realizations", type=int, default=50,
                    help="channel realizations per grid point (200 for full scale)")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--modes", nargs="+", default=list(MODES))
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    scenario = Scenario(
        config=NetworkConfig.defaults(),
        sweep_param="noise",
        sweep_values=tuple(range(-60, -10, 10)),   # dBm
        modes=tuple(args.modes),
        n_realizations=args.realizations,
        master_seed=args.seed,
        scenario_id="noise_sweep",
    )
    rows = run_scenario(scenario, max_workers=args.workers)
    emit(rows, args.out)
    for entry in summarize(rows):
        print(f"{entry['mode']:>20} @ {entry['sweep_value']:>6.1f} dBm: "
              f"WSSR {entry['mean_wssr']:.4f} +- {entry['hw95_wssr']:.4f}")


if __name__ == "__main__":
    main()
