#!/usr/bin/env python3
"""Run every bundled scenario and print a one-line result per run.

Usage: python scripts/run_trials.py [--out DIR] [--skip-distributed]
"""

import argparse
from pathlib import Path

from iea_sim.harness import load_scenario, run_scenario

SCENARIOS = ["straight_3ms", "straight_6ms", "baseline_truth_3ms",
             "distributed_smoke"]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/trials")
    ap.add_argument("--skip-distributed", action="store_true")
    args = ap.parse_args()
    root = Path(args.out)
    for name in SCENARIOS:
        cfg = load_scenario(name)
        if args.skip_distributed and cfg.mode == "distributed":
            print(f"{name:<22} skipped (distributed)")
            continue
        res = run_scenario(cfg, root / name)
        s = res.summary
        ct = s["cross_track"]["max_after_settle_m"]
        print(f"{name:<22} mode={s['mode']:<11} end_t={s['end_t']:6.2f}s "
              f"first_fix={s['first_fix_t']} "
              f"settled_ct_max={'n/a' if ct is None else f'{ct:.3f} m'} "
              f"overshoot={s['overshoot_peak_m']:.3f} m")
    print(f"full logs under {root}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
