#!/usr/bin/env python3
"""Recompute a run's summary from its CSV logs and diff it against the
summary.json the run wrote. Exit 0 when they agree to 1e-9.

Usage: python scripts/recompute_summary.py RUN_DIR
"""

import argparse
import json
import math
import sys
from pathlib import Path

from iea_sim.harness import ScenarioConfig, read_run_csv, summarize

TOL = 1e-9


def close(a, b, path="$"):
    """Yield difference descriptions between two JSON-like values."""
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                yield f"{path}.{k}: present in only one summary"
            else:
                yield from close(a[k], b[k], f"{path}.{k}")
    elif isinstance(a, (int, float)) and isinstance(b, (int, float)) \
            and not isinstance(a, bool) and not isinstance(b, bool):
        if not math.isclose(a, b, rel_tol=TOL, abs_tol=TOL):
            yield f"{path}: {a!r} != {b!r}"
    elif a != b:
        yield f"{path}: {a!r} != {b!r}"


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("run_dir", type=Path)
    args = ap.parse_args()
    out = args.run_dir
    cfg = ScenarioConfig.from_json_obj(
        json.loads((out / "scenario.json").read_text()))
    _meta, _cols, rows = read_run_csv(out / "run.csv")
    _m, _c, est_rows = read_run_csv(out / "estimates.csv")
    _m, _c, net_rows = read_run_csv(out / "net_metrics.csv")
    est_records = [(r["mssp_id"], r["seq"], r["t_capture"], r["t_received"],
                    r["x"], r["y"]) for r in est_rows]
    net_records = [(r["t_received"], r["sender"], r["receiver"], r["bytes"],
                    r["latency"]) for r in net_rows]
    recomputed = summarize(rows, est_records, net_records, cfg)
    stored = json.loads((out / "summary.json").read_text())
    diffs = list(close(recomputed, stored))
    if diffs:
        print(f"summary mismatch ({len(diffs)} fields):", file=sys.stderr)
        for d in diffs:
            print(f"  {d}", file=sys.stderr)
        return 1
    print(f"summary for {out} reproduces from the CSV logs (tol {TOL})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
