"""Run every check suite with the packaged configuration and write the reports.

    python3 scripts/run_all.py [--out-dir results] [--seed N] [--workers K]
"""

import argparse
import json
from pathlib import Path

from errcalc.cli import _config
from errcalc.harness import SUITES, reports_csv, reports_json, run_suite


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = _config(None)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    totals = {}
    for suite in SUITES:
        if suite == "all":
            continue
        reports = run_suite(cfg, suite, workers=args.workers)
        (out / f"{suite}.json").write_text(reports_json(reports) + "\n")
        (out / f"{suite}.csv").write_text(reports_csv(reports))
        passed = sum(r.passed for r in reports)
        totals[suite] = [passed, len(reports)]
        print(f"{suite:10s} {passed:3d}/{len(reports):<3d}")
        for r in reports:
            if not r.passed:
                print(f"    FAIL {r.name}")
    (out / "summary.json").write_text(json.dumps(totals, indent=2) + "\n")


if __name__ == "__main__":
    main()
