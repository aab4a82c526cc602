"""Command-line entry point: ``errcalc check | sens | parse``.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on a
configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import default_config_text, load_config, parse_config
from .errors import ErrcalcError, ParseError
from .expr import as_functional, dump, max_index, parse_expr
from .harness import SUITES, reports_csv, reports_json, run_sensitivity, run_suite


def _config(path: str | None):
    return load_config(path) if path else parse_config(default_config_text())


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_check(args) -> int:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    reports = run_suite(cfg, args.suite, workers=args.workers)
    fmt = reports_csv if args.format == "csv" else reports_json
    _emit(fmt(reports, wall_time=args.timings), args.out)
    failed = [r.name for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed", file=sys.stderr)
    for name in failed:
        print(f"FAIL {name}", file=sys.stderr)
    return 1 if failed else 0


def cmd_sens(args) -> int:
    cfg = _config(args.config)
    inputs = args.inputs.split(";") if args.inputs else None
    _emit(json.dumps(run_sensitivity(cfg, args.quantity, inputs), indent=2), args.out)
    return 0


def cmd_parse(args) -> int:
    node = parse_expr(args.expr)
    dim = max(max_index(node) + 1, 1)
    F = as_functional(node, dim)
    lines = [dump(node).rstrip("\n")]
    grads = F.gradient()
    lines.append("gradient:")
    for i, g in enumerate(grads, 1):
        lines.append(f"  d/dx{i}: {g}")
    if args.at:
        pt = np.array([[float(v) for v in args.at.split(",")]])
        if pt.shape[1] < dim:
            raise ErrcalcError(f"--at needs {dim} coordinates")
        F = F.with_dim(pt.shape[1])
        lines.append(f"value: {float(F(pt)[0])!r}")
        lines.append("grad: [" + ", ".join(repr(float(v)) for v in F.grad(pt)[0]) + "]")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="errcalc", description="Error-calculus checks and sensitivity reports.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="run a check suite")
    c.add_argument("--config", help="JSON run configuration (default: packaged default.json)")
    c.add_argument("--suite", default="all", choices=SUITES)
    c.add_argument("--seed", type=int, help="override the configuration seed")
    c.add_argument("--out", help="write the report here instead of stdout")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--format", choices=("json", "csv"), default="json")
    c.add_argument("--timings", action="store_true", help="include per-check wall times (not reproducible)")
    c.set_defaults(fn=cmd_check)

    s = sub.add_parser("sens", help="sensitivity report for a quantity")
    s.add_argument("--config")
    s.add_argument("--quantity", required=True, help="expression in x1..xd")
    s.add_argument("--inputs", help="semicolon-separated input expressions (default: config inputs)")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_sens)

    e = sub.add_parser("parse", help="print the syntax tree and gradient of an expression")
    e.add_argument("--expr", required=True)
    e.add_argument("--at", help="comma-separated point for evaluation")
    e.set_defaults(fn=cmd_parse)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) is not None and getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ErrcalcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
