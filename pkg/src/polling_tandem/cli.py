"""Command-line entry point: ``polling-tandem <subcommand>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .baseline import solve_simple_decomposition
from .ctmc import SolverError, StateSpaceOverflow
from .des import SimConfig, simulate
from .experiments import (
    SUITES,
    error_values,
    error_values_from_table,
    parse_csv,
    parse_markdown,
    render,
    render_summary,
    run_experiment,
    solve_proposed,
)
from .intervisit import PmfCapTooSmall
from .model import InvalidParameters, ModelParams, load_params, symmetric_params
from .ss1 import TruncationInadequate, solve_ss1
from .ss2 import solve_ss2

EXIT_INVALID = 2
EXIT_SOLVER = 3

CAP_FIELDS = ("queue_cap_ss1", "queue_cap_ss2_st1", "queue_cap_ss2_st2", "pmf_cap")


def parse_caps(text: str) -> dict:
    """``"64"`` sets every cap; ``"64,48,40,64"`` sets them in field order."""
    parts = [int(p) for p in text.split(",") if p.strip()]
    if len(parts) == 1:
        parts = parts * len(CAP_FIELDS)
    if len(parts) != len(CAP_FIELDS):
        raise argparse.ArgumentTypeError(f"--caps takes 1 or {len(CAP_FIELDS)} integers")
    return dict(zip(CAP_FIELDS, parts))


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}{k}.")
    elif isinstance(obj, (list, tuple)):
        for k, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{k + 1}.")
    else:
        yield prefix[:-1], obj


def format_record(data: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    pairs = list(_flatten(data))
    if fmt == "csv":
        return "key,value\n" + "".join(f"{k},{v}\n" for k, v in pairs)
    return "| key | value |\n|---|---|\n" + "".join(f"| {k} | {v} |\n" for k, v in pairs)


def _load(args) -> ModelParams:
    params = load_params(args.config) if args.config else symmetric_params(1.0, 4.0, 1.0)
    if args.caps:
        params = replace(params, truncation=replace(params.truncation, **args.caps))
    return params


def _sim_cfg(args) -> SimConfig:
    cfg = SimConfig()
    fields = {k: getattr(args, k, None) for k in ("warmup", "horizon", "replications")}
    fields = {k: v for k, v in fields.items() if v is not None}
    if args.seed is not None:
        fields["seed"] = args.seed
    return replace(cfg, **fields)


def _emit(text: str, args) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve_ss1(args):
    r = solve_ss1(_load(args), station=args.station - 1)
    return format_record(r.to_json(), args.format or "json")


def cmd_solve_ss2(args):
    r = solve_ss2(_load(args))
    return format_record(r.to_json(), args.format or "json")


def cmd_baseline(args):
    r = solve_simple_decomposition(_load(args))
    return format_record(r.to_json(), args.format or "json")


def cmd_simulate(args):
    r = simulate(_load(args), _sim_cfg(args))
    return format_record(r.to_json(), args.format or "json")


def cmd_proposed(args):
    r = solve_proposed(_load(args))
    return format_record(r.to_json(), args.format or "json")


def _overrides(args) -> dict:
    ov = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
        ov.update({k: data[k] for k in ("truncation", "solver", "service_moment") if k in data})
    if args.caps:
        ov["truncation"] = {**ov.get("truncation", {}), **args.caps}
    if args.blocks:
        ov["blocks"] = args.blocks
    return ov


def cmd_experiment(args):
    rows = run_experiment(
        args.suite, _overrides(args), _sim_cfg(args),
        with_sim=not args.no_sim, with_baseline=not args.no_baseline,
    )
    return render(rows, args.format or "csv")


def cmd_summary(args):
    if args.tables:
        d2, ds = [], []
        for path in args.tables:
            text = Path(path).read_text()
            table = parse_markdown(text) if text.lstrip().startswith("|") else parse_csv(text)
            a, b = error_values_from_table(table)
            d2 += a
            ds += b
    else:
        rows = []
        for suite in SUITES:
            rows += run_experiment(suite, _overrides(args), _sim_cfg(args))
        d2, ds = error_values(rows)
    return render_summary(d2, ds, args.format if args.format in ("csv", "markdown") else "markdown")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="polling-tandem",
        description="Waiting times in a two-station tandem of exhaustive polling queues.",
    )
    p.add_argument("--config", help="model parameters as JSON (default: symmetric, mu=4, mu_s=1)")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--format", choices=("json", "csv", "markdown"),
                   help="output format (default json for solves, csv for tables)")
    p.add_argument("--seed", type=int, help="base seed for simulation")
    p.add_argument("--caps", type=parse_caps,
                   help="truncation caps: one integer or ss1,ss2_st1,ss2_st2,pmf")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve-ss1", help="exact single-station chain")
    s.add_argument("--station", type=int, choices=(1, 2), default=1)
    s.set_defaults(func=cmd_solve_ss1)

    s = sub.add_parser("solve-ss2", help="coupled station-1/station-2 chain")
    s.set_defaults(func=cmd_solve_ss2)

    s = sub.add_parser("proposed", help="full report from the coupled model")
    s.set_defaults(func=cmd_proposed)

    s = sub.add_parser("baseline", help="independent-stations decomposition")
    s.set_defaults(func=cmd_baseline)

    def sim_flags(sp):
        sp.add_argument("--replications", type=int)
        sp.add_argument("--horizon", type=float)
        sp.add_argument("--warmup", type=float)

    s = sub.add_parser("simulate", help="discrete-event simulation")
    sim_flags(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("experiment", help="run one experiment suite and print its table")
    s.add_argument("suite", choices=sorted(SUITES))
    s.add_argument("--blocks", nargs="+", help="keep only these block labels")
    s.add_argument("--no-sim", action="store_true", help="skip simulation (error columns blank)")
    s.add_argument("--no-baseline", action="store_true")
    sim_flags(s)
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("summary", help="error summary over experiment tables")
    s.add_argument("tables", nargs="*", help="CSV or markdown tables from `experiment`; "
                   "runs every suite when omitted")
    sim_flags(s)
    s.set_defaults(func=cmd_summary)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        _emit(args.func(args), args)
    except (SolverError, TruncationInadequate, StateSpaceOverflow, PmfCapTooSmall) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidParameters, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return 0


if __name__ == "__main__":
    sys.exit(main())
