"""Command line front end: ``theory``, ``sweep``, ``plan`` and ``simulate``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Any, Sequence

from . import dof_calculus as dc
from .campaign import run_trials
from .decoder import DEFAULT_TOL
from .protocol_engine import ConfigError, validate_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def decimal_str(q: Fraction, digits: int = 12) -> str:
    with localcontext() as ctx:
        ctx.prec = digits
        return str(Decimal(q.numerator) / Decimal(q.denominator))


def rational(q: Fraction) -> dict[str, Any]:
    return {"num": q.numerator, "den": q.denominator, "decimal": decimal_str(q)}


def breakdown_json(b: dc.DofBreakdown) -> dict[str, Any]:
    return {
        "k": b.k,
        "big_o": rational(b.big_o),
        "o1": b.o1,
        "o2": b.o2,
        "n_star": b.n_star,
        "ds": rational(b.ds),
        "dof_m": {str(m): rational(v) for m, v in b.dof_m.items()},
        "min_antennas": b.min_antennas,
    }


def plan_json(p: dc.ReplicationPlan) -> dict[str, Any]:
    return {
        "k": p.k,
        "n": p.n,
        "rounds": {str(i): r for i, r in p.rounds.items()},
        "slots_phase1": p.slots_phase1,
        "slots_m_I": {str(m): s for m, s in p.slots_m_I.items()},
        "slots_m_II": {f"{m + 1}-II": s for m, s in p.slots_m_II.items()},
        "slot_sequence": [[label, s] for label, s in p.slot_sequence()],
        "total_symbols": p.total_symbols,
        "total_slots": p.total_slots,
        "ratio": rational(p.ratio),
    }


def comparators_json(k: int) -> dict[str, Any]:
    return {name: rational(v) for name, v in dc.comparator_table(k).items()}


def cmd_theory(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    if args.k < 2:
        raise UsageError(f"--k must be at least 2, got {args.k}")
    report: dict[str, Any] = {
        "mode": "theory",
        "parameters": {"k": args.k, "n": args.n},
        "theory": {"breakdown": breakdown_json(dc.sum_dof(args.k)), "comparators": comparators_json(args.k)},
    }
    if args.n is not None:
        if not 2 <= args.n <= args.k:
            raise UsageError(f"--n must lie in [2, {args.k}]")
        report["theory"]["ds_at_n"] = rational(dc.sum_dof_at(args.k, args.n))
        report["plan"] = plan_json(dc.replication_plan(args.k, args.n))
    return report, EXIT_OK


def sweep_rows(k_max: int) -> list[dict[str, Any]]:
    rows = []
    for k, o in dc.sweep_big_o(k_max):
        b = dc.fast_sum_dof(k, o)
        rows.append({
            "k": k,
            "n_star": b.n_star,
            "ds": b.ds,
            "gap": dc.ASYMPTOTE - b.ds,
            "comparators": dc.comparator_table(k),
        })
    return rows


def cmd_sweep(args: argparse.Namespace) -> tuple[dict[str, Any] | str, int]:
    if args.k_max < 2:
        raise UsageError(f"--k-max must be at least 2, got {args.k_max}")
    rows = sweep_rows(args.k_max)
    if args.format == "csv":
        return sweep_csv(rows), EXIT_OK
    return {
        "mode": "sweep",
        "parameters": {"k_max": args.k_max},
        "rows": [
            {
                "k": r["k"],
                "n_star": r["n_star"],
                "ds": rational(r["ds"]),
                "gap_to_64_15": rational(r["gap"]),
                "comparators": {name: rational(v) for name, v in r["comparators"].items()},
            }
            for r in rows
        ],
    }, EXIT_OK


def sweep_csv(rows: list[dict[str, Any]]) -> str:
    fields = ["k", "n_star"]
    for name in ("ds", "gap", *dc.COMPARATOR_SCHEMES):
        fields += [name, f"{name}_num", f"{name}_den"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        out: dict[str, Any] = {"k": r["k"], "n_star": r["n_star"]}
        values = {"ds": r["ds"], "gap": r["gap"], **r["comparators"]}
        for name, q in values.items():
            out[name] = decimal_str(q)
            out[f"{name}_num"] = q.numerator
            out[f"{name}_den"] = q.denominator
        writer.writerow(out)
    return buf.getvalue()


def cmd_plan(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    n = _resolve_n(args)
    table = dc.counts(args.k, n)
    return {
        "mode": "plan",
        "parameters": {"k": args.k, "n": n},
        "counts": {
            "n1": table.n1,
            "t1": table.t1,
            "n2": table.n2,
            "rows": {
                str(m): {
                    "t_m": row.t_m,
                    "n_m": row.n_m,
                    "n_m_plus_1_generated": row.n_m_plus_1_generated,
                    "n_1m_generated": row.n_1m_generated,
                }
                for m, row in table.rows.items()
            },
        },
        "plan": plan_json(dc.replication_plan(args.k, n)),
    }, EXIT_OK


def _resolve_n(args: argparse.Namespace) -> int:
    if args.k < 2:
        raise UsageError(f"--k must be at least 2, got {args.k}")
    n = dc.sum_dof(args.k).n_star if args.n is None else args.n
    if not 2 <= n <= args.k:
        raise UsageError(f"--n must lie in [2, {args.k}]")
    return n


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("RIA_SEED")
    if env is None:
        return 0
    try:
        return int(env, 0)
    except ValueError:
        raise UsageError(f"RIA_SEED must be an integer, got {env!r}") from None


def cmd_simulate(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    n = _resolve_n(args)
    antennas = args.k if args.antennas is None else args.antennas
    seed = _resolve_seed(args.seed)
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    try:
        validate_config(args.k, n, antennas)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    results = run_trials(args.k, n, antennas, args.trials, seed, args.tol)
    passed = sum(r.report.success for r in results)
    report = {
        "mode": "simulate",
        "parameters": {
            "k": args.k, "n": n, "antennas": antennas, "seed": seed,
            "trials": args.trials, "tolerance": args.tol,
        },
        "theory": {
            "breakdown": breakdown_json(dc.sum_dof(args.k)),
            "ds_at_n": rational(dc.sum_dof_at(args.k, n)),
            "comparators": comparators_json(args.k),
        },
        "plan": plan_json(dc.replication_plan(args.k, n)),
        "simulation": {
            "trials": [r.to_json() for r in results],
            "passed": passed,
            "pass_rate": rational(Fraction(passed, args.trials)),
            "max_relative_residual": max(r.report.max_relative_residual for r in results),
            "reseeds": sum(r.reseeds for r in results),
            "csit_violations": sum(r.csit_violations for r in results),
        },
    }
    return report, EXIT_OK if passed == args.trials else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="miso-ria",
        description="Sum-DoF theory and simulation of retrospective interference alignment "
        "for the K-user MISO interference channel with delayed local CSIT",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", default=None, help="write the report here instead of stdout")

    p = sub.add_parser("theory", help="exact sum DoF and comparators for one K")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, default=None, help="also evaluate this many phase-1 transmitters")
    common(p)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("sweep", help="sum DoF and comparators for K = 2..k_max")
    p.add_argument("--k-max", type=int, required=True)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plan", help="counts and integer replication plan")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, default=None, help="defaults to the optimal n*")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="seeded end-to-end protocol runs with backward decoding")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, default=None, help="defaults to the optimal n*")
    p.add_argument("--antennas", type=int, default=None, help="defaults to K")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=None, help="falls back to $RIA_SEED, then 0")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def _flatten(report: dict[str, Any]) -> str:
    """Single-row CSV of scalar report fields, for modes other than sweep."""
    flat: dict[str, Any] = {}

    def walk(prefix: str, value: Any) -> None:
        if isinstance(value, dict):
            for key, v in value.items():
                walk(f"{prefix}.{key}" if prefix else str(key), v)
        elif not isinstance(value, list):
            flat[prefix] = value

    walk("", {k: v for k, v in report.items() if k != "simulation"})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(flat), lineterminator="\n")
    writer.writeheader()
    writer.writerow(flat)
    return buf.getvalue()


def main(argv: Sequence[str] | None = None) -> int:
    # large-K rationals exceed the default int->str digit limit
    if hasattr(sys, "set_int_max_str_digits"):
        sys.set_int_max_str_digits(0)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report, code = args.func(args)
    except (UsageError, dc.DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if isinstance(report, str):
        text = report
    elif args.format == "csv":
        text = _flatten(report)
    else:
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
