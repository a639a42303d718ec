"""Command-line entry point: ``stclear clear|verify|sweep|stats``.

Exit codes: 0 success, 1 error or failed check, 2 infeasible instance.
"""
from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path

from . import cases
from .builder import build, export_lp_text
from .model import ScenarioError, require_valid
from .scenario_io import SchemaError, load_scenario
from .settlement import price_ranges, prices_csv, settle
from .solver import Status, dump_basis, solution_from_dict, solve
from .sweep import capacity_sweep, histogram_csv, lmp_stats, parse_grid, surplus_chain
from .verify import ALL_CHECKS, DEFAULT_TOLERANCES, FAIL, INCONCLUSIVE, verify_all

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument helpers

def builtin(selector: str, profile: str | None = None):
    """Resolve ``temporal:<1-9>``, ``sevenbus:<1-7>`` or ``ieee30[:novl]``."""
    name, _, arg = selector.partition(":")
    if name == "temporal" and arg.isdigit():
        return cases.builtin_temporal(int(arg))
    if name == "sevenbus" and arg.isdigit():
        return cases.builtin_seven_bus(int(arg))
    if name == "ieee30" and arg in ("", "novl"):
        demand_profile = None
        if profile is not None:
            demand_profile = json.loads(Path(profile).read_text())
        return cases.builtin_ieee30(arg == "", demand_profile)
    raise UsageError(f"unknown builtin selector {selector!r}")


def _chain(text: str, profile):
    """``temporal:1..9`` or a comma-separated list of selectors."""
    m = re.fullmatch(r"(\w+):(\d+)\.\.(\d+)", text.strip())
    if m:
        lo, hi = int(m.group(2)), int(m.group(3))
        if hi < lo:
            raise UsageError(f"empty chain {text!r}")
        return [builtin(f"{m.group(1)}:{k}", profile) for k in range(lo, hi + 1)]
    return [builtin(s.strip(), profile) for s in text.split(",") if s.strip()]


def _tolerances(items) -> dict:
    tols = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or key not in DEFAULT_TOLERANCES:
            raise UsageError(f"--tol expects one of {sorted(DEFAULT_TOLERANCES)} as name=value")
        x = float(value)
        if not (x > 0 and math.isfinite(x)):
            raise UsageError(f"tolerance {key} must be positive")
        tols[key] = x
    return tols


def _checks(text):
    if text is None:
        return ALL_CHECKS
    names = tuple(c.strip() for c in text.split(",") if c.strip())
    unknown = set(names) - set(ALL_CHECKS) - {"disaggregation_equivalence"}
    if unknown or not names:
        raise UsageError(f"unknown checks {sorted(unknown)}; choose from {list(ALL_CHECKS)}")
    return names


def _sweep_arg(text: str) -> tuple[str, list[float]]:
    m = re.fullmatch(r"link=(.+),grid=(.*)", text.strip())
    if not m:
        raise UsageError("--sweep expects link=<id>,grid=<a:b:step>")
    try:
        grid = parse_grid(m.group(2))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return m.group(1), grid


def _scenario(args):
    if (args.builtin is None) == (args.scenario is None):
        raise UsageError("give exactly one of --builtin or --scenario")
    sc = builtin(args.builtin, args.profile) if args.builtin else load_scenario(args.scenario)
    require_valid(sc)
    return sc


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _wants(fmt: str, kind: str) -> bool:
    return fmt == "both" or fmt == kind


# ---------------------------------------------------------------------------
# commands

# price-uniqueness probing costs two solves per balance row
PRICE_RANGE_ROWS = 200


def _degenerate_prices(sc, lp, sol, tol: float = 1e-6) -> list[dict]:
    lo, hi = price_ranges(lp, sol)
    flagged = []
    for n_i, n in enumerate(sc.nodes):
        for t in sc.times:
            a, b = lo[n_i, t - 1], hi[n_i, t - 1]
            if b - a > tol:
                flagged.append({"node": n, "time": t, "pi_min": a, "pi_max": b})
    return flagged


def _report_verification(report, out: Path, fmt: str) -> int:
    sys.stdout.write(report.to_text())
    if _wants(fmt, "json"):
        _write(out, "verification.json", report.to_json())
    if any(r.status == INCONCLUSIVE for r in report.records):
        print("warning: some relations are degenerate-inconclusive", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_ERROR


def cmd_clear(args) -> int:
    sc = _scenario(args)
    tols = _tolerances(args.tol)
    lp = build(sc)
    sol = solve(lp, args.backend)
    out = Path(args.out)
    doc = sol.to_dict(lp)
    if sol.optimal and lp.n_eq <= PRICE_RANGE_ROWS:
        doc["degenerate_prices"] = _degenerate_prices(sc, lp, sol)
        if doc["degenerate_prices"]:
            print(f"warning: {len(doc['degenerate_prices'])} nodal prices are not unique; "
                  "see degenerate_prices in solution.json", file=sys.stderr)
    _write(out, "solution.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.dump_basis:
        out.mkdir(parents=True, exist_ok=True)
        dump_basis(out / "basis.json", lp, sol)
        _write(out, "model.lp", export_lp_text(lp))
    if sol.status is Status.INFEASIBLE:
        print(f"{sc.name or 'scenario'}: infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    if not sol.optimal:
        print(f"{sc.name or 'scenario'}: {sol.status.value}", file=sys.stderr)
        return EXIT_ERROR
    st = settle(sc, sol, lp)
    if _wants(args.format, "csv"):
        _write(out, "settlement.csv", st.to_csv())
        _write(out, "prices.csv", prices_csv(sc, st))
    if _wants(args.format, "json"):
        _write(out, "settlement.json", st.to_json() + "\n")
    print(f"{sc.name or 'scenario'}: optimal, surplus {-sol.objective:.6f}")
    if args.verify:
        report = verify_all(sc, sol, lp, _checks(args.checks), tols, args.backend)
        return _report_verification(report, out, args.format)
    return EXIT_OK


def cmd_verify(args) -> int:
    sc = _scenario(args)
    tols = _tolerances(args.tol)
    lp = build(sc)
    if args.solution:
        try:
            doc = json.loads(Path(args.solution).read_text())
            sol = solution_from_dict(lp, doc)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot replay {args.solution}: {exc}") from None
    else:
        sol = solve(lp, args.backend)
    if sol.status is Status.INFEASIBLE:
        print(f"{sc.name or 'scenario'}: infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    report = verify_all(sc, sol, lp, _checks(args.checks), tols, args.backend)
    return _report_verification(report, Path(args.out), args.format)


def cmd_sweep(args) -> int:
    if args.sweep is None and args.chain is None:
        raise UsageError("sweep needs --sweep and/or --chain")
    out = Path(args.out)
    status = EXIT_OK
    if args.sweep is not None:
        link, grid = _sweep_arg(args.sweep)
        sc = _scenario(args)
        report = capacity_sweep(sc, link, grid, args.backend, args.workers)
        if _wants(args.format, "csv"):
            _write(out, "sweep.csv", report.to_csv())
        if _wants(args.format, "json"):
            _write(out, "sweep.json", report.to_json() + "\n")
        for rel in report.relations:
            print(f"{rel.name:<24} {rel.status}")
            if rel.status == FAIL:
                status = EXIT_ERROR
        last = report.points[-1]
        print(f"final unit profit {last.unit_profit:.6f}, gap {last.gap:.6f}")
        sol_lp = build(sc)
        sol = solve(sol_lp, args.backend)
        if sol.optimal:
            pi = settle(sc, sol, sol_lp).pi
            _write(out, "lmp_histogram.csv", histogram_csv(pi, args.bins))
            _write(out, "lmp_stats.json",
                   json.dumps(lmp_stats(pi).as_dict(), indent=2, sort_keys=True) + "\n")
    if args.chain is not None:
        chain = _chain(args.chain, args.profile)
        rep = surplus_chain(chain, args.backend)
        _write(out, "chain.csv", rep.to_csv())
        sys.stdout.write(rep.to_csv())
        print(f"surplus_monotonicity     {rep.record.status}")
        if rep.record.status == FAIL:
            status = EXIT_ERROR
    return status


def cmd_stats(args) -> int:
    """LMP statistics of one scenario, optionally side by side with its no-link variant."""
    sc = _scenario(args)
    runs = {"base": sc}
    if args.compare_no_links:
        from dataclasses import replace
        runs["no_links"] = replace(sc, virtual_links=(), name=f"{sc.name}:novl")
    out = Path(args.out)
    stats = {}
    for tag, scen in runs.items():
        lp = build(scen)
        sol = solve(lp, args.backend)
        if not sol.optimal:
            print(f"{tag}: {sol.status.value}", file=sys.stderr)
            return EXIT_INFEASIBLE if sol.status is Status.INFEASIBLE else EXIT_ERROR
        pi = settle(scen, sol, lp).pi
        stats[tag] = {**lmp_stats(pi).as_dict(), "surplus": -sol.objective}
        _write(out, f"lmp_histogram_{tag}.csv", histogram_csv(pi, args.bins, (0.0, 200.0)))
    _write(out, "lmp_stats.json", json.dumps(stats, indent=2, sort_keys=True) + "\n")
    keys = ("mean", "median", "max", "min", "std_dev", "avg_dev", "surplus")
    print("statistic  " + "  ".join(f"{t:>12}" for t in stats))
    for k in keys:
        print(f"{k:<9}  " + "  ".join(f"{stats[t][k]:>12.4f}" for t in stats))
    return EXIT_OK


# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--builtin", help="temporal:<1-9>, sevenbus:<1-7>, ieee30[:novl]")
    common.add_argument("--scenario", help="path to a scenario JSON file")
    common.add_argument("--profile", help="IEEE 30-bus demand profile JSON (node -> 24 values)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--format", choices=("json", "csv", "both"), default="both")
    common.add_argument("--backend", choices=("auto", "simplex", "highs"), default="auto")
    common.add_argument("--tol", action="append", metavar="NAME=VALUE",
                        help=f"override a tolerance ({', '.join(DEFAULT_TOLERANCES)})")
    common.add_argument("--checks", help=f"comma-separated subset of {','.join(ALL_CHECKS)}")

    parser = argparse.ArgumentParser(prog="stclear",
                                     description="Space-time market clearing with virtual links.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("clear", parents=[common], help="solve and settle a scenario")
    p.add_argument("--verify", action="store_true", help="run the verification suite too")
    p.add_argument("--dump-basis", action="store_true",
                   help="also write basis.json and model.lp")
    p.set_defaults(func=cmd_clear)
    p = sub.add_parser("verify", parents=[common], help="run the verification suite")
    p.add_argument("--solution", help="replay a solution.json instead of solving")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("sweep", parents=[common], help="capacity sweeps and surplus chains")
    p.add_argument("--sweep", metavar="link=<id>,grid=<a:b:step>")
    p.add_argument("--chain", help="temporal:1..9 or a comma-separated selector list")
    p.add_argument("--workers", type=int, default=0, help="processes for grid points")
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("stats", parents=[common], help="LMP summary statistics and histograms")
    p.add_argument("--compare-no-links", action="store_true")
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SchemaError, ScenarioError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
