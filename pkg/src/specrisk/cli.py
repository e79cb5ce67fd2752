"""Command-line entry point.

Subcommands: solve-inner, solve-outer, reinsurance, oracle, gap-study.
Reports are JSON (default) or CSV; all randomness flows from the single
--seed flag so identical invocations produce identical reports up to the
wall-clock field.  Exit codes: 0 success, 2 validation error, 3 cap refusal.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .mdp_engine import solve_finite, solve_infinite
from .oracle import OracleCapError, oracle_exact_optimum, oracle_outer_gap
from .outer_solver import (GPoly, anneal, conjugate_integral, cost_cap,
                           grid_size_from_epsilon)
from .reinsurance import solve_cost_of_capital
from .risk_core import DomainError
from .scenario import ScenarioError, load_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_CAP = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specrisk",
                                description="Spectral risk minimization for MDPs")
    p.add_argument("--version", action="version", version=f"specrisk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="scenario file (TOML/JSON)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
        sp.add_argument("--out", default=None,
                        help="output path (default: stdout; env SPECRISK_OUT_DIR "
                             "prefixes relative paths)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--epsilon", type=float, default=None)
        sp.add_argument("--m", type=int, default=None)
        mode = sp.add_mutually_exclusive_group()
        mode.add_argument("--exact", dest="mode", action="store_const",
                          const="exact", default="exact")
        mode.add_argument("--grid", dest="mode", action="store_const", const="grid")
        sp.add_argument("--threads", type=int, default=1)

    for name in ("solve-inner", "solve-outer", "reinsurance", "oracle", "gap-study"):
        sp = sub.add_parser(name)
        common(sp)
        if name == "solve-inner":
            sp.add_argument("--g", choices=("identity", "linear", "zero"),
                            default="linear",
                            help="named convex function on [0, c_hat]")
            sp.add_argument("--g-values", default=None,
                            help="comma-separated knot values on the "
                                 "equidistant grid")
        if name == "gap-study":
            sp.add_argument("--m-list", default="2,3",
                            help="comma-separated knot counts to scan")
            sp.add_argument("--pitch", type=float, default=None)
    return p


def _named_g(name: str, c_hat: float, phi1: float, m: int) -> GPoly:
    knots = np.linspace(0.0, max(c_hat, 1e-12), m)
    if name == "identity":
        y = np.minimum(knots, phi1 * knots) if phi1 < 1 else knots.copy()
    elif name == "zero":
        y = np.zeros_like(knots)
    else:
        y = phi1 * knots
    return GPoly(max(c_hat, 1e-12), knots, y, phi1)


def _write(report: dict, args, rows_key: str | None = None) -> None:
    if args.format == "csv" and rows_key:
        buf = io.StringIO()
        rows = report.get(rows_key, [])
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(report.get(rows_key + "_columns",
                                   ["stage", "state", "s", "t", "action",
                                    "parameter"]))
        writer.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(report, sort_keys=True, indent=2, default=_jsonable) + "\n"
    if args.out:
        out = args.out
        if not os.path.isabs(out):
            out = os.path.join(os.environ.get("SPECRISK_OUT_DIR", "."), out)
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def _apply_overrides(scenario, args):
    outer = scenario.outer
    if args.seed is not None:
        outer = replace(outer, seed=args.seed)
    if args.epsilon is not None:
        outer = replace(outer, epsilon=args.epsilon)
    if args.m is not None:
        outer = replace(outer, m=args.m)
    scenario.outer = outer
    return scenario


def _base_report(scenario, args, started: float) -> dict:
    return {
        "version": __version__,
        "seed": scenario.outer.seed,
        "scenario_kind": scenario.kind,
        "wall_clock_seconds": round(time.time() - started, 6),
    }


def _cmd_solve_inner(scenario, args) -> dict:
    model = scenario.model()
    phi1 = scenario.spectrum.phi_one
    c_hat = cost_cap(model)
    m = scenario.outer.m or grid_size_from_epsilon(
        phi1, max(c_hat, 1e-12), scenario.outer.epsilon)
    if args.g_values:
        y = np.asarray([float(v) for v in args.g_values.split(",")])
        g = GPoly.from_gamma(y, max(c_hat, 1e-12), phi1)
    else:
        g = _named_g(args.g, c_hat, phi1, m)
    if model.horizon is None:
        rep = solve_infinite(model, g, scenario.initial_state)
    else:
        rep = solve_finite(model, g, scenario.initial_state, mode=args.mode)
    return {
        "inner_value": rep.value_at_origin,
        "conjugate_integral": conjugate_integral(g, scenario.spectrum),
        "objective_K": rep.value_at_origin + conjugate_integral(g, scenario.spectrum),
        "iterations": rep.iterations,
        "residual": rep.residual,
        "discretization": rep.discretization_note,
        "fell_back_to_grid": rep.fell_back_to_grid,
    }


def _cmd_solve_outer(scenario, args) -> dict:
    model = scenario.model()
    res = anneal(model, scenario.spectrum, scenario.initial_state,
                 scenario.outer, mode=args.mode, threads=args.threads)
    report = {
        "best_value": res.best_value,
        "best_y": res.best_y.tolist(),
        "inner_value": res.inner_report.value_at_origin,
        "conjugate_integral": res.conjugate_integral,
        "error_bound": res.error_bound,
        "m": res.m,
        "c_hat": res.c_hat,
        "evaluations": res.evaluations,
        "search_stats": res.search_stats,
    }
    if scenario.oracle_enabled:
        try:
            oracle_val, _ = oracle_exact_optimum(
                model, scenario.spectrum, scenario.initial_state,
                cap=scenario.oracle_policy_cap)
            report["oracle_value"] = oracle_val
            report["gap"] = res.best_value - oracle_val
        except OracleCapError as exc:
            report["oracle_refused"] = str(exc)
    return report


def _cmd_reinsurance(scenario, args) -> dict:
    if scenario.kind != "reinsurance":
        raise ScenarioError("the reinsurance subcommand needs a reinsurance scenario")
    rep = solve_cost_of_capital(scenario.reinsurance, scenario.spectrum,
                                scenario.outer, mode=args.mode,
                                threads=args.threads)
    return {
        "cost_of_capital": rep.value,
        "error_bound": rep.error_bound,
        "best_value_unscaled": rep.outer.best_value,
        "m": rep.outer.m,
        "evaluations": rep.outer.evaluations,
        "policy_rows": rep.policy_rows,
        "policy_rows_columns": ["stage", "surplus", "s", "t", "treaty_kind",
                                "parameter"],
    }


def _cmd_oracle(scenario, args) -> dict:
    model = scenario.model()
    value, policy = oracle_exact_optimum(
        model, scenario.spectrum, scenario.initial_state,
        cap=scenario.oracle_policy_cap)
    def name(a_idx: int) -> str:
        act = model.actions[a_idx]
        return act.label() if hasattr(act, "label") else str(act)

    rows = [[n, str(x), s, name(a)]
            for (n, x, s), a in sorted(policy.items(),
                                       key=lambda kv: (kv[0][0], str(kv[0][1]),
                                                       kv[0][2]))]
    return {
        "oracle_value": value,
        "policy_rows": rows,
        "policy_rows_columns": ["stage", "state", "s", "action"],
    }


def _cmd_gap_study(scenario, args) -> dict:
    model = scenario.model()
    m_list = [int(v) for v in args.m_list.split(",")]
    rows = oracle_outer_gap(model, scenario.spectrum, scenario.initial_state,
                            m_list, pitch=args.pitch,
                            policy_cap=scenario.oracle_policy_cap)
    table = [[r["m"], r["best_value"], r["oracle_value"], r["gap"], r["bound"],
              r["pitch"]] for r in rows]
    return {
        "gap_rows": table,
        "gap_rows_columns": ["m", "best_value", "oracle_value", "gap", "bound",
                             "pitch"],
    }


_COMMANDS = {
    "solve-inner": (_cmd_solve_inner, None),
    "solve-outer": (_cmd_solve_outer, None),
    "reinsurance": (_cmd_reinsurance, "policy_rows"),
    "oracle": (_cmd_oracle, "policy_rows"),
    "gap-study": (_cmd_gap_study, "gap_rows"),
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    started = time.time()
    try:
        scenario = _apply_overrides(load_scenario(args.scenario), args)
        handler, rows_key = _COMMANDS[args.command]
        report = handler(scenario, args)
    except (ScenarioError, DomainError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except OracleCapError as exc:
        sys.stderr.write(f"refused: {exc}\n")
        return EXIT_CAP
    report.update(_base_report(scenario, args, started))
    _write(report, args, rows_key)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
