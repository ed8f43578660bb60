"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible problem,
3 validation failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ConfigError, Policy, Protocol, UnstableQueueError, default_config, load_config
from .experiments import (
    SWEEP_AXES,
    VALIDATION_COLUMNS,
    ExperimentPlan,
    combos_for,
    run_sweep,
    run_validation,
    solve_row,
    write_csv,
    write_manifest,
    CSV_COLUMNS,
)
from .plotting import plot_sweep

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_VALIDATION = 0, 1, 2, 3

DEFAULT_SWEEPS = {
    "packet_len_bits": [40.0 * k for k in range(1, 11)],
    "lambda_max": [5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 60.0, 80.0],
    "n_devices": [2, 4, 6, 8, 10, 12, 14],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config in file units; defaults if omitted")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=0)


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", choices=("exact", "ccp", "both"), default="exact")
    p.add_argument("--grid-k", type=int, default=1000, help="lambda grid intervals (exact)")
    p.add_argument("--ccp-k", type=int, default=50, help="max CCP iterations")
    p.add_argument("--ccp-eps", type=float, default=1e-6, help="CCP step tolerance")
    p.add_argument("--protocol", choices=("tdma", "fdma", "noma", "all"), default="all")
    p.add_argument("--policy", choices=("mv", "st", "all"), default="all")
    p.add_argument("--benchmark", action="store_true",
                   help="also run the no-sleep benchmark for each protocol")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ehaoi", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve single instances")
    _common(p)
    _solver_flags(p)

    p = sub.add_parser("sweep", help="sweep L, lambda_max or N and plot")
    _common(p)
    _solver_flags(p)
    p.add_argument("--axis", choices=[a for a in SWEEP_AXES if a != "none"],
                   default="packet_len_bits")
    p.add_argument("--values", help="comma-separated sweep values (default per axis)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("validate", help="closed forms against the simulator")
    _common(p)
    p.add_argument("--policy", choices=("mv", "st", "all"), default="all")
    p.add_argument("--departures", type=int, default=1_000_000)
    p.add_argument("--tolerance", type=float, default=0.01)

    p = sub.add_parser("simulate", help="simulate one queue")
    _common(p)
    p.add_argument("--policy", choices=("mv", "st"), default="mv")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--tau-b", type=float, required=True, help="service time (s)")
    p.add_argument("--tau-s", type=float, default=0.0, help="vacation length (s), MV")
    p.add_argument("--m", type=int, default=1, help="start-up threshold, ST")
    p.add_argument("--departures", type=int, default=1_000_000)
    p.add_argument("--trace", type=int, metavar="N",
                   help="write an event log of the first N packets instead")

    p = sub.add_parser("plot", help="re-render figures from a sweep CSV")
    p.add_argument("csv", type=Path)
    p.add_argument("--axis", choices=[a for a in SWEEP_AXES if a != "none"], required=True)
    p.add_argument("--out", type=Path, default=Path("out"))
    return ap


def _config(args):
    return load_config(args.config) if args.config else default_config()


def _combos(args):
    combos = combos_for(args.protocol, args.policy, False)
    if args.benchmark:
        combos += combos_for(args.protocol, None, True)
    return combos


def _print_rows(rows, columns) -> None:
    for r in rows:
        print(", ".join(f"{c}={r.get(c)}" for c in columns))


def cmd_solve(args) -> int:
    cfg = _config(args)
    plan = ExperimentPlan(cfg, combos=_combos(args), solver=args.solver, seeds=(args.seed,),
                          output_dir=args.out, grid_k=args.grid_k, ccp_k=args.ccp_k,
                          ccp_eps=args.ccp_eps)
    rows = [solve_row(c, cfg, m, plan.grid_k, plan.ccp_k, plan.ccp_eps)[0]
            for c in plan.combos for m in plan.methods]
    _print_rows(rows, ("protocol", "policy", "solver", "lambda_opt", "tau_b_opt",
                       "tau_s_opt_or_M", "peak_aoi_s", "avg_power_w", "status"))
    path = plan.output_dir / "solve.csv"
    old = path.read_text(encoding="utf-8").splitlines()[1:] if path.exists() else []
    write_csv(path, rows)
    if old:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write("\n".join(old) + "\n")
    write_manifest(plan.output_dir / "solve_manifest.json", cfg, command="solve",
                   seeds=list(plan.seeds), solver=args.solver)
    return EXIT_INFEASIBLE if any(r["status"] != "ok" for r in rows) else EXIT_OK


def _parse_values(args) -> list[float]:
    if not args.values:
        return list(DEFAULT_SWEEPS[args.axis])
    try:
        vals = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values: {exc}") from exc
    if args.axis == "n_devices":
        if any(v != int(v) for v in vals):
            raise ConfigError("n_devices values must be integers")
        return [int(v) for v in vals]
    return vals


def cmd_sweep(args) -> int:
    cfg = _config(args)
    combos = _combos(args)
    plan = ExperimentPlan(cfg, args.axis, _parse_values(args), combos, args.solver,
                          (args.seed,), args.out, args.grid_k, args.ccp_k, args.ccp_eps,
                          args.workers)
    rows = run_sweep(plan)
    csv_path = plan.output_dir / f"sweep_{args.axis}.csv"
    write_csv(csv_path, rows)
    figures = [] if args.no_plots else plot_sweep(csv_path, args.axis, plan.output_dir)
    write_manifest(plan.output_dir / f"sweep_{args.axis}_manifest.json", cfg, command="sweep",
                   sweep_axis=args.axis, sweep_values=list(plan.sweep_values),
                   seeds=list(plan.seeds), solver=args.solver,
                   figures=[str(f) for f in figures])
    bad = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} rows ({bad} infeasible) -> {csv_path}")
    for f in figures:
        print(f"figure -> {f}")
    return EXIT_INFEASIBLE if bad == len(rows) else EXIT_OK


def cmd_validate(args) -> int:
    cfg = _config(args)
    policies = list(Policy) if args.policy == "all" else [Policy(args.policy)]
    res = run_validation(policies, args.departures, args.seed, args.tolerance)
    for r in res.rows:
        flag = "PASS" if r["pass"] else "FAIL"
        print(f"{flag} {r['policy']} lambda={r['lambda']} tau_b={r['tau_b']} "
              f"param={r['param']} {r['metric']}: closed={r['closed_form']:.6g} "
              f"des={r['des']:.6g}+-{r['ci_half_width']:.2g} rel={r['rel_err']:.2e}")
    write_csv(args.out / "validation.csv", res.rows, VALIDATION_COLUMNS)
    write_manifest(args.out / "validation_manifest.json", cfg, command="validate",
                   seeds=[args.seed], departures=args.departures, tolerance=args.tolerance)
    return EXIT_OK if res.passed else EXIT_VALIDATION


def cmd_simulate(args) -> int:
    from .queueing import QueueParams
    from .sim import SimSpec, event_trace, simulate, write_event_trace

    pol = Policy(args.policy)
    qp = QueueParams(args.lam, args.tau_b, vacation_s=args.tau_s, threshold=args.m)
    if args.trace:
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / "events.csv"
        write_event_trace(path, event_trace(qp, pol, args.trace, args.seed))
        print(f"event trace -> {path}")
        return EXIT_OK
    st = simulate(SimSpec(qp, pol, args.departures, seed=args.seed))
    out = {
        name: {"mean": est.mean, "ci_half_width": est.half_width}
        for name, est in (("mean_delay_s", st.mean_delay_s), ("peak_aoi_s", st.mean_peak_aoi_s),
                          ("per_packet_aoi_s", st.mean_per_packet_aoi_s),
                          ("time_avg_aoi_s", st.time_avg_aoi_s),
                          ("mean_queue_len", st.mean_queue_len), ("rho", st.rho_observed))
    }
    out["departures"] = st.departures
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_plot(args) -> int:
    for f in plot_sweep(args.csv, args.axis, args.out):
        print(f"figure -> {f}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "validate": cmd_validate,
            "simulate": cmd_simulate, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with np.errstate(over="ignore"):
            return COMMANDS[args.command](args)
    except (ConfigError, UnstableQueueError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser", "CSV_COLUMNS"]
