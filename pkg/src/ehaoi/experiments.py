"""Batch harness behind the CLI: single solves, parameter sweeps, and the
closed-form versus simulation validation grid.
"""
from __future__ import annotations

import csv
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__, phy
from .core import ALL_COMBOS, Assumptions, Policy, Protocol, SystemConfig
from .opt import ProblemInfeasible, SolveReport, build_problem, solve
from .queueing import QueueParams, protocol_peak_aoi
from .sim import SimSpec, simulate

SOLVE_COLUMNS = (
    "protocol", "policy", "solver", "L", "lambda_max", "N", "lambda_opt", "tau_b_opt",
    "tau_s_opt_or_M", "phi_r_opt", "peak_aoi_s", "per_packet_aoi_s", "avg_power_w",
    "iterations", "wallclock_ms",
)
EXTRA_COLUMNS = ("benchmark", "status", "config_hash")
CSV_COLUMNS = SOLVE_COLUMNS + EXTRA_COLUMNS

SWEEP_AXES = ("packet_len_bits", "lambda_max", "n_devices", "none")


@dataclass(frozen=True)
class Combo:
    protocol: Protocol
    policy: Policy
    benchmark: bool = False

    @property
    def label(self) -> str:
        if self.benchmark:
            return f"{self.protocol.value.upper()} (no sleep)"
        return f"{self.protocol.value.upper()}-{self.policy.value.upper()}"


DEFAULT_COMBOS = tuple(Combo(pr, po) for pr, po in ALL_COMBOS) + tuple(
    Combo(pr, Policy.MV, True) for pr in Protocol
)


@dataclass
class ExperimentPlan:
    base: SystemConfig
    sweep_axis: str = "none"
    sweep_values: Sequence[float] = ()
    combos: Sequence[Combo] = DEFAULT_COMBOS
    solver: str = "exact"
    seeds: Sequence[int] = (0,)
    output_dir: Path = Path("out")
    grid_k: int = 1000
    ccp_k: int = 50
    ccp_eps: float = 1e-6
    workers: int = 1

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.sweep_axis!r}")
        if self.sweep_axis != "none" and not self.sweep_values:
            raise ValueError("sweep_values must be nonempty")
        if self.solver not in ("exact", "ccp", "both"):
            raise ValueError(f"unknown solver {self.solver!r}")
        self.output_dir = Path(self.output_dir)
        for v in self.sweep_values:
            self.config_at(v)  # raises on out-of-range values

    def config_at(self, value: float | None) -> SystemConfig:
        cfg = self.base
        if self.sweep_axis == "packet_len_bits":
            return cfg.updated(packet_len_bits=float(value))
        if self.sweep_axis == "lambda_max":
            return cfg.updated(lambda_max=float(value))
        if self.sweep_axis == "n_devices":
            return cfg.with_devices(int(value))
        return cfg

    @property
    def methods(self) -> tuple[str, ...]:
        return ("exact", "ccp") if self.solver == "both" else (self.solver,)


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else repr(float(v))
    return str(v)


def solve_row(combo: Combo, cfg: SystemConfig, method: str, grid_k: int = 1000,
              ccp_k: int = 50, ccp_eps: float = 1e-6) -> tuple[dict[str, Any], SolveReport | None]:
    """Solve one instance and format it as a CSV row (infeasible rows carry NaN)."""
    row: dict[str, Any] = {
        "protocol": combo.protocol.value,
        "policy": "none" if combo.benchmark else combo.policy.value,
        "solver": method,
        "L": cfg.packet_len_bits,
        "lambda_max": cfg.lambda_max,
        "N": cfg.n_devices,
        "benchmark": combo.benchmark,
        "config_hash": cfg.digest(),
    }
    try:
        problem = build_problem(combo.protocol, combo.policy, cfg, benchmark=combo.benchmark)
        rep = solve(problem, method, grid_k, ccp_k, ccp_eps)
    except ProblemInfeasible as exc:
        for col in SOLVE_COLUMNS[6:]:
            row[col] = float("nan")
        row["iterations"] = 0
        row["status"] = f"infeasible:{exc.binding or 'unknown'}"
        return row, None
    x = rep.x_star
    aoi = protocol_peak_aoi(combo.protocol, combo.policy, x)
    phi_t = phy.device_tx_power(combo.protocol, x.tau_b_s, cfg, problem.gain)
    power = phy.avg_power_consumption(combo.policy, x, cfg, phi_t, benchmark=combo.benchmark)
    row.update(
        lambda_opt=x.lambda_rate,
        tau_b_opt=x.tau_b_s,
        tau_s_opt_or_M=x.policy_param,
        phi_r_opt=x.phi_r_w,
        peak_aoi_s=rep.objective_s,
        per_packet_aoi_s=aoi.per_packet_aoi_s,
        avg_power_w=power,
        iterations=rep.iterations,
        wallclock_ms=rep.wallclock_ms,
        status="ok" if rep.feasible else "infeasible:slack",
    )
    return row, rep


def write_csv(path: Path, rows: Iterable[dict[str, Any]], columns=CSV_COLUMNS) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c, "")) for c in columns])


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _sweep_point(args) -> list[dict[str, Any]]:
    plan, combo_i, value = args
    combo = plan.combos[combo_i]
    cfg = plan.config_at(value)
    rows = []
    for method in plan.methods:
        row, _ = solve_row(combo, cfg, method, plan.grid_k, plan.ccp_k, plan.ccp_eps)
        row["sweep_value"] = value
        rows.append(row)
    return rows


def run_sweep(plan: ExperimentPlan) -> list[dict[str, Any]]:
    """One row per (combo, sweep value, solver), sorted by combo then value."""
    values = list(plan.sweep_values) if plan.sweep_axis != "none" else [None]
    jobs = [(plan, ci, v) for ci in range(len(plan.combos)) for v in values]
    if plan.workers > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    # pool.map keeps submission order, which is already combo-major
    return [row for chunk in results for row in chunk]


def write_manifest(path: Path, cfg: SystemConfig, **extra: Any) -> None:
    manifest = {
        "package_version": __version__,
        "python": platform.python_version(),
        "argv": sys.argv,
        "config_hash": cfg.digest(),
        "resolved_config_file_units": cfg.to_file_units(),
        "assumed_values": Assumptions().values,
        "assumption_notes": list(Assumptions().notes),
        **extra,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")


# --------------------------------------------------------------------------
# validation grid
# --------------------------------------------------------------------------

MV_GRID = tuple((lam, tb, ts) for lam, tb in ((0.3, 1.0), (0.5, 1.0), (1.6, 0.5))
                for ts in (0.0, 0.4, 1.0, 2.0))
ST_GRID = tuple((lam, 1.0, m) for lam in (0.3, 0.5, 0.8) for m in (1, 2, 3, 5))

VALIDATION_COLUMNS = ("policy", "lambda", "tau_b", "param", "metric", "closed_form",
                      "des", "ci_half_width", "rel_err", "tolerance", "pass", "seed")


@dataclass
class ValidationResult:
    rows: list[dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)


def closed_forms(policy: Policy, lam: float, tau_b: float, param: float) -> dict[str, float]:
    from .queueing import mv_mean_queue, peak_aoi_mv, peak_aoi_st, st_mean_queue

    if Policy(policy) is Policy.MV:
        p = QueueParams(lam, tau_b, vacation_s=param)
        br, q = peak_aoi_mv(p), mv_mean_queue(p)
    else:
        p = QueueParams(lam, tau_b, threshold=param)
        br, q = peak_aoi_st(p), st_mean_queue(p)
    return {"mean_delay": br.mean_delay_s, "peak_aoi": br.total_peak_aoi_s,
            "mean_queue": q, "per_packet_aoi": br.per_packet_aoi_s}


def validate_point(policy: Policy, lam: float, tau_b: float, param: float, departures: int,
                   seed: int, tolerance: float = 0.01) -> list[dict[str, Any]]:
    policy = Policy(policy)
    if lam * tau_b >= 1.0:
        raise ValueError(f"unstable grid point lambda={lam}, tau_b={tau_b}")
    qp = (QueueParams(lam, tau_b, vacation_s=param) if policy is Policy.MV
          else QueueParams(lam, tau_b, threshold=param))
    st = simulate(SimSpec(qp, policy, departures, seed=seed))
    est = {"mean_delay": st.mean_delay_s, "peak_aoi": st.mean_peak_aoi_s,
           "mean_queue": st.mean_queue_len, "per_packet_aoi": st.mean_per_packet_aoi_s}
    rows = []
    for metric, closed in closed_forms(policy, lam, tau_b, param).items():
        e = est[metric]
        rel = abs(e.mean - closed) / closed
        rows.append({"policy": policy.value, "lambda": lam, "tau_b": tau_b, "param": param,
                     "metric": metric, "closed_form": closed, "des": e.mean,
                     "ci_half_width": e.half_width, "rel_err": rel, "tolerance": tolerance,
                     "pass": rel <= tolerance, "seed": seed})
    return rows


def run_validation(policies: Sequence[Policy], departures: int = 1_000_000, seed: int = 0,
                   tolerance: float = 0.01, grids: dict[Policy, Sequence] | None = None
                   ) -> ValidationResult:
    grids = grids or {Policy.MV: MV_GRID, Policy.ST: ST_GRID}
    res = ValidationResult()
    for pol in policies:
        for lam, tau_b, param in grids[Policy(pol)]:
            res.rows.extend(validate_point(pol, lam, tau_b, param, departures, seed, tolerance))
    return res


def combos_for(protocol: str | None, policy: str | None, benchmark: bool) -> tuple[Combo, ...]:
    protos = list(Protocol) if protocol in (None, "all") else [Protocol(protocol)]
    pols = list(Policy) if policy in (None, "all") else [Policy(policy)]
    if benchmark:
        return tuple(Combo(pr, Policy.MV, True) for pr in protos)
    return tuple(Combo(pr, po) for pr in protos for po in pols)


def with_plan(plan: ExperimentPlan, **changes) -> ExperimentPlan:
    return replace(plan, **changes)
