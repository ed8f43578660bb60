"""Peak-AoI minimization: problem assembly, exact linear search over the update
rate, and the convex-concave procedure on the DC split of the objective.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import phy
from .core import (
    STRICT_MARGIN,
    DecisionVector,
    Policy,
    Protocol,
    SystemConfig,
)
from .queueing import peak_aoi_value

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

CONSTRAINT_NAMES = ("energy", "slot_bounds", "rate_bounds", "stability", "ee")


class ProblemInfeasible(RuntimeError):
    """No decision vector satisfies the constraints; ``binding`` names the culprit."""

    def __init__(self, msg: str, binding: str | None = None):
        super().__init__(msg)
        self.binding = binding


@dataclass(frozen=True)
class Constraint:
    name: str
    slack: Callable[[DecisionVector], float]


@dataclass
class ProblemSpec:
    protocol: Protocol
    policy: Policy
    cfg: SystemConfig
    gain: float
    device_index: int
    benchmark: bool = False
    tau_b_floor: float = field(init=False)
    constraints: list[Constraint] = field(init=False)

    def __post_init__(self):
        self.protocol = Protocol(self.protocol)
        self.policy = Policy(self.policy)
        self.tau_b_floor = _tau_b_floor(self)
        self.constraints = _make_constraints(self)

    # bounds --------------------------------------------------------------
    @property
    def param_bounds(self) -> tuple[float, float]:
        cfg = self.cfg
        if self.policy is Policy.MV:
            return (0.0, 0.0) if self.benchmark else (cfg.tau_s_min_s, cfg.tau_s_max_s)
        return (1.0, 1.0) if self.benchmark else (float(cfg.m_min), float(cfg.m_max))

    @property
    def lambda_bounds(self) -> tuple[float, float]:
        return self.cfg.lambda_min, self.cfg.lambda_max

    @property
    def tau_b_bounds(self) -> tuple[float, float]:
        return self.tau_b_floor, self.cfg.tau_b_max_s

    def tau_b_interval(self, lam: float) -> tuple[float, float]:
        """Feasible tau_b at a fixed rate (may be empty: lo > hi)."""
        return self.tau_b_floor, min(self.cfg.tau_b_max_s, (1.0 - 2 * STRICT_MARGIN) / lam)

    # evaluation ----------------------------------------------------------
    def objective(self, x: DecisionVector) -> float:
        return peak_aoi_value(self.policy, x.lambda_rate, x.tau_b_s, x.policy_param)

    def objective_array(self, v) -> float:
        lam, tau_b, q = v
        if lam * tau_b > 1.0 - STRICT_MARGIN:
            return math.inf
        return peak_aoi_value(self.policy, lam, tau_b, q)

    def slacks(self, x: DecisionVector) -> dict[str, float]:
        return {c.name: c.slack(x) for c in self.constraints}

    def is_feasible(self, x: DecisionVector, tol: float = 1e-9) -> bool:
        return all(s >= -tol for s in self.slacks(x).values())

    def charge_power(self, tau_b: float) -> float:
        """Smallest station power whose harvest covers the cycle's transmission."""
        return phy.min_charge_power(self.protocol, tau_b, self.cfg, self.gain)

    def complete(self, lam: float, tau_b: float, q: float) -> DecisionVector:
        return DecisionVector(lam, tau_b, q, self.charge_power(tau_b))


def _phi_r_cap(p: ProblemSpec) -> float:
    cfg = p.cfg
    cap = min(cfg.phi_r_max_w, cfg.battery_j / cfg.tau_p_s)
    return cap * cfg.n_devices if p.protocol is Protocol.NOMA else cap


def _make_constraints(p: ProblemSpec) -> list[Constraint]:
    cfg = p.cfg
    budget = phy.energy_budget(p.protocol, cfg)
    phi_cap = _phi_r_cap(p)

    def energy(x: DecisionVector) -> float:
        # harvested energy covers transmission, and stays within the battery
        if x.tau_b_s <= cfg.tau_p_s:
            return -math.inf
        harvested = cfg.tau_p_s * x.phi_r_w
        need = phy.transmit_energy(p.protocol, x.tau_b_s, cfg, p.gain)
        return min(harvested - need, cfg.tau_p_s * phi_cap - harvested) / budget

    def slot_bounds(x: DecisionVector) -> float:
        lo, hi = p.param_bounds
        return min(x.tau_b_s - cfg.tau_p_s, cfg.tau_b_max_s - x.tau_b_s,
                   x.policy_param - lo, hi - x.policy_param)

    def rate_bounds(x: DecisionVector) -> float:
        return min(x.lambda_rate - cfg.lambda_min, cfg.lambda_max - x.lambda_rate)

    def stability(x: DecisionVector) -> float:
        return 1.0 - STRICT_MARGIN - x.lambda_rate * x.tau_b_s

    def ee(x: DecisionVector) -> float:
        if x.tau_b_s <= cfg.tau_p_s:
            return -math.inf
        return phy.energy_efficiency(p.protocol, p.policy, x, cfg, p.gain) / cfg.ee_min - 1.0

    return [Constraint("energy", energy), Constraint("slot_bounds", slot_bounds),
            Constraint("rate_bounds", rate_bounds), Constraint("stability", stability),
            Constraint("ee", ee)]


def _tau_b_floor(p: ProblemSpec) -> float:
    """Smallest tau_b meeting the energy and EE constraints.

    Both depend on tau_b alone and are monotone in it (required energy falls,
    EE rises), so each has a single threshold found by bracketing.
    """
    cfg = p.cfg
    budget = phy.energy_budget(p.protocol, cfg)
    hi = cfg.tau_b_max_s

    def energy_gap(tb):
        return budget - phy.transmit_energy(p.protocol, tb, cfg, p.gain)

    def ee_gap(tb):
        return phy.energy_efficiency(p.protocol, p.policy, tb, cfg, p.gain) / cfg.ee_min - 1.0

    floor = cfg.tau_p_s
    for name, gap in (("energy", energy_gap), ("ee", ee_gap)):
        if gap(hi) < 0:
            raise ProblemInfeasible(
                f"{name} constraint unsatisfiable for {p.protocol.value}-{p.policy.value}"
                f" even at tau_b_max = {hi:g} s", binding=name)
        lo = cfg.tau_p_s * (1.0 + 1e-12) + 1e-15
        if gap(lo) >= 0:
            continue
        root = brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        while gap(root) < 0:  # land on the feasible side
            root = np.nextafter(root, hi)
        floor = max(floor, root)
    if floor * cfg.lambda_min >= 1.0 - STRICT_MARGIN:
        raise ProblemInfeasible("stability unsatisfiable at lambda_min", binding="stability")
    return float(floor)


def device_gain(cfg: SystemConfig, protocol: Protocol, device_index: int | None = None) -> float:
    idx = cfg.n_devices - 1 if device_index is None else device_index
    return phy.channel_gain(cfg.distances_m[idx], cfg, protocol)


def build_problem(protocol: Protocol, policy: Policy, cfg: SystemConfig,
                  device_index: int | None = None, benchmark: bool = False) -> ProblemSpec:
    """Assemble one of the six problems.

    Devices share protocol parameters, so by default the farthest device (the
    smallest gain) is the one whose constraints bind.
    """
    idx = cfg.n_devices - 1 if device_index is None else int(device_index)
    if not 0 <= idx < cfg.n_devices:
        raise IndexError(f"device_index {idx} out of range")
    gain = device_gain(cfg, protocol, idx)
    return ProblemSpec(protocol, policy, cfg, gain, idx, benchmark)


# --------------------------------------------------------------------------
# exact linear search
# --------------------------------------------------------------------------

@dataclass
class SolveReport:
    x_star: DecisionVector
    objective_s: float
    method: str
    iterations: int
    trace: list[tuple[tuple[float, ...], float]]
    feasible: bool
    wallclock_ms: float
    rounded_param: float | None = None
    rounded_objective_s: float | None = None
    notes: list[str] = field(default_factory=list)


def golden_section(f: Callable[[float], float], a: float, b: float,
                   tol: float = 1e-10) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on [a, b]; returns (x, f(x)).

    The interval endpoints are compared against the interior result so that a
    minimum on the boundary is returned exactly.
    """
    fa, fb = f(a), f(b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    lo, hi = a, b
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
    mid = 0.5 * (lo + hi)
    best = min(((fa, a), (fb, b), (fc, c), (fd, d), (f(mid), mid)))
    return best[1], best[0]


def solve_subproblem_fixed_lambda(p: ProblemSpec, lambda_fixed: float
                                  ) -> tuple[DecisionVector, float]:
    """Optimal (tau_b, policy parameter, charge power) at a fixed rate.

    The objective rises with the vacation length / threshold, so that sits on
    its lower bound; tau_b is found by golden-section search.
    """
    lam = float(lambda_fixed)
    lo_l, hi_l = p.lambda_bounds
    if not (lo_l * (1 - 1e-12) <= lam <= hi_l * (1 + 1e-12)):
        raise ValueError(f"lambda {lam} outside [{lo_l}, {hi_l}]")
    lo, hi = p.tau_b_interval(lam)
    if lo > hi:
        raise ProblemInfeasible(f"no feasible tau_b at lambda={lam:g}", binding="stability")
    q = p.param_bounds[0]
    tau_b, obj = golden_section(lambda tb: peak_aoi_value(p.policy, lam, tb, q), lo, hi)
    return p.complete(lam, tau_b, q), obj


def _rounded(p: ProblemSpec, x: DecisionVector) -> tuple[float | None, float | None]:
    """Best feasible integer threshold next to the relaxed ST optimum."""
    if p.policy is not Policy.ST:
        return None, None
    lo, hi = p.param_bounds
    best = None
    for m in {math.floor(x.policy_param), math.ceil(x.policy_param)}:
        if lo - 1e-12 <= m <= hi + 1e-12:
            val = peak_aoi_value(p.policy, x.lambda_rate, x.tau_b_s, m)
            if best is None or val < best[1]:
                best = (float(m), val)
    return best if best else (None, None)


def lambda_grid(p: ProblemSpec, K: int) -> np.ndarray:
    """Rate grid lambda_min + k A, k = 0..K, capped at min(lambda_max, 1/tau_p)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    lo = p.cfg.lambda_min
    top = min(p.cfg.lambda_max, (1.0 - STRICT_MARGIN) / p.cfg.tau_p_s)
    if top <= lo:
        return np.array([lo])
    step = (top - lo) / K
    return lo + step * np.arange(K + 1)


def exact_linear_search(p: ProblemSpec, K: int = 1000) -> SolveReport:
    t0 = time.perf_counter()
    best: tuple[float, DecisionVector] | None = None
    trace = []
    for lam in lambda_grid(p, K):
        try:
            x, obj = solve_subproblem_fixed_lambda(p, lam)
        except ProblemInfeasible:
            trace.append(((float(lam),), math.inf))
            continue
        trace.append(((float(lam),), obj))
        if best is None or obj < best[0]:
            best = (obj, x)
    if best is None:
        raise ProblemInfeasible("no feasible point on the rate grid", binding="stability")
    obj, x = best
    m, m_obj = _rounded(p, x)
    return SolveReport(x, obj, "exact", len(trace), trace, p.is_feasible(x),
                       (time.perf_counter() - t0) * 1e3, m, m_obj)


# --------------------------------------------------------------------------
# DC split and CCP
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DCSplit:
    """objective = f1 + f2 over v = (lambda, tau_b, policy parameter)."""

    f1: Callable[[np.ndarray], float]
    f2: Callable[[np.ndarray], float]
    grad_f1: Callable[[np.ndarray], np.ndarray]
    grad_f2: Callable[[np.ndarray], np.ndarray]


def _mv_split() -> DCSplit:
    def f1(v):
        lam, tb, ts = v
        return 0.5 * ts + 0.5 * tb + 1.0 / lam

    def f2(v):
        lam, tb, _ = v
        return tb / (2.0 * (1.0 - lam * tb))

    def g1(v):
        lam = v[0]
        return np.array([-1.0 / lam ** 2, 0.5, 0.5])

    def g2(v):
        lam, tb, _ = v
        s = 2.0 * (1.0 - lam * tb) ** 2
        return np.array([tb * tb / s, 1.0 / s, 0.0])

    return DCSplit(f1, f2, g1, g2)


def _st_split() -> DCSplit:
    def f1(v):
        lam, tb, _ = v
        return tb + 0.5 / lam

    def f2(v):
        lam, tb, m = v
        return lam * tb * tb / (2.0 * (1.0 - lam * tb)) + m / (2.0 * lam)

    def g1(v):
        lam = v[0]
        return np.array([-0.5 / lam ** 2, 1.0, 0.0])

    def g2(v):
        lam, tb, m = v
        u = 1.0 - lam * tb
        return np.array([
            tb * tb / (2.0 * u * u) - m / (2.0 * lam * lam),
            lam * tb * (2.0 - lam * tb) / (2.0 * u * u),
            0.5 / lam,
        ])

    return DCSplit(f1, f2, g1, g2)


def dc_decompose(p: ProblemSpec | Policy) -> DCSplit:
    policy = p.policy if isinstance(p, ProblemSpec) else Policy(p)
    return _mv_split() if policy is Policy.MV else _st_split()


def _project_box_halfspace(y, lo, hi, a, b):
    """Euclidean projection onto {lo <= v <= hi, a.v <= b}.

    The multiplier of the half-space is found by bisection on a.clip(y - mu a).
    """
    x = np.clip(y, lo, hi)
    if a @ x <= b:
        return x
    mu_hi = 1.0
    while a @ np.clip(y - mu_hi * a, lo, hi) > b:
        mu_hi *= 2.0
        if mu_hi > 1e30:
            break
    mu_lo = 0.0
    for _ in range(200):
        mu = 0.5 * (mu_lo + mu_hi)
        if a @ np.clip(y - mu * a, lo, hi) > b:
            mu_lo = mu
        else:
            mu_hi = mu
    return np.clip(y - mu_hi * a, lo, hi)


def _solve_surrogate(f, grad, u0, a, b, tol=1e-9, max_iter=20000):
    """Projected gradient with Armijo backtracking on the unit box.

    Stops once the projected-gradient step is shorter than ``tol``.
    """
    lo, hi = np.zeros_like(u0), np.ones_like(u0)
    u = _project_box_halfspace(u0, lo, hi, a, b)
    fu = f(u)
    step = 1.0
    for it in range(max_iter):
        g = grad(u)
        while True:
            cand = _project_box_halfspace(u - step * g, lo, hi, a, b)
            d = cand - u
            fc = f(cand)
            if fc <= fu + 1e-4 * (g @ d) or np.linalg.norm(d) < tol:
                break
            step *= 0.5
        if np.linalg.norm(d) < tol:
            return cand, it + 1
        u, fu = cand, fc
        step = min(step * 2.0, 1e6)
    return u, max_iter


def find_feasible_point(p: ProblemSpec) -> DecisionVector:
    """lambda_min, midpoint of the feasible tau_b interval, lowest policy parameter.

    If the midpoint is rejected, tau_b is bisected toward the EE-feasible
    (upper) side a fixed number of times before giving up.
    """
    lam = p.cfg.lambda_min
    lo, hi = p.tau_b_interval(lam)
    if lo > hi:
        raise ProblemInfeasible("empty tau_b interval at lambda_min", binding="stability")
    q = p.param_bounds[0]
    tb = 0.5 * (lo + hi)
    for _ in range(60):
        x = p.complete(lam, tb, q)
        if p.is_feasible(x, tol=0.0):
            return x
        tb = 0.5 * (tb + hi)
    raise ProblemInfeasible("no feasible starting point found")


def ccp_solve(p: ProblemSpec, x0: DecisionVector | None = None, K: int = 50,
              eps: float = 1e-6) -> SolveReport:
    """Convex-concave procedure on objective = f1 + f2.

    Each round linearizes f2 and the bilinear stability constraint at the
    current iterate and solves the resulting convex problem.  The linearized f2
    is not an upper model, so the move toward the surrogate minimizer is taken
    with an exact line search on the true objective; this keeps the sequence
    monotone and lambda * tau_b < 1.
    """
    t0 = time.perf_counter()
    if x0 is None:
        x0 = find_feasible_point(p)
    if not p.is_feasible(x0):
        raise ValueError("x0 is infeasible")
    split = dc_decompose(p)
    lo = np.array([p.lambda_bounds[0], p.tau_b_bounds[0], p.param_bounds[0]])
    hi = np.array([p.lambda_bounds[1], p.tau_b_bounds[1], p.param_bounds[1]])
    width = np.where(hi > lo, hi - lo, 1.0)
    hi_u = np.where(hi > lo, 1.0, 0.0)

    def to_u(v):
        return (v - lo) / width

    def to_v(u):
        return lo + np.minimum(u, hi_u) * width

    v = x0.as_array()
    f_true = p.objective_array(v)
    trace = [(tuple(v.tolist()), f_true)]
    notes: list[str] = []
    iters = 0
    for k in range(K):
        iters = k + 1
        g2 = split.grad_f2(v)
        lam_k, tb_k = v[0], v[1]

        def surrogate(u):
            w = to_v(u)
            return split.f1(w) + g2 @ w

        def surrogate_grad(u):
            w = to_v(u)
            return (split.grad_f1(w) + g2) * width * (hi > lo)

        # lambda tb_k + tb lambda_k <= 1 + lambda_k tb_k, in unit coordinates
        a_v = np.array([tb_k, lam_k, 0.0])
        b_v = 1.0 - STRICT_MARGIN + lam_k * tb_k
        a_u = a_v * width * (hi > lo)
        b_u = b_v - a_v @ lo
        u_new, _ = _solve_surrogate(surrogate, surrogate_grad, to_u(v), a_u, b_u)
        v_hat = to_v(u_new)

        # exact line search on the true objective along the surrogate step
        t, f_t = golden_section(lambda s: p.objective_array(v + s * (v_hat - v)), 0.0, 1.0, 1e-12)
        v_next = v + t * (v_hat - v) if f_t <= f_true + 1e-12 else v
        if t < 1.0 - 1e-9:
            notes.append(f"iteration {k}: surrogate step damped to t={t:.3g}")
        f_next = p.objective_array(v_next)
        if f_next > f_true + 1e-9:
            log.warning("CCP objective increased from %g to %g at %s -> %s",
                        f_true, f_next, v, v_next)
        trace.append((tuple(v_next.tolist()), f_next))
        moved = np.max(np.abs(to_u(v_next) - to_u(v)))
        v, f_true = v_next, f_next
        if moved < eps:
            break
    x = p.complete(*v)
    m, m_obj = _rounded(p, x)
    return SolveReport(x, f_true, "ccp", iters, trace, p.is_feasible(x),
                       (time.perf_counter() - t0) * 1e3, m, m_obj, notes)


def solve(p: ProblemSpec, method: str = "exact", grid_k: int = 1000, ccp_k: int = 50,
          ccp_eps: float = 1e-6) -> SolveReport:
    if method == "exact":
        return exact_linear_search(p, grid_k)
    if method == "ccp":
        return ccp_solve(p, None, ccp_k, ccp_eps)
    raise ValueError(f"unknown method {method!r}")
