"""Discrete-event simulation of a FIFO single-server queue with Poisson
arrivals, deterministic service and MV or ST sleep scheduling.

Because service is deterministic and FIFO, the event order is fully captured
by the service-start recursion; the loop below advances one packet at a time
instead of keeping an event heap.  ``event_trace`` expands the same recursion
into explicit events for export.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .core import STRICT_MARGIN, Policy, SystemConfig, UnstableQueueError
from .phy import idle_power
from .queueing import QueueParams


@dataclass(frozen=True)
class SimSpec:
    params: QueueParams
    policy: Policy
    target_departures: int = 1_000_000
    warmup_departures: int | None = None
    seed: int = 0
    batch_count: int = 20
    replication: int = 0

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.warmup_departures is None:
            object.__setattr__(self, "warmup_departures", self.target_departures // 10)
        if not self.target_departures > self.warmup_departures >= 0:
            raise ValueError("need target_departures > warmup_departures >= 0")
        if self.batch_count < 10:
            raise ValueError("batch_count must be at least 10")
        if self.params.lambda_rate <= 0 or self.params.service_s <= 0:
            raise ValueError("rate and service time must be positive")
        if self.policy is Policy.ST and self.params.threshold < 1:
            raise ValueError("threshold must be at least 1")
        if self.policy is Policy.MV and self.params.vacation_s < 0:
            raise ValueError("vacation length must be nonnegative")


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float

    def covers(self, value: float, extra: float = 0.0) -> bool:
        return abs(self.mean - value) <= self.half_width + extra


@dataclass
class QueueStats:
    mean_delay_s: Estimate
    mean_peak_aoi_s: Estimate
    mean_per_packet_aoi_s: Estimate
    time_avg_aoi_s: Estimate
    mean_queue_len: Estimate
    rho_observed: Estimate
    departures: int
    busy_fraction: float
    idle_fraction: float
    batches: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


@dataclass
class _Run:
    arrivals: np.ndarray
    starts: np.ndarray
    n: int
    vacations: int  # completed vacations inside the measured window


def make_rng(seed: int, replication: int = 0) -> np.random.Generator:
    """Philox stream keyed by (seed, replication)."""
    ss = np.random.SeedSequence([int(seed) & (2 ** 64 - 1), int(replication)])
    return np.random.Generator(np.random.Philox(ss))


def _arrivals(rng: np.random.Generator, lam: float, count: int) -> np.ndarray:
    return np.cumsum(rng.exponential(1.0 / lam, size=count))


def _service_starts(a: np.ndarray, n: int, tau: float, policy: Policy, vac: float,
                    m: int, count_from: int = 0) -> tuple[np.ndarray, int]:
    """Service start times of the first ``n`` packets.

    MV: on an empty queue the server takes back-to-back vacations of length
    ``vac`` and resumes at the first vacation end with work waiting.
    ST: on an empty queue the server sleeps until the m-th new arrival.
    Returns the starts and the number of vacations begun at or after packet
    ``count_from``.
    """
    arr = a.tolist()
    starts = [0.0] * n
    free = 0.0  # time the server finished its last service
    vacations = 0
    is_mv = policy is Policy.MV
    i = 0
    while i < n:
        ai = arr[i]
        if ai <= free:
            starts[i] = free
            free += tau
            i += 1
            continue
        if is_mv:
            if vac > 0.0:
                k = math.ceil((ai - free) / vac)
                if free + k * vac < ai:  # rounding
                    k += 1
                s = free + k * vac
                if i >= count_from:
                    vacations += k
            else:
                s = ai
            starts[i] = s
            free = s + tau
            i += 1
        else:
            j = i + m - 1
            if j >= len(arr):
                raise RuntimeError("arrival stream exhausted")
            s = arr[j]
            # packets i..j are all waiting when service begins
            for q in range(i, min(j + 1, n)):
                starts[q] = s + (q - i) * tau
            free = s + (j + 1 - i) * tau
            i = j + 1
    return np.asarray(starts[:n]), vacations


def _run(spec: SimSpec) -> _Run:
    p = spec.params
    rng = make_rng(spec.seed, spec.replication)
    n = spec.target_departures
    m = int(round(p.threshold)) if spec.policy is Policy.ST else 1
    count = int(n * 1.05) + 10 * m + 1000
    a = _arrivals(rng, p.lambda_rate, count)
    starts, vac = _service_starts(a, n, p.service_s, spec.policy, p.vacation_s, m,
                                  count_from=max(spec.warmup_departures, 1))
    # queue length at each departure needs arrivals beyond the last departure
    while a[-1] <= starts[-1] + p.service_s:
        more = _arrivals(rng, p.lambda_rate, count // 4 + 1000) + a[-1]
        a = np.concatenate([a, more])
    return _Run(a, starts, n, vac)


def _batch_ci(values: np.ndarray, batches: int) -> tuple[Estimate, np.ndarray]:
    size = values.size // batches
    means = values[: size * batches].reshape(batches, size).mean(axis=1)
    return _ci(means), means


def _ci(means: np.ndarray) -> Estimate:
    b = means.size
    hw = stats.t.ppf(0.975, b - 1) * means.std(ddof=1) / math.sqrt(b)
    return Estimate(float(means.mean()), float(hw))


def _ratio_ci(num: np.ndarray, den: np.ndarray, batches: int) -> tuple[Estimate, np.ndarray]:
    size = num.size // batches
    r = (num[: size * batches].reshape(batches, size).sum(axis=1)
         / den[: size * batches].reshape(batches, size).sum(axis=1))
    return _ci(r), r


def simulate(spec: SimSpec) -> QueueStats:
    """Steady-state estimates with 95% batch-means confidence intervals."""
    p = spec.params
    if p.lambda_rate * p.service_s > 1.0 - STRICT_MARGIN:
        raise UnstableQueueError("steady-state simulation needs lambda * tau < 1")
    run = _run(spec)
    a, s, n = run.arrivals, run.starts, run.n
    tau = p.service_s
    d = s + tau
    w = spec.warmup_departures
    if w == 0:
        w = 1  # the first packet has no predecessor for peak AoI
    idx = np.arange(w, n)
    arr_i = a[idx]
    dep_i = d[idx]
    prev_gen = a[idx - 1]
    prev_dep = d[idx - 1]
    if np.any(np.diff(d) <= 0) or np.any(s < a[:n]):
        raise AssertionError("FIFO order violated")

    delay = dep_i - arr_i
    peak = dep_i - prev_gen
    interval = dep_i - prev_dep
    # area under the age sawtooth between consecutive departures
    area = 0.5 * ((dep_i - prev_gen) ** 2 - (prev_dep - prev_gen) ** 2)
    per_packet = area / interval
    left_behind = np.searchsorted(a, dep_i, side="right") - (idx + 1)
    busy = np.full(idx.size, tau)

    B = spec.batch_count
    est = {}
    batches = {}
    for name, vals in (("delay", delay), ("peak", peak), ("per_packet", per_packet),
                       ("queue", left_behind.astype(float))):
        est[name], batches[name] = _batch_ci(vals, B)
    est["time_avg"], batches["time_avg"] = _ratio_ci(area, interval, B)
    est["rho"], batches["rho"] = _ratio_ci(busy, interval, B)
    busy_fraction = float(busy.sum() / interval.sum())
    return QueueStats(
        mean_delay_s=est["delay"],
        mean_peak_aoi_s=est["peak"],
        mean_per_packet_aoi_s=est["per_packet"],
        time_avg_aoi_s=est["time_avg"],
        mean_queue_len=est["queue"],
        rho_observed=est["rho"],
        departures=int(idx.size),
        busy_fraction=busy_fraction,
        idle_fraction=1.0 - busy_fraction,
        batches=batches,
    )


def paired_difference(st: QueueStats, left: str, right: np.ndarray) -> Estimate:
    """CI of batch(left) - right, where ``right`` is a per-batch array."""
    return _ci(st.batches[left] - right)


def departure_histogram(spec: SimSpec, max_len: int = 200) -> np.ndarray:
    """Empirical distribution of the number left behind at departures."""
    run = _run(spec)
    w = max(spec.warmup_departures, 1)
    idx = np.arange(w, run.n)
    left = np.searchsorted(run.arrivals, run.starts[idx] + spec.params.service_s,
                           side="right") - (idx + 1)
    counts = np.bincount(np.minimum(left, max_len), minlength=max_len + 1)
    return counts / counts.sum()


def energy_trace(spec: SimSpec, cfg: SystemConfig, tx_power_w: float,
                 benchmark: bool = False) -> float:
    """Time-averaged device power over the measured window.

    Active time draws ``power_active_w`` plus ``tx_power_w`` while transmitting
    (the part of each service after the EH slot).  MV vacations are integrated
    one by one as a switching part then an idle part; other idle time uses the
    same split in proportion.
    """
    p = spec.params
    if p.lambda_rate * p.service_s > 1.0 - STRICT_MARGIN:
        raise UnstableQueueError("steady-state simulation needs lambda * tau < 1")
    run = _run(spec)
    w = max(spec.warmup_departures, 1)
    d = run.starts + p.service_s
    t0, t1 = d[w - 1], d[run.n - 1]
    n_serv = run.n - w
    busy = n_serv * p.service_s
    idle = (t1 - t0) - busy
    phi_s = cfg.power_active_w if benchmark else cfg.power_idle_w
    tx_time = n_serv * (p.service_s - cfg.tau_p_s)
    energy = busy * cfg.power_active_w + tx_time * tx_power_w
    if spec.policy is Policy.MV and p.vacation_s > 0:
        tau_sc = p.vacation_s / (cfg.switch_ratio + 1.0)
        tau_i = p.vacation_s - tau_sc
        energy += run.vacations * (tau_sc * cfg.power_switch_w + tau_i * phi_s)
    else:
        energy += idle * idle_power(cfg, benchmark)
    return float(energy / (t1 - t0))


EVENT_KINDS = ("arrival", "service_start", "departure", "vacation_start", "vacation_end", "wake")
_ORDER = {"departure": 0, "vacation_end": 1, "vacation_start": 2, "arrival": 3,
          "wake": 4, "service_start": 5}


def event_trace(params: QueueParams, policy: Policy, n_packets: int, seed: int = 0
                ) -> list[tuple[float, str, int]]:
    """Raw event log (time, kind, queue length after the event).

    Works for any load, stable or not; no steady-state estimate is made.
    """
    policy = Policy(policy)
    rng = make_rng(seed)
    m = int(round(params.threshold)) if policy is Policy.ST else 1
    a = _arrivals(rng, params.lambda_rate, n_packets + m)
    s, _ = _service_starts(a, n_packets, params.service_s, policy, params.vacation_s, m)
    d = s + params.service_s
    # arrivals past packet n_packets still count toward the queue (and the ST wake)
    logged = a[a <= d[-1]]
    a = a[:n_packets]
    events: list[tuple[float, str]] = [(t, "arrival") for t in logged.tolist()]
    events += [(t, "service_start") for t in s.tolist()]
    events += [(t, "departure") for t in d.tolist()]
    prev_free = 0.0
    for i in range(n_packets):
        if s[i] > prev_free + 1e-15 and (i == 0 or a[i] > prev_free):
            if policy is Policy.MV and params.vacation_s > 0:
                t = prev_free
                while t < s[i] - 1e-12:
                    events.append((t, "vacation_start"))
                    t += params.vacation_s
                    events.append((t, "vacation_end"))
            elif policy is Policy.ST:
                events.append((s[i], "wake"))
        prev_free = d[i]
    events.sort(key=lambda e: (e[0], _ORDER[e[1]]))
    out = []
    q = 0
    for t, kind in events:
        if kind == "arrival":
            q += 1
        elif kind == "departure":
            q -= 1
        out.append((float(t), kind, q))
    return out


def write_event_trace(path: str | Path, events) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_s", "kind", "queue_len"])
        for t, kind, q in events:
            wr.writerow([f"{t:.9f}", kind, q])
