"""Closed-form M/D/1 results with multiple-vacation (MV) and start-up
threshold (ST) sleep scheduling.

Scalar ``*_value`` functions are what the optimizers call; the
``peak_aoi_*`` functions return a full :class:`AoIBreakdown` for reports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DecisionVector, Policy, Protocol, check_stable


@dataclass(frozen=True)
class QueueParams:
    lambda_rate: float
    service_s: float
    vacation_s: float = 0.0
    threshold: float = 1

    @property
    def rho(self) -> float:
        return self.lambda_rate * self.service_s


@dataclass(frozen=True)
class AoIBreakdown:
    md1_age_s: float
    additional_age_s: float
    total_peak_aoi_s: float
    mean_delay_s: float
    per_packet_aoi_s: float


def _md1_factor(rho: float, w):
    """Pi(z) of the M/D/1 departure-epoch queue written in w = 1 - z.

    (1 - rho) e^{-rho w} / (1 + expm1(-rho w) / w) removes the 0/0 at z = 1.
    """
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(w > 1e-10, np.expm1(-rho * w) / np.where(w > 0, w, 1.0),
                         -rho + 0.5 * rho * rho * w)
    return (1.0 - rho) * np.exp(-rho * w) / (1.0 + ratio)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def md1_queue_pgf(p: QueueParams, z):
    """P.g.f. of the number left behind by a departure in M/D/1."""
    rho = check_stable(p.lambda_rate, p.service_s)
    z = np.asarray(z, dtype=float)
    if np.any((z < 0) | (z > 1)):
        raise ValueError("z must lie in [0, 1]")
    return _scalar(_md1_factor(rho, 1.0 - z))


def md1_mean_queue(p: QueueParams) -> float:
    rho = check_stable(p.lambda_rate, p.service_s)
    return rho + rho * rho / (2.0 * (1.0 - rho))


def md1_mean_delay(p: QueueParams) -> float:
    rho = check_stable(p.lambda_rate, p.service_s)
    return p.service_s + rho * rho / (2.0 * p.lambda_rate * (1.0 - rho))


def mv_vacation_pgf(p: QueueParams, z):
    """P.g.f. of arrivals during one vacation, given at least one arrived."""
    if not p.vacation_s > 0:
        raise ValueError("vacation length must be positive")
    a = p.lambda_rate * p.vacation_s
    return _scalar(np.expm1(a * np.asarray(z, dtype=float)) / math.expm1(a))


def mv_stationary_pgf(p: QueueParams, z):
    """Departure-epoch queue-length p.g.f. under multiple vacations.

    M/D/1 p.g.f. times (1 - V(z)) / (E[V] (1 - z)) with V the conditioned
    vacation-arrival p.g.f.; that factor simplifies to
    -expm1(-a w) / (a w) with a = lambda * tau_s, w = 1 - z.
    """
    rho = check_stable(p.lambda_rate, p.service_s)
    z = np.asarray(z, dtype=float)
    w = 1.0 - z
    a = p.lambda_rate * p.vacation_s
    if a == 0:
        return _scalar(_md1_factor(rho, w))
    aw = a * w
    with np.errstate(divide="ignore", invalid="ignore"):
        extra = np.where(aw > 1e-12, -np.expm1(-aw) / np.where(aw > 0, aw, 1.0), 1.0 - 0.5 * aw)
    return _scalar(_md1_factor(rho, w) * extra)


def mv_mean_queue(p: QueueParams) -> float:
    rho = check_stable(p.lambda_rate, p.service_s)
    if p.vacation_s < 0:
        raise ValueError("vacation length must be nonnegative")
    a = p.lambda_rate * p.vacation_s
    return (2.0 * rho + a * (1.0 - rho) - rho * rho) / (2.0 * (1.0 - rho))


def st_stationary_pgf(p: QueueParams, z):
    """Departure-epoch queue-length p.g.f. for the start-up threshold queue.

    (1 - z^M) / (1 - z) is kept as the finite sum 1 + z + ... + z^{M-1} when M is
    an integer, so z = 1 needs no limit.
    """
    rho = check_stable(p.lambda_rate, p.service_s)
    m = p.threshold
    if m < 1:
        raise ValueError("threshold must be at least 1")
    z = np.asarray(z, dtype=float)
    if float(m).is_integer():
        geom = sum(z ** k for k in range(int(m)))
    else:
        w = 1.0 - z
        with np.errstate(divide="ignore", invalid="ignore"):
            geom = np.where(w > 1e-12, (1.0 - z ** m) / np.where(w > 0, w, 1.0), m)
    return _scalar(_md1_factor(rho, 1.0 - z) * geom / m)


def st_mean_queue(p: QueueParams) -> float:
    rho = check_stable(p.lambda_rate, p.service_s)
    if p.threshold < 1:
        raise ValueError("threshold must be at least 1")
    return rho + rho * rho / (2.0 * (1.0 - rho)) + (p.threshold - 1.0) / 2.0


def md1_peak_age(lam: float, tau_b: float) -> float:
    """tau_b + lam tau_b^2 / (2 (1 - lam tau_b)) + 1 / lam."""
    return tau_b + lam * tau_b * tau_b / (2.0 * (1.0 - lam * tau_b)) + 1.0 / lam


def peak_aoi_mv_value(lam: float, tau_b: float, tau_s: float) -> float:
    check_stable(lam, tau_b)
    return md1_peak_age(lam, tau_b) + 0.5 * tau_s


def peak_aoi_st_value(lam: float, tau_b: float, m: float) -> float:
    check_stable(lam, tau_b)
    return md1_peak_age(lam, tau_b) + (m - 1.0) / (2.0 * lam)


def _breakdown(md1: float, extra: float, mean_queue: float, lam: float) -> AoIBreakdown:
    total = md1 + extra
    delay = mean_queue / lam
    return AoIBreakdown(md1, extra, total, delay, 0.5 * (delay + total))


def peak_aoi_mv(p: QueueParams) -> AoIBreakdown:
    lam, tau_b = p.lambda_rate, p.service_s
    check_stable(lam, tau_b)
    return _breakdown(md1_peak_age(lam, tau_b), 0.5 * p.vacation_s, mv_mean_queue(p), lam)


def peak_aoi_st(p: QueueParams) -> AoIBreakdown:
    lam, tau_b = p.lambda_rate, p.service_s
    check_stable(lam, tau_b)
    if p.threshold < 1:
        raise ValueError("threshold must be at least 1")
    return _breakdown(md1_peak_age(lam, tau_b), (p.threshold - 1.0) / (2.0 * lam),
                      st_mean_queue(p), lam)


def queue_params(policy: Policy, x: DecisionVector) -> QueueParams:
    if Policy(policy) is Policy.MV:
        return QueueParams(x.lambda_rate, x.tau_b_s, vacation_s=x.policy_param)
    return QueueParams(x.lambda_rate, x.tau_b_s, threshold=x.policy_param)


def protocol_peak_aoi(protocol: Protocol, policy: Policy, x: DecisionVector) -> AoIBreakdown:
    """Peak AoI of one device (equal to the network mean for identical devices).

    The protocol only changes what is feasible, not the functional form.
    """
    Protocol(protocol)
    p = queue_params(policy, x)
    return peak_aoi_mv(p) if Policy(policy) is Policy.MV else peak_aoi_st(p)


def peak_aoi_value(policy: Policy, lam: float, tau_b: float, param: float) -> float:
    if Policy(policy) is Policy.MV:
        return peak_aoi_mv_value(lam, tau_b, param)
    return peak_aoi_st_value(lam, tau_b, param)
