"""Channel, energy-harvesting, transmit-power and power-consumption models."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import STRICT_MARGIN, DecisionVector, Policy, Protocol, SystemConfig

LN2 = math.log(2.0)


class SICError(ValueError):
    """NOMA power split violates the SIC decoding condition."""


@dataclass(frozen=True)
class ChannelState:
    coeffs: np.ndarray  # |h_t,n|
    gains: np.ndarray  # |h_t,n|^2 / (B_eff N0)


@dataclass(frozen=True)
class PowerReport:
    tx_power_w: float
    eh_power_w: float
    avg_consumption_w: float
    ee_bits_per_j: float
    rho: float
    tx_power_ok: bool
    ee_ok: bool


def channel_coefficient(d_m: float, cfg: SystemConfig) -> float:
    if not d_m > 0:
        raise ValueError("distance must be positive")
    return 1e-3 * cfg.fading_param * d_m ** (-cfg.pathloss_exp)


def noise_bandwidth(cfg: SystemConfig, protocol: Protocol) -> float:
    if Protocol(protocol) is Protocol.FDMA:
        return cfg.bandwidth_hz / cfg.n_devices
    return cfg.bandwidth_hz


def channel_gain(d_m: float, cfg: SystemConfig, protocol: Protocol = Protocol.TDMA) -> float:
    """Normalized channel gain |h|^2 / (B_eff N0)."""
    h = channel_coefficient(d_m, cfg)
    return h * h / (noise_bandwidth(cfg, protocol) * cfg.noise_psd)


def channel_state(cfg: SystemConfig, protocol: Protocol) -> ChannelState:
    d = np.asarray(cfg.distances_m)
    coeffs = 1e-3 * cfg.fading_param * d ** (-cfg.pathloss_exp)
    gains = coeffs ** 2 / (noise_bandwidth(cfg, protocol) * cfg.noise_psd)
    return ChannelState(coeffs, gains)


def eh_power(phi_wp_w, h_p, cfg: SystemConfig):
    """Harvested power, linear in the station power up to the clamp."""
    if np.any(np.asarray(phi_wp_w) < 0) or np.any(np.asarray(h_p) < 0):
        raise ValueError("charging power and channel must be nonnegative")
    out = np.minimum(cfg.eh_efficiency * np.asarray(phi_wp_w) * np.asarray(h_p), cfg.eh_clamp_w)
    return float(out) if np.ndim(out) == 0 else out


def eh_energy(tau_p_s, phi_r_w) -> float:
    """Energy over the EH slot; arrays describe a piecewise-constant profile."""
    tau = np.asarray(tau_p_s, dtype=float)
    phi = np.asarray(phi_r_w, dtype=float)
    if np.any(tau < 0) or np.any(phi < 0):
        raise ValueError("durations and powers must be nonnegative")
    return float(np.sum(tau * phi))


def transmission_time(protocol: Protocol, tau_b_s: float, cfg: SystemConfig) -> float:
    """Time one device transmits per cycle: its TDMA share or the whole data part."""
    span = tau_b_s - cfg.tau_p_s
    if Protocol(protocol) is Protocol.TDMA:
        return span / cfg.n_devices
    return span


def _rate_exponent(protocol: Protocol, tau_b_s: float, cfg: SystemConfig) -> float:
    """Bits-per-Hz exponent of the inverted capacity expression."""
    span = tau_b_s - cfg.tau_p_s
    if not span > 0:
        raise ValueError("tau_b must exceed tau_p")
    bits = (cfg.capacity_gap + 1.0) * cfg.packet_len_bits
    if Protocol(protocol) is Protocol.FDMA:
        return bits / (span * cfg.sub_bandwidth_hz)
    return bits * cfg.n_devices / (span * cfg.bandwidth_hz)


def required_tx_power(protocol: Protocol, tau_b_s: float, cfg: SystemConfig, gain: float) -> float:
    """Minimum transmit power that carries (J+1) L bits per device per cycle.

    For NOMA this is the total power of all devices.  ``inf`` when the exponent
    overflows.
    """
    if not gain > 0:
        raise ValueError("gain must be positive")
    e = _rate_exponent(protocol, tau_b_s, cfg)
    with np.errstate(over="ignore"):
        return float(np.expm1(e * LN2)) / gain


def slot_capacity_bps(protocol: Protocol, phi_t_w: float, cfg: SystemConfig, gain: float) -> float:
    """Shannon rate while transmitting (NOMA: sum rate at equal SINRs)."""
    bw = cfg.sub_bandwidth_hz if Protocol(protocol) is Protocol.FDMA else cfg.bandwidth_hz
    return bw * math.log2(1.0 + phi_t_w * gain)


def average_rate_bps(protocol: Protocol, phi_t_w: float, tau_b_s: float, cfg: SystemConfig,
                     gain: float) -> float:
    """Rate averaged over the cycle, scaled by the transmitting fraction."""
    share = transmission_time(protocol, tau_b_s, cfg) / tau_b_s
    return slot_capacity_bps(protocol, phi_t_w, cfg, gain) * share


def per_user_sinr(protocol_rate_bits: float, span_s: float, bandwidth_hz: float) -> float:
    """SINR that carries ``protocol_rate_bits`` over ``span_s`` on ``bandwidth_hz``."""
    return math.expm1(protocol_rate_bits / (span_s * bandwidth_hz) * LN2)


def noma_sinr_target(tau_b_s: float, cfg: SystemConfig) -> float:
    bits = (cfg.capacity_gap + 1.0) * cfg.packet_len_bits
    return per_user_sinr(bits, tau_b_s - cfg.tau_p_s, cfg.bandwidth_hz)


def noma_sinrs(powers, gains) -> np.ndarray:
    """SINR of each user under SIC decoding in decreasing-gain order."""
    rx = np.asarray(powers, dtype=float) * np.asarray(gains, dtype=float)
    # interference on user n is the received power of users n+1..N
    tail = np.concatenate([np.cumsum(rx[::-1])[::-1][1:], [0.0]])
    return rx / (1.0 + tail)


def sic_margins(powers, gains) -> np.ndarray:
    """Received power minus residual interference for users 1..N-1."""
    rx = np.asarray(powers, dtype=float) * np.asarray(gains, dtype=float)
    tail = np.concatenate([np.cumsum(rx[::-1])[::-1][1:], [0.0]])
    return (rx - tail)[:-1]


def noma_power_split(sinr_target: float, gains, sic_threshold: float | None = None) -> np.ndarray:
    """Per-user powers giving every user the same SINR.

    Solved backwards from the weakest user, who sees no interference.  With
    ``sic_threshold`` set, the SIC margins are checked and :class:`SICError`
    is raised if any falls below it.
    """
    g = np.asarray(gains, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(g <= 0):
        raise ValueError("gains must be a nonempty vector of positive values")
    if np.any(np.diff(g) > 0):
        raise ValueError("gains must be sorted nonincreasing")
    if not sinr_target > 0:
        raise ValueError("sinr_target must be positive")
    powers = np.empty_like(g)
    interference = 0.0
    for n in range(g.size - 1, -1, -1):
        powers[n] = sinr_target * (1.0 + interference) / g[n]
        interference += powers[n] * g[n]
    if sic_threshold is not None:
        bad = np.flatnonzero(sic_margins(powers, g) < sic_threshold)
        if bad.size:
            raise SICError(f"SIC condition fails for users {(bad + 1).tolist()}")
    return powers


def transmit_energy(protocol: Protocol, tau_b_s: float, cfg: SystemConfig, gain: float) -> float:
    """Transmit energy per cycle (NOMA: all devices together)."""
    phi = required_tx_power(protocol, tau_b_s, cfg, gain)
    return transmission_time(protocol, tau_b_s, cfg) * phi


def energy_budget(protocol: Protocol, cfg: SystemConfig) -> float:
    """Largest energy the EH slot can deliver: min(tau_p * Phi_r,max, battery).

    NOMA counts the aggregate over all devices.
    """
    cap = min(cfg.tau_p_s * cfg.phi_r_max_w, cfg.battery_j)
    return cap * cfg.n_devices if Protocol(protocol) is Protocol.NOMA else cap


def min_charge_power(protocol: Protocol, tau_b_s: float, cfg: SystemConfig, gain: float) -> float:
    """Smallest station power whose harvested energy covers transmission."""
    return transmit_energy(protocol, tau_b_s, cfg, gain) / cfg.tau_p_s


def energy_efficiency(protocol: Protocol, policy: Policy, x: DecisionVector | float,
                      cfg: SystemConfig, gain: float) -> float:
    """Delivered bits per joule of transmit energy.

    The sleep policy does not enter: it changes when a device transmits, not
    the energy of a transmission.
    """
    Policy(policy)
    tau_b = x.tau_b_s if isinstance(x, DecisionVector) else float(x)
    bits = cfg.packet_len_bits
    if Protocol(protocol) is not Protocol.FDMA:
        bits *= cfg.n_devices
    span = tau_b - cfg.tau_p_s
    with np.errstate(divide="ignore"):
        return bits / (span * required_tx_power(protocol, tau_b, cfg, gain))


def ee_ok(protocol: Protocol, policy: Policy, x, cfg: SystemConfig, gain: float) -> bool:
    return energy_efficiency(protocol, policy, x, cfg, gain) >= cfg.ee_min


def max_energy_efficiency(protocol: Protocol, cfg: SystemConfig, gain: float) -> float:
    """Supremum of the EE over tau_b (approached as tau_b grows without bound)."""
    bits = cfg.packet_len_bits * (1 if Protocol(protocol) is Protocol.FDMA else cfg.n_devices)
    e_times_span = _rate_exponent(protocol, cfg.tau_p_s + 1.0, cfg)
    return bits * gain / (e_times_span * LN2)


def idle_power(cfg: SystemConfig, benchmark: bool = False) -> float:
    """Mean power over a vacation split tau_i = ratio * tau_sc."""
    r = cfg.switch_ratio
    phi_s = cfg.power_active_w if benchmark else cfg.power_idle_w
    return (phi_s * r + cfg.power_switch_w) / (r + 1.0)


def avg_power_consumption(policy: Policy, x: DecisionVector, cfg: SystemConfig,
                          tx_power_w: float, benchmark: bool = False) -> float:
    """Average device power: active share rho plus idle share 1 - rho.

    The idle term depends only on the configured switch split, so it is well
    defined for any vacation length (and for ST, which has none).
    """
    Policy(policy)
    rho = x.lambda_rate * x.tau_b_s
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho = {rho} outside (0, 1)")
    tau_b = x.tau_b_s
    active = (tau_b - cfg.tau_p_s) / tau_b * tx_power_w + cfg.power_active_w
    return rho * active + (1.0 - rho) * idle_power(cfg, benchmark)


def device_tx_power(protocol: Protocol, tau_b_s: float, cfg: SystemConfig, gain: float) -> float:
    """Transmit power of one device; NOMA reports the per-device mean of the total."""
    phi = required_tx_power(protocol, tau_b_s, cfg, gain)
    return phi / cfg.n_devices if Protocol(protocol) is Protocol.NOMA else phi


def power_report(protocol: Protocol, policy: Policy, x: DecisionVector, cfg: SystemConfig,
                 gain: float, benchmark: bool = False) -> PowerReport:
    phi_t = device_tx_power(protocol, x.tau_b_s, cfg, gain)
    ee = energy_efficiency(protocol, policy, x, cfg, gain)
    return PowerReport(
        tx_power_w=phi_t,
        eh_power_w=x.phi_r_w,
        avg_consumption_w=avg_power_consumption(policy, x, cfg, phi_t, benchmark),
        ee_bits_per_j=ee,
        rho=x.lambda_rate * x.tau_b_s,
        tx_power_ok=phi_t <= cfg.phi_t_max_w * (1 + STRICT_MARGIN),
        ee_ok=ee >= cfg.ee_min,
    )
