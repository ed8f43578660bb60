"""Shared domain types, unit conversion and configuration validation.

All internal quantities are SI (s, Hz, W, J, W/Hz).  Configuration files use
engineering units (MHz, ms, dBm/Hz, mW, mJ) and are converted on load.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

#: margin used for every strict inequality (stability, SIC, lambda * tau_b < 1)
STRICT_MARGIN = 1e-9


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


class UnstableQueueError(ValueError):
    """Raised when lambda * tau_b is not strictly inside (0, 1)."""


class Protocol(str, enum.Enum):
    TDMA = "tdma"
    FDMA = "fdma"
    NOMA = "noma"


class Policy(str, enum.Enum):
    MV = "mv"
    ST = "st"


ALL_COMBOS: tuple[tuple[Protocol, Policy], ...] = tuple(
    (proto, pol) for proto in Protocol for pol in Policy
)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w) + 30.0


# file unit -> multiplier into SI.  noise_psd is handled separately (dBm/Hz).
FILE_UNITS: dict[str, tuple[str, float]] = {
    "bandwidth_hz": ("MHz", 1e6),
    "guard_band_hz": ("MHz", 1e6),
    "carrier_hz": ("MHz", 1e6),
    "eh_clamp_w": ("mW", 1e-3),
    "sic_threshold_w": ("mW", 1e-3),
    "tau_p_s": ("ms", 1e-3),
    "tau_b_max_s": ("ms", 1e-3),
    "tau_s_max_s": ("ms", 1e-3),
    "tau_s_min_s": ("ms", 1e-3),
    "phi_r_max_w": ("mW", 1e-3),
    "phi_t_max_w": ("mW", 1e-3),
    "battery_j": ("mJ", 1e-3),
    "power_active_w": ("mW", 1e-3),
    "power_idle_w": ("mW", 1e-3),
    "power_switch_w": ("mW", 1e-3),
}

# Placeholder values with no reference figure; every output records them as assumptions.
ASSUMED_DEFAULTS: dict[str, Any] = {
    "fading_param": 1000.0,
    "capacity_gap": 1.0,
    "ee_min": 1.1e6,
    "battery_j": 20.0,  # mJ in file units
    "sic_threshold_w": 1e-3,  # mW in file units
    "lambda_min": 1.0,
    "tau_s_max_s": 100.0,  # ms
    "tau_s_min_s": 0.0,  # ms
    "m_min": 2,
    "m_max": 10,
    "guard_band_hz": 0.005,  # MHz
    "eh_clamp_w": 4000.0,  # mW
}

# Reference scenario, in file units.
REFERENCE_DEFAULTS: dict[str, Any] = {
    "n_devices": 10,
    "packet_len_bits": 100.0,
    "bandwidth_hz": 5.0,
    "noise_psd": -60.0,
    "carrier_hz": 470.0,
    "d_min_m": 3.0,
    "d_max_m": 5.0,
    "pathloss_exp": 2.0,
    "eh_efficiency": 0.9,
    "tau_p_s": 10.0,
    "tau_b_max_s": 40.0,
    "lambda_max": 15.0,
    "phi_r_max_w": 4000.0,
    "phi_t_max_w": 400.0,
    "power_active_w": 100.0,
    "power_idle_w": 10.0,
    "power_switch_w": 100.0,
    "switch_ratio": 9.0,
}


@dataclass(frozen=True)
class SystemConfig:
    """Physical and protocol constants, SI units throughout."""

    n_devices: int
    packet_len_bits: float
    bandwidth_hz: float
    guard_band_hz: float
    noise_psd: float  # W/Hz
    carrier_hz: float
    distances_m: tuple[float, ...]
    fading_param: float
    pathloss_exp: float
    eh_efficiency: float
    eh_clamp_w: float
    sic_threshold_w: float
    tau_p_s: float
    tau_b_max_s: float
    tau_s_max_s: float
    lambda_min: float
    lambda_max: float
    phi_r_max_w: float
    phi_t_max_w: float
    battery_j: float
    capacity_gap: float
    ee_min: float
    power_active_w: float
    power_idle_w: float
    power_switch_w: float
    switch_ratio: float
    m_min: int
    m_max: int
    tau_s_min_s: float = 0.0

    @property
    def noise_psd_dbm(self) -> float:
        return watt_to_dbm(self.noise_psd)

    @property
    def sub_bandwidth_hz(self) -> float:
        """FDMA sub-channel width after guard bands."""
        n = self.n_devices
        return (self.bandwidth_hz - (n - 1) * self.guard_band_hz) / n

    def digest(self) -> str:
        """Short stable hash of the resolved configuration."""
        blob = json.dumps(asdict(self), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def to_file_units(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in FILE_UNITS:
                v = v / FILE_UNITS[f.name][1]
            elif f.name == "noise_psd":
                v = watt_to_dbm(v)
            elif f.name == "distances_m":
                v = list(v)
            out[f.name] = v
        return out

    def with_devices(self, n: int) -> "SystemConfig":
        """Same config with ``n`` devices spread over the current distance range."""
        d = tuple(np.linspace(self.distances_m[0], self.distances_m[-1], n).tolist())
        return validate_config(replace(self, n_devices=n, distances_m=d))

    def updated(self, **changes: Any) -> "SystemConfig":
        return validate_config(replace(self, **changes))


@dataclass(frozen=True)
class DecisionVector:
    """Optimizer variables.

    ``policy_param`` is the vacation length in seconds for MV and the start-up
    threshold for ST (real while relaxed).  ``phi_r_w`` is the station charge
    power; for NOMA it is the aggregate charge power.
    """

    lambda_rate: float
    tau_b_s: float
    policy_param: float
    phi_r_w: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda_rate, self.tau_b_s, self.policy_param])

    @classmethod
    def from_array(cls, arr, phi_r_w: float = 0.0) -> "DecisionVector":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), phi_r_w)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _normalize(raw: Mapping[str, Any]) -> SystemConfig:
    merged: dict[str, Any] = {**REFERENCE_DEFAULTS, **ASSUMED_DEFAULTS, **dict(raw)}
    known = {f.name for f in fields(SystemConfig)} | {"d_min_m", "d_max_m"}
    unknown = sorted(set(merged) - known)
    _check(not unknown, f"unknown config keys: {', '.join(unknown)}")

    n = merged["n_devices"]
    _check(isinstance(n, int) and not isinstance(n, bool) and n >= 1,
           "n_devices must be a positive integer")
    if "distances_m" in raw:
        dist = tuple(float(x) for x in raw["distances_m"])
    else:
        dist = tuple(np.linspace(merged["d_min_m"], merged["d_max_m"], n).tolist())
    merged.pop("d_min_m", None)
    merged.pop("d_max_m", None)
    merged["distances_m"] = dist

    for key, (_, scale) in FILE_UNITS.items():
        merged[key] = float(merged[key]) * scale
    merged["noise_psd"] = dbm_to_watt(float(merged["noise_psd"]))
    for key in ("m_min", "m_max"):
        v = merged[key]
        _check(float(v) == int(v), f"{key} must be an integer")
        merged[key] = int(v)
    return SystemConfig(**merged)


def _check_invariants(cfg: SystemConfig) -> None:
    _check(0.0 < cfg.eh_efficiency < 1.0, "eh_efficiency out of (0,1)")
    _check(cfg.n_devices >= 1, "n_devices must be a positive integer")
    _check(len(cfg.distances_m) == cfg.n_devices,
           "distances_m length must equal n_devices")
    _check(all(d > 0 for d in cfg.distances_m), "distances_m must be positive")
    _check(all(a <= b for a, b in zip(cfg.distances_m, cfg.distances_m[1:])),
           "distances_m must be sorted ascending")
    positive = (
        "packet_len_bits", "bandwidth_hz", "noise_psd", "carrier_hz",
        "fading_param", "pathloss_exp", "eh_clamp_w", "sic_threshold_w",
        "tau_p_s", "tau_b_max_s", "tau_s_max_s", "lambda_min", "lambda_max",
        "phi_r_max_w", "phi_t_max_w", "battery_j", "capacity_gap", "ee_min",
        "power_active_w", "power_idle_w", "power_switch_w", "switch_ratio",
    )
    for name in positive:
        v = getattr(cfg, name)
        _check(math.isfinite(v) and v > 0, f"{name} must be positive")
    _check(cfg.guard_band_hz >= 0, "guard_band_hz must be nonnegative")
    _check(cfg.tau_s_min_s >= 0, "tau_s_min_s must be nonnegative")
    _check(cfg.tau_p_s < cfg.tau_b_max_s, "tau_p exceeds tau_b_max")
    _check(cfg.tau_s_min_s <= cfg.tau_s_max_s, "tau_s_min exceeds tau_s_max")
    _check(cfg.lambda_min <= cfg.lambda_max, "lambda_min exceeds lambda_max")
    _check(cfg.m_min >= 1, "m_min must be at least 1")
    _check(cfg.m_min <= cfg.m_max, "m_min exceeds m_max")
    _check(cfg.sub_bandwidth_hz > 0, "guard bands consume the whole bandwidth")


def validate_config(raw: Mapping[str, Any] | SystemConfig) -> SystemConfig:
    """Check invariants and normalize units.

    A mapping is read in file units (see ``FILE_UNITS``) with missing keys taken
    from the reference scenario and the documented assumptions.  An existing
    ``SystemConfig`` is already SI; it is re-checked and returned unchanged.
    """
    cfg = raw if isinstance(raw, SystemConfig) else _normalize(raw)
    _check_invariants(cfg)
    return cfg


def default_config(**overrides: Any) -> SystemConfig:
    """Reference scenario plus assumed values; overrides are in file units."""
    return validate_config(overrides)


def load_config(path: str | Path) -> SystemConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    raw.pop("_comment", None)
    return validate_config(raw)


def check_stable(lambda_rate: float, service_s: float) -> float:
    """Return rho = lambda * service, raising if not strictly inside (0, 1)."""
    rho = lambda_rate * service_s
    if not (lambda_rate > 0 and service_s > 0 and rho <= 1.0 - STRICT_MARGIN):
        raise UnstableQueueError(
            f"unstable queue: lambda*tau = {rho:.6g} (lambda={lambda_rate}, tau={service_s})"
        )
    return rho


@dataclass
class Assumptions:
    """Assumed values recorded into every run manifest."""

    values: dict[str, Any] = field(default_factory=lambda: dict(ASSUMED_DEFAULTS))
    notes: tuple[str, ...] = (
        "fading_param, capacity_gap, ee_min, battery_j, sic_threshold_w, lambda_min, "
        "tau_s bounds, m bounds, guard_band_hz and eh_clamp_w are placeholders; absolute "
        "AoI and power values depend on them, orderings and trends do not",
        "lambda_max (including the lambda_max sweep axis) is in packets/s, not kbps",
    )
