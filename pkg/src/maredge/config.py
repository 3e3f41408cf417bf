"""Simulation configuration: defaults, file loading, validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import yaml


class ConfigError(ValueError):
    """Raised when a config file is malformed or a field is out of range."""


@dataclass
class SimConfig:
    # topology
    num_miot: int = 10
    num_uav: int = 6
    num_vessel: int = 2
    area_side: float = 1000.0
    miot_height: float = 0.0
    uav_height: float = 30.0
    # time
    slot_len: float = 1.0
    horizon: int = 100
    # tasks
    arrival_mean: float = 15.0          # mean task size, in units of task_scale_bits
    task_scale_bits: float = 1e6        # bits per arrival unit (Mbit by default)
    cycles_per_bit: float = 270.0
    arrival_quantile: float = 1.0 - 1e-6  # arrivals are clamped at this Poisson quantile
    # compute
    uav_cpu: float = 1e9                # cycles/s per UAV
    vessel_cpu: float = 1e10            # cycles/s per vessel
    miot_local_cpu: float = 1e8         # cycles/s local fallback; 0 forces offloading
    # MIoT -> UAV channel
    zeta_los: float = 2.3
    zeta_nlos: float = 34.0
    alpha_env: float = 5.0188
    beta_env: float = 0.3511
    carrier_freq: float = 2e9           # Hz
    light_speed: float = 3e8            # m/s
    bandwidth: float = 1e6              # B_0, Hz
    miot_power: float = 0.5             # W
    noise_dbm: float = -114.0
    # UAV -> vessel channel
    ref_gain_db: float = -50.0          # gain at 1 m
    num_channels: int = 2               # orthogonal licensed channels L
    uav_bandwidth: float = 2e7          # per-channel bandwidth B, Hz
    uav_power: float = 5.0              # W
    # constraints / objective
    antenna_limit: int | None = None    # defaults to num_uav (non-binding)
    lyapunov_v: float = 1e6
    # mobility
    uav_speed: float = 10.0             # m/s; 0 disables mobility
    # reproducibility
    rng_seed: int = 0

    def __post_init__(self):
        if self.antenna_limit is None:
            self.antenna_limit = self.num_uav
        _validate(self)

    @property
    def noise_watts(self) -> float:
        return 10.0 ** (self.noise_dbm / 10.0) / 1000.0

    def replace(self, **kwargs) -> "SimConfig":
        # a non-binding antenna_limit (== num_uav) tracks num_uav changes
        if "antenna_limit" not in kwargs and self.antenna_limit == self.num_uav:
            kwargs.setdefault("antenna_limit", None)
        return dataclasses.replace(self, **kwargs)


_POSITIVE = [
    "area_side", "slot_len", "cycles_per_bit", "uav_cpu", "vessel_cpu",
    "carrier_freq", "light_speed", "bandwidth", "miot_power", "uav_bandwidth",
    "uav_power", "task_scale_bits",
]
_NONNEG = ["arrival_mean", "miot_local_cpu", "uav_speed", "beta_env"]


def _validate(cfg: SimConfig) -> None:
    for key in ("num_miot", "num_uav", "num_vessel"):
        if int(getattr(cfg, key)) < 1:
            raise ConfigError(f"{key} must be >= 1, got {getattr(cfg, key)}")
    if cfg.horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {cfg.horizon}")
    for key in _POSITIVE:
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key} must be > 0, got {getattr(cfg, key)}")
    for key in _NONNEG:
        if getattr(cfg, key) < 0:
            raise ConfigError(f"{key} must be >= 0, got {getattr(cfg, key)}")
    if cfg.num_channels < 1:
        raise ConfigError(f"num_channels must be >= 1, got {cfg.num_channels}")
    if not (1 <= cfg.antenna_limit <= cfg.num_uav):
        raise ConfigError(
            f"antenna_limit must be in [1, num_uav={cfg.num_uav}], got {cfg.antenna_limit}"
        )
    if cfg.uav_height <= cfg.miot_height:
        raise ConfigError(
            f"uav_height must exceed miot_height, got {cfg.uav_height} <= {cfg.miot_height}"
        )
    if not (0.0 < cfg.arrival_quantile < 1.0):
        raise ConfigError(f"arrival_quantile must be in (0,1), got {cfg.arrival_quantile}")
    if cfg.lyapunov_v < 0:
        raise ConfigError(f"lyapunov_v must be >= 0, got {cfg.lyapunov_v}")


_FIELD_NAMES = {f.name for f in dataclasses.fields(SimConfig)}
_INT_FIELDS = {"num_miot", "num_uav", "num_vessel", "horizon", "num_channels",
               "antenna_limit", "rng_seed"}


def config_from_dict(data: dict) -> SimConfig:
    """Build a validated SimConfig from a key/value mapping; omitted keys take defaults."""
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _INT_FIELDS:
            if value is not None and int(value) != value:
                raise ConfigError(f"{key} must be an integer, got {value!r}")
            kwargs[key] = None if value is None else int(value)
        else:
            if not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be numeric, got {value!r}")
            kwargs[key] = float(value)
    return SimConfig(**kwargs)


def load_config(path) -> SimConfig:
    """Load a YAML config file; an empty file yields the full default SimConfig."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping at top level")
    return config_from_dict(data)
