"""Wireless/compute environment: device populations and subcarrier rates.

Devices carry a computing capability (cycles/s) and a received SNR (dB).
Randomness is Gaussian around per-device means: capability noise models
time-varying background load, SNR noise models shadowing. A per-subcarrier
transmission rate follows Shannon capacity at the device's SNR; uplink and
downlink use the same SNR (time-division duplex assumption).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

# Gaussian capability draws are clipped below at this fraction of the mean,
# since the latency model divides by the capability.
F_TRUNCATION_FRACTION = 0.01


@dataclass(frozen=True)
class DeviceState:
    """One device's sampled state for a training round."""

    id: int
    f: float
    snr_db: float


@dataclass(frozen=True)
class EnvSpec:
    """Environment parameters; defaults reproduce the baseline scenario.

    ``f_mean`` and ``snr_mean_db`` may be scalars (homogeneous devices) or
    per-device sequences of length ``n_devices``.
    """

    n_devices: int = 30
    f_mean: float | tuple[float, ...] = 0.5e9
    f_std: float = 0.0
    snr_mean_db: float | tuple[float, ...] = 17.0
    snr_std_db: float = 0.0
    subcarriers: int = 30
    subcarrier_bandwidth: float = 1e6
    kappa: float = 1.0
    server_f: float = 100e9
    batch: int = 16
    local_epochs: int = 1
    cluster_capacity: int = 5

    def __post_init__(self):
        if self.n_devices < 1:
            raise ConfigError("env.n_devices must be >= 1")
        if self.subcarriers < 1:
            raise ConfigError("env.subcarriers must be >= 1")
        if self.subcarrier_bandwidth <= 0:
            raise ConfigError("env.subcarrier_bandwidth must be > 0")
        if self.kappa <= 0:
            raise ConfigError("env.kappa must be > 0")
        if self.server_f <= 0:
            raise ConfigError("env.server_f must be > 0")
        if self.batch < 1:
            raise ConfigError("env.batch must be >= 1")
        if self.local_epochs < 1:
            raise ConfigError("env.local_epochs must be >= 1")
        if self.cluster_capacity < 1:
            raise ConfigError("env.cluster_capacity must be >= 1")
        if self.n_devices < self.cluster_capacity:
            raise ConfigError("env.n_devices must be >= env.cluster_capacity")
        if self.f_std < 0 or self.snr_std_db < 0:
            raise ConfigError("env std deviations must be >= 0")
        for name in ("f_mean", "snr_mean_db"):
            means = self._per_device(name)
            if means.shape != (self.n_devices,):
                raise ConfigError(f"env.{name} must be a scalar or length-{self.n_devices} sequence")
            if not np.all(np.isfinite(means)):
                raise ConfigError(f"env.{name} must be finite")
        if np.any(self._per_device("f_mean") <= 0):
            raise ConfigError("env.f_mean must be > 0")

    def _per_device(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        if np.isscalar(value):
            return np.full(self.n_devices, float(value))
        return np.asarray(value, dtype=float)

    @property
    def f_means(self) -> np.ndarray:
        return self._per_device("f_mean")

    @property
    def snr_means_db(self) -> np.ndarray:
        return self._per_device("snr_mean_db")

    @property
    def n_clusters(self) -> int:
        return -(-self.n_devices // self.cluster_capacity)


def heterogeneous_env(
    n_devices: int = 30,
    f_range: tuple[float, float] = (0.1e9, 1.0e9),
    snr_range_db: tuple[float, float] = (5.0, 30.0),
    f_std: float = 0.05e9,
    snr_std_db: float = 2.0,
    seed=0,
    **overrides,
) -> EnvSpec:
    """EnvSpec with per-device means drawn uniformly from the given ranges."""
    rng = np.random.default_rng(seed)
    f_means = rng.uniform(f_range[0], f_range[1], size=n_devices)
    snr_means = rng.uniform(snr_range_db[0], snr_range_db[1], size=n_devices)
    return EnvSpec(
        n_devices=n_devices,
        f_mean=tuple(f_means),
        f_std=f_std,
        snr_mean_db=tuple(snr_means),
        snr_std_db=snr_std_db,
        **overrides,
    )


def sample_devices(spec: EnvSpec, seed) -> list[DeviceState]:
    """Draw one network-state sample: per-device capability and SNR.

    Deterministic for a fixed seed. Capability draws are clipped below at
    ``F_TRUNCATION_FRACTION`` of the per-device mean. Draw order is fixed
    (all capabilities, then all SNRs).
    """
    rng = np.random.default_rng(seed)
    f_means = spec.f_means
    f = f_means + spec.f_std * rng.standard_normal(spec.n_devices)
    f = np.maximum(f, F_TRUNCATION_FRACTION * f_means)
    snr = spec.snr_means_db + spec.snr_std_db * rng.standard_normal(spec.n_devices)
    return [DeviceState(id=i, f=float(f[i]), snr_db=float(snr[i])) for i in range(spec.n_devices)]


def subcarrier_rate(snr_db: float, w: float) -> float:
    """Shannon rate (bits/s) of one subcarrier of bandwidth ``w`` at the given SNR."""
    if w <= 0:
        raise ValueError(f"subcarrier bandwidth must be > 0, got {w}")
    return w * math.log2(1.0 + 10.0 ** (snr_db / 10.0))


def expected_subcarrier_rate(
    snr_mean_db: float,
    snr_std_db: float,
    w: float,
    n_mc: int = 100_000,
    seed=0,
) -> float:
    """Monte-Carlo mean subcarrier rate over Gaussian dB-domain SNR draws.

    Exact (no sampling) when ``snr_std_db`` is zero.
    """
    if n_mc < 1:
        raise ValueError(f"n_mc must be >= 1, got {n_mc}")
    if snr_std_db == 0.0:
        return subcarrier_rate(snr_mean_db, w)
    rng = np.random.default_rng(seed)
    draws = rng.normal(snr_mean_db, snr_std_db, size=n_mc)
    return float(np.mean(w * np.log2(1.0 + 10.0 ** (draws / 10.0))))


def device_rates(devices, w: float) -> np.ndarray:
    """Per-device subcarrier rate array (uplink == downlink)."""
    snr = np.array([d.snr_db for d in devices], dtype=float)
    return w * np.log2(1.0 + 10.0 ** (snr / 10.0))
