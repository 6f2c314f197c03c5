"""Phase-structured training-latency model.

One cluster's round decomposes into a starting phase, ``L - 1`` inner
phases, and an ending phase; each phase waits for its straggler device.
Per-device components:

  tau_b  model broadcast, all subcarriers      xi_d / (C R)
  tau_d  device-side forward pass              B gamma_d_f / (f kappa)
  tau_s  smashed-data upload                   B xi_s / (x R)
  tau_g  smashed-gradient download             xi_g / (x R)
  tau_u  device-side backward pass             B gamma_d_b / (f kappa)
  tau_t  device-side model upload              xi_d / (x R)

plus the shared server execute/update time tau_e = k B (gamma_s_f +
gamma_s_b) / (f_s kappa). Phases:

  d_start = max_k(tau_b + tau_d + tau_s) + tau_e
  d_inner = max_k(tau_g + tau_u + tau_d + tau_s) + tau_e
  d_end   = max_k(tau_g + tau_u + tau_t)          (aggregation itself free)

Cluster total D_m = d_start + (L-1) d_inner + d_end; a full round is the sum
over clusters (clusters run sequentially). The sequential baseline treats
every device as a singleton cluster with the full spectrum, where the
ending-phase model upload doubles as the handoff to the next device. The
federated baseline broadcasts the full model, trains locally, and uploads
over an equal spectrum split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .env import DeviceState, EnvSpec, device_rates
from .errors import InfeasibleError
from .profiler import CutProfile

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(**_kwargs):
        def deco(fn):
            return fn

        return deco


@dataclass(frozen=True)
class ClusterCoeffs:
    """Per-device affine-in-1/x latency coefficients for one device set.

    Each phase straggler term is ``const + slope / x`` per device:
    phase 1 (start) c1 + a1/x, phase 2 (inner) c2 + a2/x, phase 3 (end)
    c3 + a3/x. ``te_unit`` is the server time per participating device.
    """

    c1: np.ndarray
    a1: np.ndarray
    c2: np.ndarray
    a2: np.ndarray
    c3: np.ndarray
    a3: np.ndarray
    te_unit: float
    local_epochs: int


def cluster_coeffs(devices: Sequence[DeviceState], profile: CutProfile, env: EnvSpec) -> ClusterCoeffs:
    rate = device_rates(devices, env.subcarrier_bandwidth)
    f = np.array([d.f for d in devices], dtype=float)
    tau_b = profile.xi_d_bits / (env.subcarriers * rate)
    tau_d = env.batch * profile.gamma_d_f / (f * env.kappa)
    tau_u = env.batch * profile.gamma_d_b / (f * env.kappa)
    return ClusterCoeffs(
        c1=tau_b + tau_d,
        a1=env.batch * profile.xi_s_bits / rate,
        c2=tau_u + tau_d,
        a2=(profile.xi_g_bits + env.batch * profile.xi_s_bits) / rate,
        c3=tau_u,
        a3=(profile.xi_g_bits + profile.xi_d_bits) / rate,
        te_unit=env.batch * (profile.gamma_s_f + profile.gamma_s_b) / (env.server_f * env.kappa),
        local_epochs=env.local_epochs,
    )


@njit(cache=True)
def _phase_maxes(c1, a1, c2, a2, c3, a3, x):
    m1 = -1.0e300
    m2 = -1.0e300
    m3 = -1.0e300
    for k in range(c1.shape[0]):
        inv = 1.0 / x[k]
        t = c1[k] + a1[k] * inv
        if t > m1:
            m1 = t
        t = c2[k] + a2[k] * inv
        if t > m2:
            m2 = t
        t = c3[k] + a3[k] * inv
        if t > m3:
            m3 = t
    return m1, m2, m3


def coeffs_phase_latencies(coeffs: ClusterCoeffs, x: np.ndarray) -> tuple[float, float, float]:
    """(d_start, d_inner, d_end) for a subcarrier assignment vector."""
    m1, m2, m3 = _phase_maxes(coeffs.c1, coeffs.a1, coeffs.c2, coeffs.a2, coeffs.c3, coeffs.a3, x)
    te = len(x) * coeffs.te_unit
    return m1 + te, m2 + te, m3


def coeffs_cluster_total(coeffs: ClusterCoeffs, x: np.ndarray) -> float:
    d_s, d_i, d_e = coeffs_phase_latencies(coeffs, x)
    return d_s + (coeffs.local_epochs - 1) * d_i + d_e


@dataclass(frozen=True)
class ComponentLatencies:
    """Per-device latency components (seconds)."""

    tau_b: float
    tau_d: float
    tau_s: float
    tau_g: float
    tau_u: float
    tau_t: float


@dataclass(frozen=True)
class LatencyBreakdown:
    """One cluster's phase decomposition; ``total`` is D_m."""

    device_ids: tuple[int, ...]
    components: tuple[ComponentLatencies, ...]
    tau_e: float
    d_start: float
    d_inner: float
    d_end: float
    local_epochs: int
    total: float


@dataclass(frozen=True)
class FlDeviceLatency:
    device_id: int
    download: float
    compute: float
    upload: float
    total: float


@dataclass(frozen=True)
class RoundLatency:
    """One training round's latency under a named scheme."""

    scheme: str
    total: float
    clusters: tuple[LatencyBreakdown, ...] = ()
    fl_devices: tuple[FlDeviceLatency, ...] = ()

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "total_s": self.total}

    def component_rows(self) -> list[dict]:
        rows = []
        for m, cluster in enumerate(self.clusters):
            for dev_id, comp in zip(cluster.device_ids, cluster.components):
                for name in ("tau_b", "tau_d", "tau_s", "tau_g", "tau_u", "tau_t"):
                    rows.append(
                        {
                            "scheme": self.scheme,
                            "cluster": m,
                            "device": dev_id,
                            "component": name,
                            "seconds": getattr(comp, name),
                        }
                    )
            for name, value in (
                ("tau_e", cluster.tau_e),
                ("d_start", cluster.d_start),
                ("d_inner", cluster.d_inner),
                ("d_end", cluster.d_end),
                ("cluster_total", cluster.total),
            ):
                rows.append(
                    {"scheme": self.scheme, "cluster": m, "device": "", "component": name, "seconds": value}
                )
        for dev in self.fl_devices:
            for name, value in (
                ("download", dev.download),
                ("compute", dev.compute),
                ("upload", dev.upload),
                ("device_total", dev.total),
            ):
                rows.append(
                    {"scheme": self.scheme, "cluster": "", "device": dev.device_id, "component": name, "seconds": value}
                )
        rows.append({"scheme": self.scheme, "cluster": "", "device": "", "component": "round_total", "seconds": self.total})
        return rows


def component_latencies(device: DeviceState, profile: CutProfile, x: int, env: EnvSpec) -> ComponentLatencies:
    """All six per-device components for a device holding ``x`` subcarriers."""
    if x < 1:
        raise ValueError(f"subcarrier count must be a positive integer, got {x}")
    rate = float(device_rates([device], env.subcarrier_bandwidth)[0])
    fk = device.f * env.kappa
    return ComponentLatencies(
        tau_b=profile.xi_d_bits / (env.subcarriers * rate),
        tau_d=env.batch * profile.gamma_d_f / fk,
        tau_s=env.batch * profile.xi_s_bits / (x * rate),
        tau_g=profile.xi_g_bits / (x * rate),
        tau_u=env.batch * profile.gamma_d_b / fk,
        tau_t=profile.xi_d_bits / (x * rate),
    )


def server_latency(k_m: int, profile: CutProfile, env: EnvSpec) -> float:
    """Server-side execute+update time for ``k_m`` concatenated device batches."""
    if k_m < 1:
        raise ValueError(f"cluster size must be >= 1, got {k_m}")
    return k_m * env.batch * (profile.gamma_s_f + profile.gamma_s_b) / (env.server_f * env.kappa)


def _alloc_vector(cluster_devices: Sequence[DeviceState], alloc, env: EnvSpec) -> np.ndarray:
    x_map: Mapping[int, int] = getattr(alloc, "x", alloc)
    ids = [d.id for d in cluster_devices]
    missing = [i for i in ids if i not in x_map]
    if missing:
        raise ValueError(f"allocation missing devices {missing}")
    x = np.array([int(x_map[i]) for i in ids], dtype=np.int64)
    if np.any(x < 1):
        raise ValueError("every allocated subcarrier count must be >= 1")
    if int(x.sum()) > env.subcarriers:
        raise ValueError(f"allocation uses {int(x.sum())} subcarriers, capacity is {env.subcarriers}")
    return x


def phase_latencies(
    cluster_devices: Sequence[DeviceState], profile: CutProfile, alloc, env: EnvSpec
) -> tuple[float, float, float]:
    """(d_start, d_inner, d_end) for one cluster under a spectrum allocation."""
    x = _alloc_vector(cluster_devices, alloc, env)
    return coeffs_phase_latencies(cluster_coeffs(cluster_devices, profile, env), x)


def cluster_breakdown(
    cluster_devices: Sequence[DeviceState], profile: CutProfile, alloc, env: EnvSpec
) -> LatencyBreakdown:
    x = _alloc_vector(cluster_devices, alloc, env)
    d_s, d_i, d_e = coeffs_phase_latencies(cluster_coeffs(cluster_devices, profile, env), x)
    comps = tuple(
        component_latencies(dev, profile, int(xk), env) for dev, xk in zip(cluster_devices, x)
    )
    total = d_s + (env.local_epochs - 1) * d_i + d_e
    return LatencyBreakdown(
        device_ids=tuple(d.id for d in cluster_devices),
        components=comps,
        tau_e=server_latency(len(cluster_devices), profile, env),
        d_start=d_s,
        d_inner=d_i,
        d_end=d_e,
        local_epochs=env.local_epochs,
        total=total,
    )


def _cluster_lists(assignment) -> Sequence[Sequence[int]]:
    return getattr(assignment, "clusters", assignment)


def cpsl_round_latency(
    assignment, allocs: Mapping[int, object], devices: Sequence[DeviceState], profile: CutProfile, env: EnvSpec
) -> RoundLatency:
    """Round latency of the cluster-parallel scheme: sequential sum over clusters."""
    by_id = {d.id: d for d in devices}
    breakdowns = []
    for m, member_ids in enumerate(_cluster_lists(assignment)):
        cluster_devices = [by_id[i] for i in member_ids]
        breakdowns.append(cluster_breakdown(cluster_devices, profile, allocs[m], env))
    total = float(sum(b.total for b in breakdowns))
    return RoundLatency(scheme="cpsl", total=total, clusters=tuple(breakdowns))


def vanilla_sl_round_latency(devices: Sequence[DeviceState], profile: CutProfile, env: EnvSpec) -> RoundLatency:
    """Sequential baseline: devices visited one at a time with the full spectrum.

    Each visit is a singleton cluster whose ending-phase model upload is the
    handoff; the next visit's broadcast delivers the model onward, so no
    separate download leg is charged.
    """
    breakdowns = []
    for dev in devices:
        alloc = {dev.id: env.subcarriers}
        breakdowns.append(cluster_breakdown([dev], profile, alloc, env))
    total = float(sum(b.total for b in breakdowns))
    return RoundLatency(scheme="sl", total=total, clusters=tuple(breakdowns))


def fl_round_latency(devices: Sequence[DeviceState], profile_at_last_cut: CutProfile, env: EnvSpec) -> RoundLatency:
    """Federated baseline: parallel local training of the full model.

    Requires the degenerate last-layer cut profile (entire model on the
    device). Upload spectrum is split evenly, ``floor(C / N)`` subcarriers
    per device; aggregation itself is free.
    """
    p = profile_at_last_cut
    if p.gamma_s_f != 0.0 or p.gamma_s_b != 0.0 or p.xi_s_bits != 0.0:
        raise ValueError("federated round latency requires the last-layer cut profile (empty server side)")
    n = len(devices)
    x = env.subcarriers // n
    if x < 1:
        raise InfeasibleError(f"{n} devices cannot each hold a subcarrier of {env.subcarriers}")
    rates = device_rates(devices, env.subcarrier_bandwidth)
    rows = []
    for dev, rate in zip(devices, rates):
        download = p.xi_d_bits / (env.subcarriers * rate)
        compute = env.batch * env.local_epochs * (p.gamma_d_f + p.gamma_d_b) / (dev.f * env.kappa)
        upload = p.xi_d_bits / (x * rate)
        rows.append(
            FlDeviceLatency(
                device_id=dev.id,
                download=float(download),
                compute=float(compute),
                upload=float(upload),
                total=float(download + compute + upload),
            )
        )
    total = max(r.total for r in rows)
    return RoundLatency(scheme="fl", total=float(total), fl_devices=tuple(rows))
