"""Subcarrier allocation within one cluster.

Greedy allocation starts every device at one subcarrier and repeatedly
grants one more to the device whose grant reduces the cluster latency the
most, for exactly ``C - K`` rounds so the whole spectrum is assigned. Ties
go to the lowest device index; rounds where no grant helps (compute-bound
clusters) fall back to round-robin so the iteration count still holds. An
exhaustive minimizer over all feasible integer allocations serves as the
validation oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .env import DeviceState, EnvSpec
from .errors import GuardError, InfeasibleError
from .latency import ClusterCoeffs, cluster_coeffs, coeffs_cluster_total, njit
from .profiler import CutProfile

EXHAUSTIVE_GUARD = 1_000_000


@dataclass(frozen=True)
class SpectrumAllocation:
    """Subcarrier counts by device id; every count is a positive integer."""

    x: dict[int, int]

    def validate(self, capacity: int) -> None:
        if any(int(v) != v or v < 1 for v in self.x.values()):
            raise ValueError("subcarrier counts must be positive integers")
        if sum(self.x.values()) > capacity:
            raise ValueError(f"allocation uses {sum(self.x.values())} of {capacity} subcarriers")

    def total(self) -> int:
        return int(sum(self.x.values()))


@njit(cache=True)
def _greedy_core(c1, a1, c2, a2, c3, a3, inner_weight, capacity):
    k_m = c1.shape[0]
    x = np.ones(k_m, np.int64)
    rr = 0
    for _ in range(capacity - k_m):
        m1 = -1.0e300
        m2 = -1.0e300
        m3 = -1.0e300
        for k in range(k_m):
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
        current = m1 + inner_weight * m2 + m3
        best_gain = 0.0
        best_k = -1
        for k in range(k_m):
            n1 = -1.0e300
            n2 = -1.0e300
            n3 = -1.0e300
            for j in range(k_m):
                xj = x[j] + 1 if j == k else x[j]
                inv = 1.0 / xj
                t = c1[j] + a1[j] * inv
                if t > n1:
                    n1 = t
                t = c2[j] + a2[j] * inv
                if t > n2:
                    n2 = t
                t = c3[j] + a3[j] * inv
                if t > n3:
                    n3 = t
            gain = current - (n1 + inner_weight * n2 + n3)
            if gain > best_gain:
                best_gain = gain
                best_k = k
        if best_k < 0:
            best_k = rr % k_m
            rr += 1
        x[best_k] += 1
    return x


def greedy_counts(coeffs: ClusterCoeffs, capacity: int) -> np.ndarray:
    """Greedy subcarrier counts for a coefficient set (positional order)."""
    k_m = coeffs.c1.shape[0]
    if k_m > capacity:
        raise InfeasibleError(f"cluster of {k_m} devices exceeds {capacity} subcarriers")
    return _greedy_core(
        coeffs.c1, coeffs.a1, coeffs.c2, coeffs.a2, coeffs.c3, coeffs.a3,
        float(coeffs.local_epochs - 1), capacity,
    )


def allocate_greedy(cluster_devices: Sequence[DeviceState], profile: CutProfile, env: EnvSpec) -> SpectrumAllocation:
    """Greedy allocation of the whole spectrum across one cluster's devices."""
    coeffs = cluster_coeffs(cluster_devices, profile, env)
    x = greedy_counts(coeffs, env.subcarriers)
    return SpectrumAllocation(x={d.id: int(xk) for d, xk in zip(cluster_devices, x)})


_composition_cache: dict[tuple[int, int], np.ndarray] = {}


def _compositions(capacity: int, parts: int) -> np.ndarray:
    """All integer vectors with ``parts`` entries >= 1 summing to <= capacity, in lex order."""
    key = (capacity, parts)
    cached = _composition_cache.get(key)
    if cached is not None:
        return cached
    rows = []
    for total in range(parts, capacity + 1):
        # compositions of `total` into `parts` positive parts via bar positions
        for bars in itertools.combinations(range(1, total), parts - 1):
            bounds = (0,) + bars + (total,)
            rows.append([bounds[i + 1] - bounds[i] for i in range(parts)])
    mat = np.array(rows, dtype=np.int64)
    order = np.lexsort(mat.T[::-1])
    mat = mat[order]
    _composition_cache[key] = mat
    return mat


def exhaustive_counts(coeffs: ClusterCoeffs, capacity: int) -> tuple[np.ndarray, float]:
    """Globally optimal counts by enumeration; refuses oversized instances."""
    k_m = coeffs.c1.shape[0]
    if k_m > capacity:
        raise InfeasibleError(f"cluster of {k_m} devices exceeds {capacity} subcarriers")
    n_rows = math.comb(capacity, k_m)
    if n_rows > EXHAUSTIVE_GUARD:
        raise GuardError(
            f"exhaustive allocation would enumerate {n_rows} candidates (guard {EXHAUSTIVE_GUARD})"
        )
    mat = _compositions(capacity, k_m)
    inv = 1.0 / mat
    w = float(coeffs.local_epochs - 1)
    objective = (
        np.max(coeffs.c1 + coeffs.a1 * inv, axis=1)
        + w * np.max(coeffs.c2 + coeffs.a2 * inv, axis=1)
        + np.max(coeffs.c3 + coeffs.a3 * inv, axis=1)
    )
    best = int(np.argmin(objective))  # first hit == lexicographically smallest tie
    te = coeffs.local_epochs * k_m * coeffs.te_unit
    return mat[best].copy(), float(objective[best] + te)


def allocate_exhaustive(
    cluster_devices: Sequence[DeviceState], profile: CutProfile, env: EnvSpec
) -> SpectrumAllocation:
    """Enumeration oracle over all allocations with x >= 1 and sum(x) <= C."""
    coeffs = cluster_coeffs(cluster_devices, profile, env)
    x, _ = exhaustive_counts(coeffs, env.subcarriers)
    return SpectrumAllocation(x={d.id: int(xk) for d, xk in zip(cluster_devices, x)})


def allocation_total(
    cluster_devices: Sequence[DeviceState], profile: CutProfile, env: EnvSpec, alloc: SpectrumAllocation
) -> float:
    """Cluster latency D_m under a given allocation."""
    coeffs = cluster_coeffs(cluster_devices, profile, env)
    x = np.array([alloc.x[d.id] for d in cluster_devices], dtype=np.int64)
    return coeffs_cluster_total(coeffs, x)
