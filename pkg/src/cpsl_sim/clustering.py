"""Joint device clustering and spectrum allocation.

A Gibbs-sampling chain over balanced cluster assignments: each iteration
swaps two devices between two random clusters, re-runs greedy spectrum
allocation for the affected clusters, and accepts the move with a sigmoid
probability controlled by the smooth factor delta. Small delta approaches
hill climbing; the best assignment ever visited is returned. An exhaustive
enumerator over balanced partitions provides the validation oracle, and the
random/similar-capability baselines used for benchmarking live here too.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import DeviceState, EnvSpec
from .errors import ConfigError, GuardError
from .latency import cluster_coeffs, coeffs_cluster_total
from .profiler import CutProfile
from .spectrum import EXHAUSTIVE_GUARD, SpectrumAllocation, exhaustive_counts, greedy_counts

PARTITION_GUARD = 100_000


@dataclass(frozen=True)
class ClusterAssignment:
    """A partition of device ids into clusters (one remainder cluster allowed)."""

    clusters: tuple[tuple[int, ...], ...]

    def as_matrix(self, n_devices: int) -> np.ndarray:
        a = np.zeros((n_devices, len(self.clusters)), dtype=np.int8)
        for m, members in enumerate(self.clusters):
            for dev in members:
                a[dev, m] = 1
        return a

    def validate(self, n_devices: int, capacity: int) -> None:
        seen = [dev for members in self.clusters for dev in members]
        if sorted(seen) != list(range(n_devices)):
            raise ConfigError("assignment must cover every device exactly once")
        sizes = sorted(len(members) for members in self.clusters)
        expected = cluster_sizes(n_devices, capacity)
        if sizes != sorted(expected):
            raise ConfigError(f"cluster sizes {sizes} violate capacity pattern {expected}")

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)


def cluster_sizes(n_devices: int, capacity: int) -> list[int]:
    """Cluster size pattern: full clusters of ``capacity`` plus one remainder."""
    if capacity < 1:
        raise ConfigError("cluster capacity must be >= 1")
    if n_devices < capacity:
        raise ConfigError(f"{n_devices} devices cannot fill a cluster of {capacity}")
    sizes = [capacity] * (n_devices // capacity)
    if n_devices % capacity:
        sizes.append(n_devices % capacity)
    return sizes


def chunked_assignment(device_ids: Sequence[int], capacity: int) -> ClusterAssignment:
    ids = sorted(device_ids)
    sizes = cluster_sizes(len(ids), capacity)
    clusters, start = [], 0
    for size in sizes:
        clusters.append(tuple(ids[start : start + size]))
        start += size
    return ClusterAssignment(clusters=tuple(clusters))


def random_assignment(n_devices: int, capacity: int, rng) -> ClusterAssignment:
    ids = list(np.random.default_rng(rng).permutation(n_devices)) if not hasattr(rng, "permutation") else list(rng.permutation(n_devices))
    sizes = cluster_sizes(n_devices, capacity)
    clusters, start = [], 0
    for size in sizes:
        clusters.append(tuple(int(i) for i in ids[start : start + size]))
        start += size
    return ClusterAssignment(clusters=tuple(clusters))


def heuristic_assignment(devices: Sequence[DeviceState], capacity: int) -> ClusterAssignment:
    """Benchmark grouping: devices with similar computing capability together."""
    order = sorted(devices, key=lambda d: (d.f, d.id))
    return chunked_assignment_from_order([d.id for d in order], capacity)


def chunked_assignment_from_order(ordered_ids: Sequence[int], capacity: int) -> ClusterAssignment:
    sizes = cluster_sizes(len(ordered_ids), capacity)
    clusters, start = [], 0
    for size in sizes:
        clusters.append(tuple(ordered_ids[start : start + size]))
        start += size
    return ClusterAssignment(clusters=tuple(clusters))


@dataclass(frozen=True)
class GibbsParams:
    """Chain controls: smooth factor, iteration budget, seeding."""

    delta: float = 1e-4
    iterations: int = 1000
    seed: object = 0
    randomized_init: bool = False
    record_trace: bool = False

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError("gibbs.delta must be > 0")
        if self.iterations < 1:
            raise ConfigError("gibbs.iterations must be >= 1")


@dataclass(frozen=True)
class GibbsResult:
    assignment: ClusterAssignment
    allocations: dict[int, SpectrumAllocation]
    theta: float
    final_theta: float
    final_assignment: ClusterAssignment
    trace: dict[str, np.ndarray] | None = None


def acceptance_probability(theta_old: float, theta_new: float, delta: float) -> float:
    """Sigmoid move-acceptance probability; 0.5 at equal objectives.

    Saturates to 0.0 / 1.0 for extreme differences instead of overflowing.
    """
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if theta_new == theta_old:
        return 0.5
    z = (theta_new - theta_old) / delta
    if z >= 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


def _pick_distinct_pair(rng, m: int) -> tuple[int, int]:
    # uniform unordered pair via ordered draw without replacement
    first = int(rng.integers(m))
    second = int(rng.integers(m - 1))
    if second >= first:
        second += 1
    return first, second


def propose_swap(assignment: ClusterAssignment, rng) -> ClusterAssignment:
    """Exchange two devices between two distinct uniformly-random clusters."""
    m = assignment.n_clusters
    if m < 2:
        warnings.warn("swap proposal needs at least two clusters; assignment unchanged")
        return assignment
    m1, m2 = _pick_distinct_pair(rng, m)
    c1 = list(assignment.clusters[m1])
    c2 = list(assignment.clusters[m2])
    i1 = int(rng.integers(len(c1)))
    i2 = int(rng.integers(len(c2)))
    c1[i1], c2[i2] = c2[i2], c1[i1]
    clusters = list(assignment.clusters)
    clusters[m1] = tuple(c1)
    clusters[m2] = tuple(c2)
    return ClusterAssignment(clusters=tuple(clusters))


class _ChainState:
    """Mutable chain state over device positions with cached cluster latencies."""

    def __init__(self, devices, profile, env):
        self.env = env
        self.coeffs = cluster_coeffs(devices, profile, env)
        self.ids = np.array([d.id for d in devices], dtype=np.int64)

    def cluster_eval(self, members: np.ndarray) -> tuple[np.ndarray, float]:
        c = self.coeffs
        sub = type(c)(
            c1=c.c1[members], a1=c.a1[members],
            c2=c.c2[members], a2=c.a2[members],
            c3=c.c3[members], a3=c.a3[members],
            te_unit=c.te_unit, local_epochs=c.local_epochs,
        )
        x = greedy_counts(sub, self.env.subcarriers)
        return x, coeffs_cluster_total(sub, x)


def gibbs_cluster(
    devices: Sequence[DeviceState], profile: CutProfile, env: EnvSpec, params: GibbsParams
) -> GibbsResult:
    """Run the joint clustering + allocation chain; returns the best visit.

    The initial assignment chunks devices by id (or a seeded permutation
    when ``randomized_init``). Each iteration re-allocates only the two
    clusters touched by the proposed swap; untouched clusters keep their
    cached allocation, which is exact because clusters share no state.
    """
    n = len(devices)
    sizes = cluster_sizes(n, env.cluster_capacity)
    n_clusters = len(sizes)
    rng = np.random.default_rng(params.seed)
    state = _ChainState(devices, profile, env)

    positions = np.arange(n)
    if params.randomized_init:
        positions = rng.permutation(n)
    clusters: list[np.ndarray] = []
    start = 0
    for size in sizes:
        clusters.append(positions[start : start + size].copy())
        start += size

    counts = []
    d_m = np.zeros(n_clusters)
    for m, members in enumerate(clusters):
        x, total = state.cluster_eval(members)
        counts.append(x)
        d_m[m] = total
    theta = float(d_m.sum())

    def snapshot():
        return (
            [c.copy() for c in clusters],
            [x.copy() for x in counts],
            theta,
        )

    best_clusters, best_counts, best_theta = snapshot()

    g = params.iterations
    trace = None
    if params.record_trace:
        trace = {
            "iteration": np.arange(1, g + 1),
            "theta": np.zeros(g),
            "best_theta": np.zeros(g),
            "accepted": np.zeros(g, dtype=bool),
        }

    if n_clusters >= 2:
        for it in range(g):
            m1, m2 = _pick_distinct_pair(rng, n_clusters)
            i1 = int(rng.integers(len(clusters[m1])))
            i2 = int(rng.integers(len(clusters[m2])))
            trial1 = clusters[m1].copy()
            trial2 = clusters[m2].copy()
            trial1[i1], trial2[i2] = trial2[i2], trial1[i1]
            x1, new1 = state.cluster_eval(trial1)
            x2, new2 = state.cluster_eval(trial2)
            theta_new = theta - float(d_m[m1]) - float(d_m[m2]) + new1 + new2
            eps = acceptance_probability(theta, theta_new, params.delta)
            accepted = rng.random() < eps
            if accepted:
                clusters[m1], clusters[m2] = trial1, trial2
                counts[m1], counts[m2] = x1, x2
                d_m[m1], d_m[m2] = new1, new2
                theta = float(d_m.sum())
                if theta < best_theta:
                    best_clusters, best_counts, best_theta = snapshot()
            if trace is not None:
                trace["theta"][it] = theta
                trace["best_theta"][it] = best_theta
                trace["accepted"][it] = accepted
    elif trace is not None:
        for key in ("theta", "best_theta"):
            trace[key][:] = theta

    def to_public(cluster_list, count_list):
        assignment = ClusterAssignment(
            clusters=tuple(tuple(int(state.ids[p]) for p in members) for members in cluster_list)
        )
        allocations = {
            m: SpectrumAllocation(
                x={int(state.ids[p]): int(xk) for p, xk in zip(members, count_list[m])}
            )
            for m, members in enumerate(cluster_list)
        }
        return assignment, allocations

    best_assignment, best_allocs = to_public(best_clusters, best_counts)
    final_assignment, _ = to_public(clusters, counts)
    return GibbsResult(
        assignment=best_assignment,
        allocations=best_allocs,
        theta=float(best_theta),
        final_theta=float(theta),
        final_assignment=final_assignment,
        trace=trace,
    )


def evaluate_assignment(
    devices: Sequence[DeviceState], profile: CutProfile, env: EnvSpec, assignment: ClusterAssignment
) -> tuple[dict[int, SpectrumAllocation], float]:
    """Greedy allocations and round latency for a fixed assignment."""
    state = _ChainState(devices, profile, env)
    pos_of = {int(i): p for p, i in enumerate(state.ids)}
    allocations = {}
    theta = 0.0
    for m, members in enumerate(assignment.clusters):
        positions = np.array([pos_of[i] for i in members], dtype=np.int64)
        x, total = state.cluster_eval(positions)
        allocations[m] = SpectrumAllocation(x={int(i): int(xk) for i, xk in zip(members, x)})
        theta += total
    return allocations, float(theta)


def count_balanced_partitions(n: int, capacity: int) -> int:
    sizes = cluster_sizes(n, capacity)
    full = sum(1 for s in sizes if s == capacity)
    rem = n % capacity
    count = 1
    if rem:
        count *= math.comb(n, rem)
    count *= math.factorial(n - rem) // (math.factorial(capacity) ** full * math.factorial(full))
    return count


def _balanced_partitions(ids: tuple[int, ...], size: int):
    """Unlabeled partitions into groups of ``size``; anchors the lowest id."""
    if not ids:
        yield ()
        return
    anchor, rest = ids[0], ids[1:]
    import itertools

    for companions in itertools.combinations(rest, size - 1):
        group = (anchor,) + companions
        remaining = tuple(i for i in rest if i not in companions)
        for tail in _balanced_partitions(remaining, size):
            yield (group,) + tail


def cluster_exhaustive(
    devices: Sequence[DeviceState], profile: CutProfile, env: EnvSpec
) -> tuple[ClusterAssignment, dict[int, SpectrumAllocation], float]:
    """Global optimum over all balanced partitions (per-cluster allocation oracle).

    Falls back to greedy allocation for clusters whose exhaustive allocation
    would exceed its own guard. Refuses instances with more than
    ``PARTITION_GUARD`` partitions.
    """
    n = len(devices)
    capacity = env.cluster_capacity
    n_partitions = count_balanced_partitions(n, capacity)
    if n_partitions > PARTITION_GUARD:
        raise GuardError(f"{n_partitions} balanced partitions exceed guard {PARTITION_GUARD}")

    coeff_state = _ChainState(devices, profile, env)
    pos_of = {int(i): p for p, i in enumerate(coeff_state.ids)}
    ids = tuple(sorted(pos_of))
    rem = n % capacity

    cache: dict[frozenset, tuple[np.ndarray, float]] = {}

    def eval_group(group: tuple[int, ...]) -> tuple[np.ndarray, float]:
        key = frozenset(group)
        hit = cache.get(key)
        if hit is not None:
            return hit
        positions = np.array([pos_of[i] for i in group], dtype=np.int64)
        c = coeff_state.coeffs
        sub = type(c)(
            c1=c.c1[positions], a1=c.a1[positions],
            c2=c.c2[positions], a2=c.a2[positions],
            c3=c.c3[positions], a3=c.a3[positions],
            te_unit=c.te_unit, local_epochs=c.local_epochs,
        )
        if math.comb(env.subcarriers, len(group)) <= EXHAUSTIVE_GUARD:
            x, total = exhaustive_counts(sub, env.subcarriers)
        else:
            x = greedy_counts(sub, env.subcarriers)
            total = coeffs_cluster_total(sub, x)
        cache[key] = (x, total)
        return x, total

    import itertools

    def partitions():
        if rem:
            for rem_group in itertools.combinations(ids, rem):
                rest = tuple(i for i in ids if i not in rem_group)
                for balanced in _balanced_partitions(rest, capacity):
                    yield balanced + (rem_group,)
        else:
            yield from _balanced_partitions(ids, capacity)

    best = None
    for partition in partitions():
        theta = 0.0
        for group in partition:
            theta += eval_group(group)[1]
        if best is None or theta < best[0]:
            best = (theta, partition)

    theta, partition = best
    assignment = ClusterAssignment(clusters=partition)
    allocations = {
        m: SpectrumAllocation(x={int(i): int(xk) for i, xk in zip(group, eval_group(group)[0])})
        for m, group in enumerate(partition)
    }
    return assignment, allocations, float(theta)
