import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsl_sim import (
    EnvSpec,
    InfeasibleError,
    component_latencies,
    cpsl_round_latency,
    fl_round_latency,
    phase_latencies,
    sample_devices,
    server_latency,
    vanilla_sl_round_latency,
)
from cpsl_sim.latency import cluster_breakdown

from conftest import random_devices, random_profile

# Frozen expectations, computed independently from the component formulas
# with the baseline inputs (0.67 MB device model, 18 KB smashed data,
# 36.1 KB gradient, 5.6/86.01 MFlops, 0.5 GHz devices, 17 dB, 30 x 1 MHz
# subcarriers, batch 16, 100 GHz server, kappa 1).
TAU_B = 0.03147878701389585
TAU_D = 0.1792
TAU_S_X6 = 0.06765590044777615
TAU_E_K5 = 0.137616
TAU_G_X6 = 0.008480479188071943
TAU_T_X6 = 0.15739393506947927
D_START = 0.41595068746167196
D_END = 0.3450744142575512
CPSL_ROUND = 4.566150610315338
SL_PER_DEVICE = 0.46410804995496135
SL_ROUND = 13.92324149864884
FL_DOWNLOAD = 0.7747540266554367
FL_COMPUTE = 5.86304
FL_UPLOAD = 23.242620799663104
FL_ROUND = 29.880414826318543


@pytest.fixture(scope="module")
def p3(override_profiles):
    return override_profiles[2]


@pytest.fixture(scope="module")
def p12(override_profiles):
    return override_profiles[11]


def uniform_alloc(devices, x):
    return {d.id: x for d in devices}


def test_component_latencies_baseline(hom_devices, p3, table2_env):
    c = component_latencies(hom_devices[0], p3, 6, table2_env)
    assert c.tau_b == pytest.approx(TAU_B, rel=1e-12)
    assert c.tau_d == pytest.approx(TAU_D, rel=1e-12)
    assert c.tau_s == pytest.approx(TAU_S_X6, rel=1e-12)
    assert c.tau_g == pytest.approx(TAU_G_X6, rel=1e-12)
    assert c.tau_u == pytest.approx(TAU_D, rel=1e-12)
    assert c.tau_t == pytest.approx(TAU_T_X6, rel=1e-12)
    # the rounded figures these derive from
    assert c.tau_b == pytest.approx(0.0315, abs=1e-4)
    assert c.tau_d == pytest.approx(0.1792, abs=1e-4)
    assert c.tau_s == pytest.approx(0.0677, abs=1e-4)


def test_component_latencies_rejects_zero_subcarriers(hom_devices, p3, table2_env):
    with pytest.raises(ValueError):
        component_latencies(hom_devices[0], p3, 0, table2_env)


def test_server_latency_baseline(p3, p12, table2_env):
    assert server_latency(5, p3, table2_env) == pytest.approx(TAU_E_K5, rel=1e-12)
    assert server_latency(3, p12, table2_env) == 0.0
    one = server_latency(1, p3, table2_env)
    assert server_latency(2, p3, table2_env) == pytest.approx(2 * one, rel=1e-12)
    with pytest.raises(ValueError):
        server_latency(0, p3, table2_env)


def test_phase_latencies_baseline(hom_devices, p3, table2_env):
    cluster = hom_devices[:5]
    d_s, d_i, d_e = phase_latencies(cluster, p3, uniform_alloc(cluster, 6), table2_env)
    assert d_s == pytest.approx(D_START, rel=1e-12)
    assert d_e == pytest.approx(D_END, rel=1e-12)
    assert d_s == pytest.approx(0.416, abs=5e-4)
    assert d_e == pytest.approx(0.345, abs=5e-4)
    # inner phase repeats download + both compute passes + upload
    assert d_i == pytest.approx(TAU_G_X6 + TAU_D + TAU_D + TAU_S_X6 + TAU_E_K5, rel=1e-12)


def test_phase_latencies_single_device_max_is_identity(hom_devices, p3, table2_env):
    dev = hom_devices[0]
    d_s, d_i, d_e = phase_latencies([dev], p3, {dev.id: 6}, table2_env)
    c = component_latencies(dev, p3, 6, table2_env)
    te = server_latency(1, p3, table2_env)
    assert d_s == pytest.approx(c.tau_b + c.tau_d + c.tau_s + te, rel=1e-12)
    assert d_e == pytest.approx(c.tau_g + c.tau_u + c.tau_t, rel=1e-12)


def test_phase_latencies_validates_alloc(hom_devices, p3, table2_env):
    cluster = hom_devices[:5]
    with pytest.raises(ValueError, match="missing"):
        phase_latencies(cluster, p3, {d.id: 6 for d in cluster[:4]}, table2_env)
    with pytest.raises(ValueError, match="capacity"):
        phase_latencies(cluster, p3, uniform_alloc(cluster, 7), table2_env)


def chunk_assignment(devices, size):
    ids = [d.id for d in devices]
    return [tuple(ids[i : i + size]) for i in range(0, len(ids), size)]


def test_cpsl_round_latency_baseline(hom_devices, p3, table2_env):
    assignment = chunk_assignment(hom_devices, 5)
    allocs = {m: uniform_alloc(hom_devices[5 * m : 5 * m + 5], 6) for m in range(6)}
    res = cpsl_round_latency(assignment, allocs, hom_devices, p3, table2_env)
    assert res.scheme == "cpsl"
    assert len(res.clusters) == 6
    assert res.total == pytest.approx(CPSL_ROUND, rel=1e-12)
    assert 2.8 <= res.total <= 4.8
    # additivity: round total is the sum of independent cluster totals
    assert res.total == pytest.approx(sum(b.total for b in res.clusters), rel=1e-15)
    for b in res.clusters:
        assert b.total == pytest.approx(b.d_start + (table2_env.local_epochs - 1) * b.d_inner + b.d_end, rel=1e-15)


def test_cpsl_extra_epoch_adds_inner_phase(hom_devices, p3):
    env1 = EnvSpec()
    env2 = EnvSpec(local_epochs=2)
    assignment = chunk_assignment(hom_devices, 5)
    allocs = {m: uniform_alloc(hom_devices[5 * m : 5 * m + 5], 6) for m in range(6)}
    r1 = cpsl_round_latency(assignment, allocs, hom_devices, p3, env1)
    r2 = cpsl_round_latency(assignment, allocs, hom_devices, p3, env2)
    d_inner = r1.clusters[0].d_inner
    assert r2.total == pytest.approx(r1.total + 6 * d_inner, rel=1e-12)


def test_cpsl_single_cluster_equals_cluster_total(hom_devices, p3):
    env = EnvSpec(n_devices=5, cluster_capacity=5)
    cluster = hom_devices[:5]
    res = cpsl_round_latency([tuple(d.id for d in cluster)], {0: uniform_alloc(cluster, 6)}, cluster, p3, env)
    assert res.total == pytest.approx(res.clusters[0].total, rel=1e-15)


def test_vanilla_sl_round_baseline(hom_devices, p3, table2_env):
    res = vanilla_sl_round_latency(hom_devices, p3, table2_env)
    assert res.scheme == "sl"
    assert len(res.clusters) == 30
    assert res.clusters[0].total == pytest.approx(SL_PER_DEVICE, rel=1e-12)
    assert res.total == pytest.approx(SL_ROUND, rel=1e-12)
    assert res.total == pytest.approx(30 * SL_PER_DEVICE, rel=1e-12)
    assert 10.4 <= res.total <= 17.4


def test_vanilla_sl_is_linear_in_devices(hom_devices, p3, table2_env):
    r10 = vanilla_sl_round_latency(hom_devices[:10], p3, table2_env)
    r20 = vanilla_sl_round_latency(hom_devices[:20], p3, table2_env)
    assert r20.total == pytest.approx(2 * r10.total, rel=1e-12)


def test_vanilla_sl_single_device_is_one_cpsl_visit(hom_devices, p3, table2_env):
    """One sequential visit == a singleton cluster holding the full spectrum:
    the ending-phase model upload plays the handoff role in both."""
    dev = hom_devices[0]
    sl = vanilla_sl_round_latency([dev], p3, table2_env)
    single = cluster_breakdown([dev], p3, {dev.id: table2_env.subcarriers}, table2_env)
    assert sl.total == pytest.approx(single.total, rel=1e-15)


def test_fl_round_baseline(hom_devices, p12, table2_env):
    res = fl_round_latency(hom_devices, p12, table2_env)
    assert res.scheme == "fl"
    assert len(res.fl_devices) == 30
    row = res.fl_devices[0]
    assert row.download == pytest.approx(FL_DOWNLOAD, rel=1e-12)
    assert row.compute == pytest.approx(FL_COMPUTE, rel=1e-12)
    assert row.upload == pytest.approx(FL_UPLOAD, rel=1e-12)
    assert res.total == pytest.approx(FL_ROUND, rel=1e-12)
    assert 25.1 <= res.total <= 41.8
    # full-model size and per-sample workload used by the baseline
    assert p12.xi_d_bits == pytest.approx(16.49e6 * 8, rel=1e-12)
    assert p12.gamma_d_f == pytest.approx(91.6e6, rel=2e-2)


def test_fl_requires_last_cut_profile(hom_devices, p3, table2_env):
    with pytest.raises(ValueError, match="last-layer"):
        fl_round_latency(hom_devices, p3, table2_env)


def test_fl_infeasible_when_devices_exceed_subcarriers(hom_devices, p12):
    env = EnvSpec(subcarriers=29, cluster_capacity=5)
    with pytest.raises(InfeasibleError):
        fl_round_latency(hom_devices, p12, env)


def test_scheme_ordering_baseline(hom_devices, p3, p12, table2_env):
    assignment = chunk_assignment(hom_devices, 5)
    allocs = {m: uniform_alloc(hom_devices[5 * m : 5 * m + 5], 6) for m in range(6)}
    cpsl = cpsl_round_latency(assignment, allocs, hom_devices, p3, table2_env).total
    sl = vanilla_sl_round_latency(hom_devices, p3, table2_env).total
    fl = fl_round_latency(hom_devices, p12, table2_env).total
    assert cpsl < sl < fl


def test_component_rows_serialization(hom_devices, p3, table2_env):
    res = vanilla_sl_round_latency(hom_devices[:2], p3, table2_env)
    rows = res.component_rows()
    assert rows[-1]["component"] == "round_total"
    assert rows[-1]["seconds"] == pytest.approx(res.total)
    per_device = [r for r in rows if r["component"] == "tau_b"]
    assert len(per_device) == 2


# ---------------------------------------------------------------------------
# properties over random instances


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_more_subcarriers_never_hurt(seed, k):
    rng = np.random.default_rng(seed)
    devices = random_devices(rng, k)
    profile = random_profile(rng)
    env = EnvSpec(n_devices=max(k, 1), cluster_capacity=max(k, 1), subcarriers=40,
                  local_epochs=int(rng.integers(1, 4)))
    target = int(rng.integers(0, k))
    base = {d.id: 3 for d in devices}
    more = dict(base)
    more[target] += 1
    d1 = phase_latencies(devices, profile, base, env)
    d2 = phase_latencies(devices, profile, more, env)
    assert all(b <= a + 1e-15 for a, b in zip(d1, d2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_straggler_dominance(seed, k):
    """Replacing a device with a strictly slower one never lowers any phase."""
    rng = np.random.default_rng(seed)
    devices = random_devices(rng, k)
    profile = random_profile(rng)
    env = EnvSpec(n_devices=k, cluster_capacity=k, subcarriers=40)
    alloc = {d.id: 4 for d in devices}
    slow = devices[0].__class__(id=devices[0].id, f=devices[0].f * 0.5, snr_db=devices[0].snr_db - 6.0)
    slowed = [slow] + devices[1:]
    d1 = phase_latencies(devices, profile, alloc, env)
    d2 = phase_latencies(slowed, profile, alloc, env)
    assert all(b >= a - 1e-15 for a, b in zip(d1, d2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_diminishing_gain_in_subcarriers(seed):
    """The latency saved by one more subcarrier shrinks as a device gets more."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 5))
    devices = random_devices(rng, k)
    profile = random_profile(rng)
    env = EnvSpec(n_devices=k, cluster_capacity=k, subcarriers=64,
                  local_epochs=int(rng.integers(1, 4)))
    target = int(rng.integers(0, k))

    def total(x_target):
        alloc = {d.id: 3 for d in devices}
        alloc[target] = x_target
        d_s, d_i, d_e = phase_latencies(devices, profile, alloc, env)
        return d_s + (env.local_epochs - 1) * d_i + d_e

    gains = [total(x) - total(x + 1) for x in range(1, 8)]
    for g_now, g_next in zip(gains, gains[1:]):
        assert g_next <= g_now + 1e-12
