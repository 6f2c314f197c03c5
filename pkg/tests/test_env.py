import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsl_sim import (
    ConfigError,
    EnvSpec,
    expected_subcarrier_rate,
    heterogeneous_env,
    sample_devices,
    subcarrier_rate,
)
from cpsl_sim.env import F_TRUNCATION_FRACTION

# frozen 1e7-sample Monte-Carlo reference for E[rate] at 17 dB mean, 2 dB std,
# 1 MHz subcarrier (dB-domain Gaussian; generator seed 123456)
RATE_MC_REFERENCE = 5_679_429.998859966


def test_zero_std_draws_equal_means():
    spec = EnvSpec(n_devices=5, f_mean=0.7e9, snr_mean_db=12.0)
    for d in sample_devices(spec, 42):
        assert d.f == 0.7e9
        assert d.snr_db == 12.0


def test_homogeneous_baseline_population(table2_env, hom_devices):
    assert len(hom_devices) == 30
    assert {d.f for d in hom_devices} == {0.5e9}
    assert {d.snr_db for d in hom_devices} == {17.0}
    assert [d.id for d in hom_devices] == list(range(30))


def test_sampling_deterministic_per_seed():
    spec = EnvSpec(n_devices=8, f_std=0.05e9, snr_std_db=2.0)
    a = sample_devices(spec, 7)
    b = sample_devices(spec, 7)
    c = sample_devices(spec, 8)
    assert a == b
    assert a != c


def test_heterogeneous_means_match_uniform_moments():
    # moments of the drawn means against U[0.1,1]e9 and U[5,30] dB
    spec = heterogeneous_env(n_devices=10_000, seed=3)
    f = spec.f_means
    snr = spec.snr_means_db
    assert abs(f.mean() - 0.55e9) < 3 * (0.9e9 / math.sqrt(12)) / 100
    assert abs(snr.mean() - 17.5) < 3 * (25 / math.sqrt(12)) / 100
    assert abs(f.std() - 0.9e9 / math.sqrt(12)) / (0.9e9 / math.sqrt(12)) < 0.05
    assert f.min() >= 0.1e9 and f.max() <= 1.0e9
    assert snr.min() >= 5.0 and snr.max() <= 30.0


def test_capability_truncation_floor():
    spec = EnvSpec(n_devices=200, f_mean=1e9, f_std=1e10)
    devices = sample_devices(spec, 0)
    assert min(d.f for d in devices) >= F_TRUNCATION_FRACTION * 1e9


def test_rate_at_17db():
    r = subcarrier_rate(17.0, 1e6)
    assert r == pytest.approx(5_675_779.901804884, rel=1e-12)
    assert r == pytest.approx(5.676e6, rel=1e-3)


def test_rate_at_30db():
    assert subcarrier_rate(30.0, 1e6) == pytest.approx(9_967_226.258835994, rel=1e-12)
    assert subcarrier_rate(30.0, 1e6) == pytest.approx(9.97e6, rel=1e-3)


def test_rate_at_zero_linear_snr():
    assert subcarrier_rate(-math.inf, 1e6) == 0.0


def test_rate_rejects_nonpositive_bandwidth():
    with pytest.raises(ValueError):
        subcarrier_rate(10.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-40, 60), st.floats(-40, 60))
def test_rate_strictly_increasing_in_snr(a, b):
    if abs(a - b) < 1e-6:  # below float resolution of the rate formula
        return
    lo, hi = sorted([a, b])
    assert subcarrier_rate(lo, 1e6) < subcarrier_rate(hi, 1e6)


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 40), st.floats(1e3, 1e8))
def test_rate_linear_in_bandwidth(snr, w):
    assert subcarrier_rate(snr, w) == pytest.approx(w * subcarrier_rate(snr, 1.0), rel=1e-12)


def test_expected_rate_degenerate_spread_is_exact():
    assert expected_subcarrier_rate(17.0, 0.0, 1e6, n_mc=10) == subcarrier_rate(17.0, 1e6)


def test_expected_rate_converges_to_reference():
    est = expected_subcarrier_rate(17.0, 2.0, 1e6, n_mc=100_000, seed=5)
    assert abs(est - RATE_MC_REFERENCE) / RATE_MC_REFERENCE < 0.01


def test_expected_rate_jensen_bound():
    # concavity: E[log2(1+S)] <= log2(1 + E[S]) with E[S] the lognormal mean
    c = math.log(10.0) / 10.0
    mean_linear = math.exp(c * 17.0 + 0.5 * (c * 2.0) ** 2)
    upper = 1e6 * math.log2(1.0 + mean_linear)
    est = expected_subcarrier_rate(17.0, 2.0, 1e6, n_mc=200_000, seed=11)
    assert est <= upper


def test_expected_rate_rejects_bad_sample_count():
    with pytest.raises(ValueError):
        expected_subcarrier_rate(17.0, 2.0, 1e6, n_mc=0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_devices": 0},
        {"subcarriers": 0},
        {"subcarrier_bandwidth": 0.0},
        {"kappa": 0.0},
        {"server_f": 0.0},
        {"batch": 0},
        {"local_epochs": 0},
        {"cluster_capacity": 0},
        {"n_devices": 3, "cluster_capacity": 5},
        {"f_std": -1.0},
        {"f_mean": (1e9, 2e9)},  # wrong length for 30 devices
        {"f_mean": 0.0},
    ],
)
def test_env_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        EnvSpec(**kwargs)


def test_cluster_count_includes_remainder():
    assert EnvSpec(n_devices=30, cluster_capacity=5).n_clusters == 6
    assert EnvSpec(n_devices=31, cluster_capacity=5).n_clusters == 7
