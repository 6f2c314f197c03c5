import numpy as np
import pytest

from cpsl_sim import EnvSpec, lenet_config, profile_model, sample_devices


@pytest.fixture(scope="session")
def lenet():
    return lenet_config()


@pytest.fixture(scope="session")
def table2_env():
    """Homogeneous baseline environment (defaults)."""
    return EnvSpec()


@pytest.fixture(scope="session")
def override_profiles(lenet, table2_env):
    return profile_model(lenet, table2_env.batch, use_overrides=True)


@pytest.fixture(scope="session")
def computed_profiles(lenet, table2_env):
    return profile_model(lenet, table2_env.batch, use_overrides=False)


@pytest.fixture(scope="session")
def hom_devices(table2_env):
    return sample_devices(table2_env, 0)


def random_profile(rng):
    """A plausible random cut profile for property tests."""
    from cpsl_sim import CutProfile

    g_d = rng.uniform(1e5, 5e7)
    g_s = rng.uniform(0, 5e7)
    return CutProfile(
        cut=1,
        xi_d_bits=rng.uniform(1e4, 2e7),
        xi_s_bits=rng.uniform(1e3, 1e6),
        xi_g_bits=rng.uniform(1e3, 1e7),
        gamma_d_f=g_d,
        gamma_d_b=g_d,
        gamma_s_f=g_s,
        gamma_s_b=g_s,
    )


def random_devices(rng, n):
    from cpsl_sim import DeviceState

    return [
        DeviceState(id=i, f=rng.uniform(0.05e9, 2e9), snr_db=rng.uniform(-5.0, 35.0))
        for i in range(n)
    ]
