"""Scenario files: one JSON document drives every CLI command.

A scenario bundles the model reference, environment, scheme list, optimizer
controls, trainer hyperparameters, and the master seed. Every field has a
default reproducing the baseline measurement setup, so an empty scenario is
valid. User documents are deep-merged over the defaults; unknown keys are
rejected. The resolved document's hash is stamped into every output file.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import GibbsParams
from .cut_selection import SaaParams
from .env import EnvSpec
from .errors import ConfigError
from .profiler import ModelConfig, lenet_config, load_model_config
from .training import TrainerConfig

_ENV_DEFAULTS = {
    "n_devices": 30,
    "f_mean": 0.5e9,
    "f_std": 0.0,
    "snr_mean_db": 17.0,
    "snr_std_db": 0.0,
    "subcarriers": 30,
    "subcarrier_bandwidth": 1e6,
    "kappa": 1.0,
    "server_f": 100e9,
    "batch": 16,
    "local_epochs": 1,
    "cluster_capacity": 5,
    # optional: draw per-device means uniformly from [lo, hi] (seeded by the
    # master seed) instead of giving explicit f_mean / snr_mean_db values
    "f_mean_range": None,
    "snr_mean_db_range": None,
}

_GIBBS_DEFAULTS = {"delta": 1e-4, "iterations": 1000, "randomized_init": False}

_SAA_DEFAULTS = {
    "j_samples": 30,
    "gibbs": {"delta": 1e-4, "iterations": 300, "randomized_init": False},
    "cuts": None,
}

_TRAINER_DEFAULTS = {
    "eta_d": 0.05,
    "eta_e": 0.25,
    "batch": 16,
    "local_epochs": 1,
    "rounds": 60,
    "n_devices": 30,
    "cluster_capacity": 5,
    "n_classes": 10,
    "dims": 20,
    "samples_per_device": 180,
    "classes_per_device": 3,
    "hidden": [16, 16],
    "cut": 1,
    "test_samples": 1000,
    "class_separation": 2.0,
}

_SCENARIO_DEFAULTS = {
    "seed": 2024,
    "out_dir": "out",
    "cut": 3,
    "use_overrides": True,
    "schemes": ["cpsl", "sl", "fl"],
    "model": {"name": "lenet", "path": None},
    "env": _ENV_DEFAULTS,
    "gibbs": _GIBBS_DEFAULTS,
    "saa": _SAA_DEFAULTS,
    "trainer": _TRAINER_DEFAULTS,
}

# fixed sub-seed tags hung off the master seed
SEED_DEVICES = 11
SEED_GIBBS = 13
SEED_MEANS = 17
SEED_BASELINE = 19


def _merge(defaults: dict, user: dict, prefix: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown scenario field '{prefix}{key}'")
        if isinstance(defaults[key], dict) and isinstance(value, dict) and defaults[key]:
            out[key] = _merge(defaults[key], value, f"{prefix}{key}.")
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class Scenario:
    """A fully resolved experiment description."""

    seed: int
    out_dir: str
    cut: int
    use_overrides: bool
    schemes: tuple[str, ...]
    model: ModelConfig
    env: EnvSpec
    gibbs: GibbsParams
    saa: SaaParams
    trainer: TrainerConfig
    resolved: dict

    @property
    def hash(self) -> str:
        canonical = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def header_lines(self) -> list[str]:
        return [f"scenario={self.hash} seed={self.seed}"]


def _build_env(block: dict, seed: int) -> EnvSpec:
    block = dict(block)
    f_range = block.pop("f_mean_range")
    snr_range = block.pop("snr_mean_db_range")
    if f_range is not None or snr_range is not None:
        rng = np.random.default_rng(np.random.SeedSequence([seed, SEED_MEANS]))
        n = block["n_devices"]
        if f_range is not None:
            block["f_mean"] = tuple(rng.uniform(f_range[0], f_range[1], size=n))
        if snr_range is not None:
            block["snr_mean_db"] = tuple(rng.uniform(snr_range[0], snr_range[1], size=n))
    for key in ("f_mean", "snr_mean_db"):
        if isinstance(block[key], list):
            block[key] = tuple(block[key])
    try:
        return EnvSpec(**block)
    except TypeError as exc:
        raise ConfigError(f"bad env block: {exc}") from exc


def load_scenario(source: dict | str | Path | None = None, seed_override: int | None = None) -> Scenario:
    """Build a Scenario from a JSON file, a dict, or the built-in defaults."""
    if source is None:
        user: dict = {}
    elif isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"scenario file not found: {path}")
        try:
            user = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario {path} is not valid JSON: {exc}") from exc
    else:
        user = source
    if not isinstance(user, dict):
        raise ConfigError("scenario document must be a JSON object")

    resolved = _merge(_SCENARIO_DEFAULTS, user, "")
    if seed_override is not None:
        resolved["seed"] = seed_override
    seed = resolved["seed"]
    if not isinstance(seed, int):
        raise ConfigError("scenario field 'seed' must be an integer (no wall-clock seeding)")

    model_block = resolved["model"]
    if model_block.get("path"):
        model = load_model_config(model_block["path"])
    elif model_block.get("name", "lenet") == "lenet":
        model = lenet_config()
    else:
        raise ConfigError(f"unknown built-in model {model_block.get('name')!r}")

    cut = resolved["cut"]
    if not isinstance(cut, int) or not 1 <= cut <= len(model.layers):
        raise ConfigError(f"scenario field 'cut' must be in 1..{len(model.layers)}")

    schemes = resolved["schemes"]
    known = {"cpsl", "sl", "fl", "cl"}
    if not isinstance(schemes, list) or not schemes or any(s not in known for s in schemes):
        raise ConfigError(f"scenario field 'schemes' must be a non-empty subset of {sorted(known)}")

    env = _build_env(resolved["env"], seed)

    gibbs_block = resolved["gibbs"]
    gibbs = GibbsParams(
        delta=gibbs_block["delta"],
        iterations=gibbs_block["iterations"],
        seed=np.random.SeedSequence([seed, SEED_GIBBS]),
        randomized_init=gibbs_block["randomized_init"],
    )

    saa_block = resolved["saa"]
    saa = SaaParams(
        j_samples=saa_block["j_samples"],
        seed=seed,
        gibbs=GibbsParams(
            delta=saa_block["gibbs"]["delta"],
            iterations=saa_block["gibbs"]["iterations"],
            randomized_init=saa_block["gibbs"]["randomized_init"],
        ),
        cuts=tuple(saa_block["cuts"]) if saa_block["cuts"] else None,
    )

    trainer_block = dict(resolved["trainer"])
    trainer_block["hidden"] = tuple(trainer_block["hidden"])
    trainer = TrainerConfig(seed=seed, **trainer_block)

    return Scenario(
        seed=seed,
        out_dir=resolved["out_dir"],
        cut=cut,
        use_overrides=resolved["use_overrides"],
        schemes=tuple(schemes),
        model=model,
        env=env,
        gibbs=gibbs,
        saa=saa,
        trainer=trainer,
        resolved=resolved,
    )
