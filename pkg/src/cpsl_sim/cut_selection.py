"""Large-timescale cut-layer selection by sample average approximation.

Draws J network-state samples, solves the per-round clustering/allocation
problem for every candidate cut on every sample, and picks the cut with the
smallest mean round latency. Sub-seeds derive from the master seed by
sample index, so the whole sweep is reproducible and the (sample, cut) grid
can be evaluated in parallel without changing results.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .clustering import GibbsParams, gibbs_cluster
from .env import EnvSpec, sample_devices
from .errors import ConfigError
from .profiler import CutProfile, ModelConfig, profile_model


@dataclass(frozen=True)
class SaaParams:
    """Sampling controls for the cut-layer search."""

    j_samples: int = 30
    seed: int = 0
    gibbs: GibbsParams = field(default_factory=GibbsParams)
    cuts: tuple[int, ...] | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.j_samples < 1:
            raise ConfigError("saa.j_samples must be >= 1")
        if self.jobs < 1:
            raise ConfigError("saa.jobs must be >= 1")


@dataclass(frozen=True)
class CutStats:
    cut: int
    layer: str
    mean_latency_s: float
    std_latency_s: float
    samples: tuple[float, ...]


@dataclass(frozen=True)
class CutLatencyTable:
    entries: tuple[CutStats, ...]

    def rows(self) -> list[dict]:
        return [
            {
                "cut": e.cut,
                "layer": e.layer,
                "mean_latency_s": e.mean_latency_s,
                "std_latency_s": e.std_latency_s,
            }
            for e in self.entries
        ]

    def write_csv(self, fileobj, header_lines: Sequence[str] = ()) -> None:
        for line in header_lines:
            fileobj.write(f"# {line}\n")
        writer = csv.DictWriter(fileobj, fieldnames=["cut", "layer", "mean_latency_s", "std_latency_s"])
        writer.writeheader()
        writer.writerows(self.rows())


def _sample_worker(args) -> np.ndarray:
    profiles, env, gibbs, seed, j = args
    dev_ss, gibbs_ss = np.random.SeedSequence([seed, j]).spawn(2)
    devices = sample_devices(env, dev_ss)
    thetas = np.zeros(len(profiles))
    for i, profile in enumerate(profiles):
        params = replace(gibbs, seed=gibbs_ss, record_trace=False)
        thetas[i] = gibbs_cluster(devices, profile, env, params).theta
    return thetas


def select_cut(
    model: ModelConfig,
    env_spec: EnvSpec,
    params: SaaParams,
    use_overrides: bool = False,
) -> tuple[int, CutLatencyTable]:
    """Pick the cut minimizing mean per-round latency over J sampled states.

    Returns the winning 1-based cut index (lowest index on ties) and the
    full per-cut table for plotting. By default the sweep uses computed
    profiles so every cut is scored under one convention; pass
    ``use_overrides=True`` to score reported profile values where present.
    """
    all_profiles = profile_model(model, env_spec.batch, use_overrides=use_overrides)
    if params.cuts is not None:
        wanted = set(params.cuts)
        bad = wanted - {p.cut for p in all_profiles}
        if bad:
            raise ConfigError(f"candidate cuts {sorted(bad)} not in model (1..{len(all_profiles)})")
        profiles = [p for p in all_profiles if p.cut in wanted]
    else:
        profiles = all_profiles

    jobs_args = [(profiles, env_spec, params.gibbs, params.seed, j) for j in range(params.j_samples)]
    if params.jobs > 1:
        with ProcessPoolExecutor(max_workers=params.jobs) as pool:
            per_sample = list(pool.map(_sample_worker, jobs_args))
    else:
        per_sample = [_sample_worker(a) for a in jobs_args]

    matrix = np.stack(per_sample, axis=0)  # (J, n_cuts)
    means = matrix.mean(axis=0)
    stds = matrix.std(axis=0, ddof=1) if params.j_samples > 1 else np.zeros(len(profiles))

    names = {l.index: l.label() for l in model.layers}
    entries = tuple(
        CutStats(
            cut=p.cut,
            layer=names.get(p.cut, f"L{p.cut}"),
            mean_latency_s=float(means[i]),
            std_latency_s=float(stds[i]),
            samples=tuple(float(t) for t in matrix[:, i]),
        )
        for i, p in enumerate(profiles)
    )

    best_i = 0
    for i in range(1, len(entries)):
        if entries[i].mean_latency_s < entries[best_i].mean_latency_s:
            best_i = i
    return entries[best_i].cut, CutLatencyTable(entries=entries)
