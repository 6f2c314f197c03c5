"""Command-line entry point: reproducible experiments with file outputs.

Subcommands: profile, latency, optimize, train, sweep. Every output file
carries the scenario hash and master seed in a header comment, and reruns
with the same inputs are byte-identical. Exit codes: 0 success, 2 config or
validation error, 3 infeasible instance, 4 oracle guard refusal.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import clustering, latency
from .cut_selection import SaaParams, select_cut
from .env import EnvSpec, sample_devices
from .errors import ConfigError, GuardError, InfeasibleError
from .profiler import profile_model, profiles_to_rows, write_profiles_csv
from .scenario import SEED_BASELINE, SEED_DEVICES, Scenario, load_scenario
from .spectrum import SpectrumAllocation
from .training import SCHEMES, run_training

REFERENCE_LATENCY_S = {"cpsl": 3.78, "sl": 13.90, "fl": 33.43}


def _write_csv(path: Path, header_lines, fieldnames, rows) -> None:
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _write_json(path: Path, scenario: Scenario, payload: dict) -> None:
    doc = {"scenario_hash": scenario.hash, "seed": scenario.seed}
    doc.update(payload)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out_dir(scenario: Scenario, args) -> Path:
    out = Path(args.out) if args.out else Path(scenario.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario_devices(scenario: Scenario, env: EnvSpec | None = None):
    return sample_devices(env or scenario.env, np.random.SeedSequence([scenario.seed, SEED_DEVICES]))


def _profiles(scenario: Scenario, env: EnvSpec, use_overrides: bool):
    return profile_model(scenario.model, env.batch, use_overrides=use_overrides)


def _scheme_round_latencies(scenario: Scenario, env: EnvSpec) -> dict[str, latency.RoundLatency]:
    devices = _scenario_devices(scenario, env)
    profiles = _profiles(scenario, env, scenario.use_overrides)
    cut_profile = profiles[scenario.cut - 1]
    last_profile = profiles[-1]
    results: dict[str, latency.RoundLatency] = {}
    for scheme in scenario.schemes:
        if scheme == "cpsl":
            run = clustering.gibbs_cluster(devices, cut_profile, env, scenario.gibbs)
            results[scheme] = latency.cpsl_round_latency(run.assignment, run.allocations, devices, cut_profile, env)
        elif scheme == "sl":
            results[scheme] = latency.vanilla_sl_round_latency(devices, cut_profile, env)
        elif scheme == "fl":
            results[scheme] = latency.fl_round_latency(devices, last_profile, env)
    return results


def cmd_profile(scenario: Scenario, args) -> int:
    out = _out_dir(scenario, args)
    use_overrides = scenario.use_overrides and not args.no_overrides
    profiles = _profiles(scenario, scenario.env, use_overrides)
    if args.cut is not None:
        if not 1 <= args.cut <= len(profiles):
            raise ConfigError(f"--cut must be in 1..{len(profiles)}")
        profiles = [profiles[args.cut - 1]]
    path = out / "profiles.csv"
    with path.open("w", newline="") as fh:
        write_profiles_csv(profiles, scenario.model.layers, fh, scenario.header_lines())
    print(f"wrote {path} ({len(profiles)} cut profile(s))")
    return 0


def cmd_latency(scenario: Scenario, args) -> int:
    if args.sweep_cut:
        return cmd_sweep(scenario, args)
    env = scenario.env
    if args.devices is not None or args.clusters is not None:
        n = args.devices if args.devices is not None else env.n_devices
        m = args.clusters if args.clusters is not None else max(1, n // env.cluster_capacity)
        if m < 1 or m > n:
            raise ConfigError("--clusters must be between 1 and the device count")
        means_f = env.f_means[:1].item()
        means_snr = env.snr_means_db[:1].item()
        env = replace(
            env, n_devices=n, cluster_capacity=-(-n // m), f_mean=means_f, snr_mean_db=means_snr
        )
    out = _out_dir(scenario, args)
    results = _scheme_round_latencies(scenario, env)

    rows = [row for res in results.values() for row in res.component_rows()]
    _write_csv(out / "latency_breakdown.csv", scenario.header_lines(),
               ["scheme", "cluster", "device", "component", "seconds"], rows)
    _write_json(
        out / "latency_summary.json",
        scenario,
        {
            "cut": scenario.cut,
            "schemes": {name: res.total for name, res in results.items()},
            "reference_s": {k: v for k, v in REFERENCE_LATENCY_S.items() if k in results},
        },
    )
    for name, res in results.items():
        print(f"{name}: {res.total:.3f} s")
    print(f"wrote {out / 'latency_breakdown.csv'} and {out / 'latency_summary.json'}")
    return 0


def cmd_optimize(scenario: Scenario, args) -> int:
    out = _out_dir(scenario, args)
    env = scenario.env
    devices = _scenario_devices(scenario)
    profiles = _profiles(scenario, env, scenario.use_overrides)
    cut_profile = profiles[scenario.cut - 1]

    gibbs_params = scenario.gibbs
    if args.iterations is not None:
        gibbs_params = replace(gibbs_params, iterations=args.iterations)
    gibbs_params = replace(gibbs_params, record_trace=True)
    run = clustering.gibbs_cluster(devices, cut_profile, env, gibbs_params)

    trace_rows = [
        {
            "iteration": int(it),
            "theta_s": float(th),
            "best_theta_s": float(bt),
            "accepted": int(ac),
        }
        for it, th, bt, ac in zip(
            run.trace["iteration"], run.trace["theta"], run.trace["best_theta"], run.trace["accepted"]
        )
    ]
    _write_csv(out / "gibbs_trace.csv", scenario.header_lines(),
               ["iteration", "theta_s", "best_theta_s", "accepted"], trace_rows)

    payload = {
        "theta_s": run.theta,
        "final_theta_s": run.final_theta,
        "clusters": [list(c) for c in run.assignment.clusters],
        "allocations": {str(m): {str(k): v for k, v in a.x.items()} for m, a in run.allocations.items()},
    }

    if args.oracle:
        oracle_assignment, oracle_allocs, oracle_theta = clustering.cluster_exhaustive(devices, cut_profile, env)
        payload["oracle_theta_s"] = oracle_theta
        payload["oracle_clusters"] = [list(c) for c in oracle_assignment.clusters]

    if args.baseline:
        n_seeds = args.seeds
        proposed, baseline = [], []
        for s in range(n_seeds):
            sample_seed = np.random.SeedSequence([scenario.seed, SEED_BASELINE, s])
            gibbs_seed, baseline_seed = sample_seed.spawn(2)
            devs = sample_devices(env, sample_seed)
            run_s = clustering.gibbs_cluster(
                devs, cut_profile, env, replace(scenario.gibbs, seed=gibbs_seed)
            )
            proposed.append(run_s.theta)
            if args.baseline == "random":
                rng = np.random.default_rng(baseline_seed)
                assignment = clustering.random_assignment(env.n_devices, env.cluster_capacity, rng)
            else:
                assignment = clustering.heuristic_assignment(devs, env.cluster_capacity)
            _, theta_b = clustering.evaluate_assignment(devs, cut_profile, env, assignment)
            baseline.append(theta_b)
        payload["baseline"] = {
            "kind": args.baseline,
            "seeds": n_seeds,
            "mean_proposed_s": float(np.mean(proposed)),
            "mean_baseline_s": float(np.mean(baseline)),
            "mean_reduction": float(1.0 - np.mean(proposed) / np.mean(baseline)),
        }

    _write_json(out / "assignment.json", scenario, payload)
    print(f"theta = {run.theta:.4f} s (final {run.final_theta:.4f} s)")
    print(f"wrote {out / 'gibbs_trace.csv'} and {out / 'assignment.json'}")
    return 0


def cmd_train(scenario: Scenario, args) -> int:
    out = _out_dir(scenario, args)
    schemes = args.schemes.split(",") if args.schemes else list(scenario.schemes)
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise ConfigError(f"unknown training scheme {scheme!r}")
    cfg = scenario.trainer
    if args.rounds is not None:
        cfg = replace(cfg, rounds=args.rounds)

    wireless = {s: None for s in schemes}
    latency_env = replace(
        scenario.env, n_devices=cfg.n_devices, cluster_capacity=cfg.cluster_capacity,
        f_mean=scenario.env.f_means[:1].item(), snr_mean_db=scenario.env.snr_means_db[:1].item(),
        batch=cfg.batch, local_epochs=cfg.local_epochs,
    )
    lat_scenario = replace(scenario, env=latency_env, schemes=tuple(s for s in schemes if s != "cl"))
    if lat_scenario.schemes:
        for name, res in _scheme_round_latencies(lat_scenario, latency_env).items():
            wireless[name] = res.total

    for scheme in schemes:
        metrics = run_training(scheme, cfg, round_latency_s=wireless.get(scheme))
        path = out / f"metrics_{scheme}.csv"
        _write_csv(path, scenario.header_lines(),
                   ["round", "loss", "train_acc", "test_acc", "simulated_elapsed_s"], metrics.rows())
        print(f"{scheme}: final test acc {metrics.test_acc[-1]:.3f} -> {path}")
    return 0


def cmd_sweep(scenario: Scenario, args) -> int:
    out = _out_dir(scenario, args)
    params = replace(scenario.saa, jobs=args.jobs or scenario.saa.jobs)
    best_cut, table = select_cut(scenario.model, scenario.env, params, use_overrides=False)
    path = out / "cut_sweep.csv"
    with path.open("w", newline="") as fh:
        table.write_csv(fh, scenario.header_lines())
    names = {l.index: l.label() for l in scenario.model.layers}
    print(f"best cut: {best_cut} ({names.get(best_cut)})")
    print(f"wrote {path}")
    return 0


def _add_common(sub):
    sub.add_argument("--config", type=str, default=None, help="scenario JSON path")
    sub.add_argument("--default", action="store_true", help="run the built-in default scenario")
    sub.add_argument("--seed", type=int, default=None, help="override the scenario master seed")
    sub.add_argument("--out", type=str, default=None, help="output directory")
    sub.add_argument("--jobs", type=int, default=None, help="worker cap for parallel sections")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpsl-sim", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("profile", help="per-cut sizes and workloads as CSV")
    _add_common(p)
    p.add_argument("--cut", type=int, default=None, help="emit a single cut only")
    p.add_argument("--no-overrides", action="store_true", help="force computed profile values")

    p = subparsers.add_parser("latency", help="per-round latency of the configured schemes")
    _add_common(p)
    p.add_argument("--sweep-cut", action="store_true", help="emit the per-cut mean-latency table instead")
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--devices", type=int, default=None)

    p = subparsers.add_parser("optimize", help="joint clustering + spectrum allocation")
    _add_common(p)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--baseline", choices=["random", "heuristic"], default=None)
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--oracle", action="store_true", help="also run the exhaustive clustering oracle")

    p = subparsers.add_parser("train", help="toy split training for the configured schemes")
    _add_common(p)
    p.add_argument("--schemes", type=str, default=None, help="comma-separated subset of cpsl,sl,fl,cl")
    p.add_argument("--rounds", type=int, default=None)

    p = subparsers.add_parser("sweep", help="cut-layer sweep (mean latency per cut)")
    _add_common(p)
    return parser


_COMMANDS = {
    "profile": cmd_profile,
    "latency": cmd_latency,
    "optimize": cmd_optimize,
    "train": cmd_train,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.config, seed_override=args.seed)
        if args.jobs is None:
            args.jobs = 1
        return _COMMANDS[args.command](scenario, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except GuardError as exc:
        print(f"oracle guard: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
