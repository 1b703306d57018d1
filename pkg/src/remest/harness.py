"""Configuration, experiment orchestration and the ``remest`` command line.

Configs are TOML files with units spelled out in key names. Every key has a
default taken from the reference experimental setup, so an empty file plus a
choice of N and M is a complete experiment. Training hyperparameters live in
an optional ``[train]`` table.

Output files are written with fixed headers, ``repr`` floats and sorted JSON
so reruns with identical seeds are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import subprocess
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .baselines import BaselinePolicy
from .env import RemoteEstimationEnv
from .errors import ConfigError
from .instance import TABLE_GAINS, Instance, gen_instance
from .phy import LinkBudget
from .ppo import Agent, TrainConfig, evaluate, run_policy, train

log = logging.getLogger("remest")

RESULTS_HEADER = ["instance_seed", "scenario", "policy", "mean_mse", "std_mse", "n_eval", "version", "config_hash"]
EVAL_HEADER = ["seed", "mean_mse"]
BASELINE_NAMES = {"random": "random", "round_robin": "round_robin", "greedy": "greedy_aoi_gain",
                  "greedy_aoi": "greedy_aoi"}


@dataclass
class ExperimentConfig:
    N: int = 6
    M: int = 3
    scenarios: list = field(default_factory=lambda: [1])
    p_max_dbm: float = 23.0
    noise_dbm: float = -60.0
    code_rate: float = 2.0  # bits per symbol, b/l
    blocklen: int = 200
    channel_values: list = field(default_factory=lambda: list(TABLE_GAINS))
    plant_dim: int = 2
    rho_low: float = 1.0
    rho_high: float = 1.3
    tau_max: int = 50
    joint_cap: int = 4096
    max_resamples: int = 10_000
    reward_timing: str = "post"
    instance_seeds: list = field(default_factory=lambda: [1])
    train_seed: int = 3
    eval_seeds: list = field(default_factory=lambda: [11, 12, 13])
    eval_steps: int = 10_000
    baselines: list = field(default_factory=lambda: ["random", "round_robin", "greedy"])
    out_dir: str = "runs"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.N > self.M >= 1:
            raise ConfigError(f"need N > M >= 1, got N={self.N}, M={self.M}")
        if not self.channel_values:
            raise ConfigError("channel_values must not be empty")
        if any(s not in (1, 2, 3) for s in self.scenarios) or not self.scenarios:
            raise ConfigError(f"scenarios must be drawn from 1, 2, 3; got {self.scenarios}")
        if not self.eval_seeds or not self.instance_seeds:
            raise ConfigError("seeds must be given explicitly")
        unknown = [b for b in self.baselines if b not in BASELINE_NAMES]
        if unknown:
            raise ConfigError(f"unknown baselines {unknown}; choose from {sorted(BASELINE_NAMES)}")
        if self.reward_timing not in ("post", "pre"):
            raise ConfigError("reward_timing must be 'post' or 'pre'")

    @property
    def H(self) -> int:
        return len(self.channel_values)

    def budget(self) -> LinkBudget:
        return LinkBudget.from_dbm(self.p_max_dbm, self.noise_dbm, self.code_rate, self.blocklen)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = asdict(self.train)
        return d


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    train_raw = raw.pop("train", {}) or {}
    known = {f.name for f in fields(ExperimentConfig)} - {"train"}
    bad = sorted(set(raw) - known)
    if bad:
        raise ConfigError(f"unknown config keys: {bad}")
    tknown = {f.name for f in fields(TrainConfig)}
    tbad = sorted(set(train_raw) - tknown)
    if tbad:
        raise ConfigError(f"unknown [train] keys: {tbad}")
    try:
        return ExperimentConfig(**raw, train=TrainConfig(**train_raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path, "rb") as fh:
        try:
            raw = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def artifact_version() -> str:
    """Package version plus the git commit of the source tree when available."""
    try:
        sha = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5, check=True).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"{__version__}+g{sha}" if sha else __version__


def make_instance(config: ExperimentConfig, seed: int) -> Instance:
    return gen_instance(config.N, config.M, config.budget(), np.random.default_rng(seed),
                        channel_values=tuple(config.channel_values), plant_dim=config.plant_dim,
                        rho_range=(config.rho_low, config.rho_high), joint_cap=config.joint_cap,
                        max_resamples=config.max_resamples, seed=seed)


def evaluate_baseline(kind: str, instance: Instance, scenario: int, steps: int, seed: int,
                      tau_max: int = 50, reward_timing: str = "post") -> float:
    env = RemoteEstimationEnv(instance, scenario, tau_max=tau_max, reward_timing=reward_timing)
    policy = BaselinePolicy(BASELINE_NAMES.get(kind, kind), env, rng=np.random.default_rng([seed, 1]))
    return run_policy(env, policy, steps, np.random.default_rng(seed))


def evaluate_agent(agent: Agent, instance: Instance, scenario: int, steps: int, seed: int,
                   tau_max: int = 50, reward_timing: str = "post") -> float:
    return evaluate(agent, instance, scenario, steps, np.random.default_rng(seed), tau_max=tau_max,
                    reward_timing=reward_timing)


def _summary(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def _fmt(x: float) -> str:
    return repr(float(x))


def run_experiment(config: ExperimentConfig, out_dir=None) -> list[dict]:
    """Generate, train and evaluate every (instance seed, scenario); write results.csv.

    Layout under ``out_dir``: ``config.json``, ``results.csv`` and one
    ``seed<k>/`` folder per instance holding ``instance.json`` and a
    ``scenario<s>/`` folder with checkpoints, curve.csv and eval.csv.
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash, version = config_hash(config), artifact_version()
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n",
                                     encoding="utf-8")
    rows = []
    for iseed in config.instance_seeds:
        inst_dir = out / f"seed{iseed}"
        inst_dir.mkdir(exist_ok=True)
        instance = make_instance(config, iseed)
        instance.save(inst_dir / "instance.json")
        for scenario in config.scenarios:
            sdir = inst_dir / f"scenario{scenario}"
            log.info("instance seed %d scenario %d: training", iseed, scenario)
            result = train(instance, scenario, config.train, np.random.default_rng([config.train_seed, scenario]),
                           tau_max=config.tau_max, out_dir=sdir, reward_timing=config.reward_timing)
            per_policy = {"ppo": [evaluate_agent(result.agent, instance, scenario, config.eval_steps, s,
                                                 config.tau_max, config.reward_timing) for s in config.eval_seeds]}
            for kind in config.baselines:
                per_policy[kind] = [evaluate_baseline(kind, instance, scenario, config.eval_steps, s,
                                                      config.tau_max, config.reward_timing)
                                    for s in config.eval_seeds]
            with open(sdir / "eval.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["policy"] + EVAL_HEADER)
                for policy, vals in per_policy.items():
                    for s, v in zip(config.eval_seeds, vals):
                        w.writerow([policy, s, _fmt(v)])
            for policy, vals in per_policy.items():
                mean, std = _summary(vals)
                rows.append({"instance_seed": iseed, "scenario": scenario, "policy": policy, "mean_mse": mean,
                             "std_mse": std, "n_eval": len(vals), "version": version, "config_hash": chash})
                log.info("seed %d scenario %d %-12s %.4f +- %.4f", iseed, scenario, policy, mean, std)
    write_results(out / "results.csv", rows)
    return rows


def write_results(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESULTS_HEADER)
        for r in rows:
            w.writerow([r["instance_seed"], r["scenario"], r["policy"], _fmt(r["mean_mse"]), _fmt(r["std_mse"]),
                        r["n_eval"], r["version"], r["config_hash"]])


def read_results(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["instance_seed"], r["scenario"], r["n_eval"] = int(r["instance_seed"]), int(r["scenario"]), int(r["n_eval"])
        r["mean_mse"], r["std_mse"] = float(r["mean_mse"]), float(r["std_mse"])
    return rows


def export_curves(run_dir, out_path, window: int = 1) -> int:
    """Merge every ``curve.csv`` under ``run_dir`` into one long table.

    Adds instance_seed and scenario columns plus a trailing moving average of
    mean_mse over ``window`` episodes. Returns the number of data rows.
    """
    run_dir = Path(run_dir)
    if window < 1:
        raise ConfigError("window must be at least 1")
    curves = sorted(run_dir.glob("seed*/scenario*/curve.csv"))
    if not curves:
        raise FileNotFoundError(f"no curve.csv files under {run_dir}")
    n = 0
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = None
        for path in curves:
            iseed = int(path.parent.parent.name.removeprefix("seed"))
            scenario = int(path.parent.name.removeprefix("scenario"))
            with open(path, newline="", encoding="utf-8") as src:
                reader = csv.reader(src)
                cols = next(reader)
                if header is None:
                    header = ["instance_seed", "scenario"] + cols + ["mean_mse_smoothed"]
                    w.writerow(header)
                k = cols.index("mean_mse")
                hist = []
                for row in reader:
                    hist.append(float(row[k]))
                    smooth = float(np.mean(hist[-window:]))
                    w.writerow([iseed, scenario] + row + [_fmt(smooth)])
                    n += 1
    return n


FULL_OVERRIDES = {"N": 10, "M": 5, "scenarios": [1, 2, 3], "instance_seeds": [1, 2, 3]}


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    for key in ("N", "M"):
        if getattr(args, key, None) is not None:
            changes[key] = getattr(args, key)
    if changes:
        config = replace(config, **changes)
    if getattr(args, "episodes", None) is not None:
        config = replace(config, train=replace(config.train, episodes=args.episodes))
    return config


def _cmd_gen_instance(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    seed = args.seed if args.seed is not None else config.instance_seeds[0]
    inst = make_instance(config, seed)
    inst.save(args.out)
    print(json.dumps({"instance": str(args.out), "N": inst.N, "M": inst.M, "H": inst.H,
                      "stability": inst.stability}, sort_keys=True))
    return 0


def _cmd_check_stability(args) -> int:
    inst = Instance.load(args.instance)
    report = inst.check_stability(cap=args.joint_cap)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return 0 if report.sufficient_holds else 1


def _cmd_train(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    inst = Instance.load(args.instance)
    rng = np.random.default_rng([config.train_seed if args.seed is None else args.seed, args.scenario])
    result = train(inst, args.scenario, config.train, rng, tau_max=config.tau_max, out_dir=args.out,
                   reward_timing=config.reward_timing, progress_every=args.progress)
    print(json.dumps({"episodes": len(result.curve), "best_episode": result.best_episode,
                      "out": str(args.out)}, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    config = load_config(args.config)
    inst = Instance.load(args.instance)
    seeds = args.seeds or config.eval_seeds
    steps = args.steps or config.eval_steps
    if args.checkpoint:
        agent = Agent.load(args.checkpoint)
        vals = [evaluate_agent(agent, inst, args.scenario, steps, s, config.tau_max, config.reward_timing)
                for s in seeds]
        name = "ppo"
    else:
        name = args.policy
        vals = [evaluate_baseline(name, inst, args.scenario, steps, s, config.tau_max, config.reward_timing)
                for s in seeds]
    rows = [["policy"] + EVAL_HEADER] + [[name, s, _fmt(v)] for s, v in zip(seeds, vals)]
    if args.out is None:
        csv.writer(sys.stdout).writerows(rows)
    else:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
    return 0


def _cmd_run_experiment(args) -> int:
    config = load_config(args.config)
    if args.full:
        config = replace(config, **FULL_OVERRIDES)
    config = _apply_overrides(config, args)
    rows = run_experiment(config, args.out)
    for r in rows:
        print(f"seed {r['instance_seed']} scenario {r['scenario']} {r['policy']:<12} "
              f"{r['mean_mse']:.4f} +- {r['std_mse']:.4f}")
    return 0


def _cmd_export_curves(args) -> int:
    n = export_curves(args.run, args.out, window=args.window)
    print(f"wrote {n} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="remest", description="Radio resource allocation for remote estimation: "
                                "instance generation, stability checks, PPO training and evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-instance", help="generate a stable random instance")
    g.add_argument("--config")
    g.add_argument("--N", type=int)
    g.add_argument("--M", type=int)
    g.add_argument("--seed", type=int, help="instance seed (default: first of instance_seeds)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_instance)

    c = sub.add_parser("check-stability", help="print the stability report of an instance as JSON")
    c.add_argument("--instance", required=True)
    c.add_argument("--joint-cap", type=int, default=4096)
    c.set_defaults(func=_cmd_check_stability)

    t = sub.add_parser("train", help="train a PPO agent on one scenario")
    t.add_argument("--config")
    t.add_argument("--instance", required=True)
    t.add_argument("--scenario", type=int, choices=(1, 2, 3), required=True)
    t.add_argument("--episodes", type=int)
    t.add_argument("--seed", type=int, help="training seed (default: train_seed from the config)")
    t.add_argument("--progress", type=int, default=0, help="log every this many episodes")
    t.add_argument("--out", required=True)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="average summed MSE of a checkpoint or baseline")
    e.add_argument("--config")
    e.add_argument("--instance", required=True)
    e.add_argument("--scenario", type=int, choices=(1, 2, 3), required=True)
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="checkpoint path without extension, e.g. run/final")
    src.add_argument("--policy", choices=sorted(BASELINE_NAMES))
    e.add_argument("--seeds", type=int, nargs="+")
    e.add_argument("--steps", type=int)
    e.add_argument("--out", help="CSV path (default: stdout)")
    e.set_defaults(func=_cmd_evaluate)

    r = sub.add_parser("run-experiment", help="train and evaluate every configured scenario")
    r.add_argument("--config")
    r.add_argument("--full", action="store_true",
                   help="(N, M) = (10, 5), scenarios 1-3, instance seeds 1-3")
    r.add_argument("--N", type=int)
    r.add_argument("--M", type=int)
    r.add_argument("--episodes", type=int)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run_experiment)

    x = sub.add_parser("export-curves", help="merge the training curves of a run into one CSV")
    x.add_argument("--run", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--window", type=int, default=1)
    x.set_defaults(func=_cmd_export_curves)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
