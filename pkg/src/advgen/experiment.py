"""Experiment orchestration: config parsing and the full search pipeline.

Configuration -> optimizer -> execution/scoring -> post-learning selection
-> final re-evaluation, with all artifacts written under one output
directory.  All randomness flows from a single master seed; subsystems
derive their seeds from documented offsets so partial reruns are possible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import pls as pls_mod
from .env import (Bounds, Trace, decode, default_bounds, encode, sample_uniform,
                  validate, write_trace, DEFAULT_INTERVAL_LOWER,
                  DEFAULT_INTERVAL_UPPER, DEFAULT_BUFFER_RANGE)
from .optim import (BOConfig, EPSConfig, EvaluationError, Evaluation, GAConfig,
                    OptimizerBudget, run_optimizer)
from .runner import (EvalConfig, SimulatorExecutor, ExternalExecutor, evaluate,
                     reevaluate_final)
from .score import Direction, ScoreSpec, UseCase

# Seed offsets per subsystem (added to the master seed).
OPTIMIZER_SEED_OFFSET = 17


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""


PLS_ALGORITHMS = ("simple_max", "round_robin", "ocba", "tre", "mre")

_TOP_LEVEL_KEYS = {
    "seed", "intervals", "bounds", "optimizer", "budget", "pls", "score",
    "executor", "repetitions", "collapse_deterministic", "reeval_rounds",
    "max_concurrent", "output_dir",
}
_BOUNDS_KEYS = {"bandwidth", "latency", "duration", "buffer", "data"}
_OPTIMIZER_KEYS = {"name", "params"}
_PLS_KEYS = {"algorithm", "top_n", "budget_fraction"}
_SCORE_KEYS = {"use_case", "direction", "t_coeff", "tau_max", "d_min"}
_EXECUTOR_KEYS = {"type", "roles", "noise_sigma_ms", "command", "timeout_ms"}
_BUDGET_KEYS = {"evaluations", "wall_clock_ms"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    intervals: int = 3
    bounds: Bounds = None
    optimizer_name: str = "ga"
    optimizer_params: dict = field(default_factory=dict)
    budget: OptimizerBudget = field(
        default_factory=lambda: OptimizerBudget(max_evaluations=300))
    pls_algorithm: str = "mre"
    pls_top_n: int = 25
    pls_budget_fraction: float = 0.10
    score_spec: ScoreSpec = field(default_factory=ScoreSpec)
    executor_type: str = "simulator"
    executor_roles: dict = field(
        default_factory=lambda: {"reference": "oracle", "target": "reno"})
    noise_sigma_ms: float = 0.0
    external_command: Optional[str] = None
    external_timeout_ms: int = 60_000
    repetitions: int = 5
    collapse_deterministic: bool = True
    reeval_rounds: int = 5
    max_concurrent: int = 1
    output_dir: Path = Path("advgen-out")

    def __post_init__(self):
        if self.bounds is None:
            object.__setattr__(self, "bounds", default_bounds(self.intervals))
        if not 0 < self.pls_budget_fraction < 1:
            raise ConfigError("pls.budget_fraction must be in (0, 1)")
        if self.pls_top_n < 1:
            raise ConfigError("pls.top_n must be >= 1")
        if self.pls_algorithm not in PLS_ALGORITHMS:
            raise ConfigError(f"unknown pls.algorithm {self.pls_algorithm!r}")


def _parse_range(raw, where) -> tuple[int, int]:
    if (not isinstance(raw, (list, tuple)) or len(raw) != 2
            or not all(isinstance(v, int) for v in raw)):
        raise ConfigError(f"{where} must be [lower, upper] integers")
    return tuple(raw)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment config; unknown keys are errors."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(raw, _TOP_LEVEL_KEYS, "config")
    kwargs: dict = {}

    for key in ("seed", "intervals", "repetitions", "reeval_rounds",
                "max_concurrent"):
        if key in raw:
            if not isinstance(raw[key], int) or isinstance(raw[key], bool):
                raise ConfigError(f"{key} must be an integer")
            kwargs[key] = raw[key]
    if "collapse_deterministic" in raw:
        kwargs["collapse_deterministic"] = bool(raw["collapse_deterministic"])
    if "output_dir" in raw:
        kwargs["output_dir"] = Path(raw["output_dir"])

    intervals = kwargs.get("intervals", 3)
    bounds_raw = raw.get("bounds", {})
    _check_keys(bounds_raw, _BOUNDS_KEYS, "bounds")
    bw = _parse_range(bounds_raw.get("bandwidth",
                                     [DEFAULT_INTERVAL_LOWER[0],
                                      DEFAULT_INTERVAL_UPPER[0]]), "bounds.bandwidth")
    lat = _parse_range(bounds_raw.get("latency",
                                      [DEFAULT_INTERVAL_LOWER[1],
                                       DEFAULT_INTERVAL_UPPER[1]]), "bounds.latency")
    dur = _parse_range(bounds_raw.get("duration",
                                      [DEFAULT_INTERVAL_LOWER[2],
                                       DEFAULT_INTERVAL_UPPER[2]]), "bounds.duration")
    kwargs["bounds"] = default_bounds(
        intervals,
        interval_lower=(bw[0], lat[0], dur[0]),
        interval_upper=(bw[1], lat[1], dur[1]),
        buffer_range=_parse_range(bounds_raw.get("buffer",
                                                 list(DEFAULT_BUFFER_RANGE)),
                                  "bounds.buffer"),
        data_range=(_parse_range(bounds_raw["data"], "bounds.data")
                    if "data" in bounds_raw else None))

    opt_raw = raw.get("optimizer", {})
    _check_keys(opt_raw, _OPTIMIZER_KEYS, "optimizer")
    kwargs["optimizer_name"] = opt_raw.get("name", "ga")
    kwargs["optimizer_params"] = opt_raw.get("params", {}) or {}

    budget_raw = raw.get("budget", {"evaluations": 300})
    _check_keys(budget_raw, _BUDGET_KEYS, "budget")
    try:
        kwargs["budget"] = OptimizerBudget(
            max_evaluations=budget_raw.get("evaluations"),
            wall_clock_ms=budget_raw.get("wall_clock_ms"))
    except ValueError as e:
        raise ConfigError(str(e)) from e

    pls_raw = raw.get("pls", {})
    _check_keys(pls_raw, _PLS_KEYS, "pls")
    kwargs["pls_algorithm"] = pls_raw.get("algorithm", "mre")
    kwargs["pls_top_n"] = pls_raw.get("top_n", 25)
    kwargs["pls_budget_fraction"] = pls_raw.get("budget_fraction", 0.10)

    score_raw = raw.get("score", {})
    _check_keys(score_raw, _SCORE_KEYS, "score")
    try:
        kwargs["score_spec"] = ScoreSpec(
            use_case=UseCase(score_raw.get("use_case", "uc1-capacity")),
            direction=Direction(score_raw.get("direction", "higher-better")),
            t_coeff=score_raw.get("t_coeff"),
            tau_max=score_raw.get("tau_max"),
            d_min=score_raw.get("d_min"))
    except ValueError as e:
        raise ConfigError(f"bad score section: {e}") from e

    exec_raw = raw.get("executor", {})
    _check_keys(exec_raw, _EXECUTOR_KEYS, "executor")
    kwargs["executor_type"] = exec_raw.get("type", "simulator")
    if kwargs["executor_type"] not in ("simulator", "external"):
        raise ConfigError(f"unknown executor.type {kwargs['executor_type']!r}")
    if "roles" in exec_raw:
        kwargs["executor_roles"] = dict(exec_raw["roles"])
    kwargs["noise_sigma_ms"] = float(exec_raw.get("noise_sigma_ms", 0.0))
    kwargs["external_command"] = exec_raw.get("command")
    kwargs["external_timeout_ms"] = exec_raw.get("timeout_ms", 60_000)
    if kwargs["executor_type"] == "external" and not kwargs["external_command"]:
        raise ConfigError("executor.type external requires executor.command")

    try:
        return ExperimentConfig(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e


def build_executor(cfg: ExperimentConfig):
    if cfg.executor_type == "external":
        return ExternalExecutor(cfg.external_command, cfg.external_timeout_ms)
    return SimulatorExecutor(cfg.executor_roles, noise_sigma_ms=cfg.noise_sigma_ms)


def _optimizer_config(cfg: ExperimentConfig):
    classes = {"ga": GAConfig, "eps": EPSConfig, "bo": BOConfig, "rg": None}
    try:
        cls = classes[cfg.optimizer_name]
    except KeyError:
        raise ConfigError(f"unknown optimizer {cfg.optimizer_name!r}") from None
    if cls is None:
        if cfg.optimizer_params:
            raise ConfigError("rg takes no optimizer params")
        return None
    try:
        return cls(**cfg.optimizer_params)
    except TypeError as e:
        raise ConfigError(f"bad optimizer params: {e}") from e


@dataclass
class ExperimentReport:
    best_observed_score: float
    best_observed_iteration: int
    winner_trace: Trace
    winner_source: str            # "optimizer" index or "pls"
    reeval_mean: float
    reeval_std: float
    optimizer_evaluations: int
    pls_runs: int
    reeval_runs: int
    history: list[Evaluation]
    eval_details: dict            # iteration -> (reference_score, target_score)
    seed: int


def run_experiment(cfg: ExperimentConfig, write_outputs: bool = True,
                   with_plots: bool = True) -> ExperimentReport:
    """Run the full pipeline and (optionally) persist all artifacts."""
    opt_config = _optimizer_config(cfg)  # fail fast before any execution
    executor = build_executor(cfg)
    repetitions = cfg.repetitions
    if (cfg.collapse_deterministic and getattr(executor, "deterministic", False)
            and repetitions > 1):
        repetitions = 1
    eval_cfg = EvalConfig(repetitions=repetitions,
                          max_concurrent=cfg.max_concurrent,
                          score_spec=cfg.score_spec)

    total_budget = cfg.budget.max_evaluations
    use_pls = cfg.pls_algorithm != "simple_max"
    if total_budget is not None and use_pls:
        pls_budget = round(total_budget * cfg.pls_budget_fraction)
        opt_budget = OptimizerBudget(max_evaluations=total_budget - pls_budget)
    else:
        pls_budget = 0
        opt_budget = cfg.budget

    eval_details: dict[int, tuple[float, float]] = {}
    counter = {"i": 0}

    def evaluator(vec):
        trace = decode(vec, cfg.bounds.layout)
        idx = counter["i"]
        counter["i"] += 1
        res = evaluate(trace, eval_cfg, executor, master_seed=cfg.seed,
                       eval_index=idx)
        eval_details[idx] = (res.reference_score, res.target_score)
        return res.score

    history = run_optimizer(cfg.optimizer_name, evaluator, cfg.bounds,
                            opt_budget, seed=cfg.seed + OPTIMIZER_SEED_OFFSET,
                            config=opt_config)
    if not history:
        raise RuntimeError("optimizer produced no evaluations")
    optimizer_evaluations = counter["i"]

    # Top-N distinct vectors by observed score, earliest first on ties.
    ranked = sorted(history, key=lambda e: (-e.score, e.index))
    seen = set()
    top: list[Evaluation] = []
    for e in ranked:
        if e.vector not in seen:
            seen.add(e.vector)
            top.append(e)
        if len(top) == cfg.pls_top_n:
            break

    pls_runs = 0
    if use_pls and pls_budget > 0:
        candidates = [pls_mod.Candidate(id=e.index, vector=e.vector) for e in top]

        # One selection observation = one full evaluation (same repetition
        # and budget unit as the optimizer), so its observations are at
        # least as reliable as the history it is re-ranking.
        def pls_evaluator(cand):
            nonlocal pls_runs
            idx = counter["i"]
            counter["i"] += 1
            pls_runs += 1
            trace = decode(np.asarray(cand.vector), cfg.bounds.layout)
            return evaluate(trace, eval_cfg, executor, master_seed=cfg.seed,
                            eval_index=idx).score

        select = {"round_robin": pls_mod.round_robin,
                  "mre": pls_mod.mre_select,
                  "tre": pls_mod.tre_select,
                  "ocba": pls_mod.ocba_select}[cfg.pls_algorithm]
        winner_cand = select(candidates, pls_budget, pls_evaluator)
        winner_vec = np.asarray(winner_cand.vector)
        winner_source = f"pls:{cfg.pls_algorithm}"
        best_iter = winner_cand.id
    else:
        winner_vec = np.asarray(top[0].vector)
        winner_source = "simple_max"
        best_iter = top[0].index

    winner_trace = decode(winner_vec, cfg.bounds.layout)
    reeval_mean, reeval_std = reevaluate_final(
        winner_trace, eval_cfg, executor, master_seed=cfg.seed,
        rounds=cfg.reeval_rounds)

    report = ExperimentReport(
        best_observed_score=max(e.score for e in history),
        best_observed_iteration=best_iter,
        winner_trace=winner_trace,
        winner_source=winner_source,
        reeval_mean=reeval_mean,
        reeval_std=reeval_std,
        optimizer_evaluations=optimizer_evaluations,
        pls_runs=pls_runs,
        reeval_runs=cfg.reeval_rounds,
        history=history,
        eval_details=eval_details,
        seed=cfg.seed)
    if write_outputs:
        write_report(cfg, report, with_plots=with_plots)
    return report


def write_report(cfg: ExperimentConfig, report: ExperimentReport,
                 with_plots: bool = True) -> None:
    out = cfg.output_dir
    traces_dir = out / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for e in report.history:
        trace_file = traces_dir / f"iter_{e.index:05d}.trace"
        write_trace(decode(np.asarray(e.vector), cfg.bounds.layout), trace_file)
        ref, tgt = report.eval_details.get(e.index, (float("nan"), float("nan")))
        rows.append((e.index, e.score, e.repetitions, ref, tgt,
                     cfg.score_spec.use_case.value, trace_file.name))
    with open(out / "history.csv", "w", newline="\n") as f:
        f.write("iteration,score,repetitions,reference_score,target_score,"
                "eq1_score,use_case,trace_file\n")
        for idx, score, reps, ref, tgt, uc, name in rows:
            f.write(f"{idx},{score:.6f},{reps},{ref:.6f},{tgt:.6f},"
                    f"{score:.6f},{uc},traces/{name}\n")

    write_trace(report.winner_trace, out / "winner.trace")
    violations = validate(report.winner_trace, cfg.bounds)
    payload = {
        "seed": report.seed,
        "best_observed_score": report.best_observed_score,
        "winner_source": report.winner_source,
        "winner_iteration": report.best_observed_iteration,
        "winner_valid": not violations,
        "reevaluated_score": {"mean": report.reeval_mean,
                              "std": report.reeval_std,
                              "rounds": report.reeval_runs},
        "budget": {"optimizer_evaluations": report.optimizer_evaluations,
                   "pls_runs": report.pls_runs,
                   "reeval_rounds": report.reeval_runs},
        "config": {
            "intervals": cfg.intervals,
            "optimizer": cfg.optimizer_name,
            "optimizer_params": cfg.optimizer_params,
            "pls": {"algorithm": cfg.pls_algorithm, "top_n": cfg.pls_top_n,
                    "budget_fraction": cfg.pls_budget_fraction},
            "score": {"use_case": cfg.score_spec.use_case.value,
                      "direction": cfg.score_spec.direction.value},
            "executor": cfg.executor_type,
            "repetitions": cfg.repetitions,
            "noise_sigma_ms": cfg.noise_sigma_ms,
        },
    }
    with open(out / "report.json", "w", newline="\n") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")

    if with_plots:
        from .plotting import plot_history
        plot_history(report.history, out / "history.png")
