"""Evaluation pipeline: run both behaviors over a trace, aggregate, score.

An Executor turns (trace, role, seed) into a PerfSummary.  The built-in
simulator executor runs the packet-level simulator; the external-command
executor shells out to any emulator that reads the trace file format and
writes a key=value result file.  Evaluation runs every role the score
spec requires for a number of repetitions, takes the median per role,
and applies the gap score.
"""

from __future__ import annotations

import logging
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .env import Trace, write_trace
from .optim import EvaluationError
from .score import (PerfSummary, ScoreSpec, UseCase, REQUIRED_ROLES,
                    eq1_score, median_aggregate, role_score)
from .sim import capacity_oracle, simulate

log = logging.getLogger(__name__)

# Seed namespaces: learning-phase and final-reevaluation seeds never overlap.
LEARN_SEED_OFFSET = 0
REEVAL_SEED_OFFSET = 1_000_000_000


class ExecutorError(RuntimeError):
    """One executor run failed."""


class ExternalExitError(ExecutorError):
    """External command returned a nonzero exit status."""


class ExternalTimeoutError(ExecutorError):
    """External command exceeded its timeout."""


class ExternalParseError(ExecutorError):
    """External command produced an unparseable result file."""


@dataclass(frozen=True)
class EvalConfig:
    repetitions: int = 5
    max_concurrent: int = 1
    score_spec: ScoreSpec = field(default_factory=ScoreSpec)

    def __post_init__(self):
        if self.repetitions < 1 or self.max_concurrent < 1:
            raise ValueError("repetitions and max_concurrent must be >= 1")


@dataclass(frozen=True)
class EvalResult:
    """Score plus the raw per-repetition summaries that produced it."""

    score: float
    reference_score: float
    target_score: float
    repetitions: int
    runs: dict[str, list[PerfSummary]]


class SimulatorExecutor:
    """Executor backed by the built-in simulator.

    role_models maps each role the score spec needs to either a CC model
    name, "oracle" (the analytic capacity bound), or a list of two model
    names for a shared-link run where the first flow's summary is
    reported.  Deterministic per seed; noise_sigma_ms adds per-packet
    delivery jitter.
    """

    def __init__(self, role_models: dict, noise_sigma_ms: float = 0.0):
        self.role_models = dict(role_models)
        self.noise_sigma_ms = noise_sigma_ms

    @property
    def deterministic(self) -> bool:
        return self.noise_sigma_ms == 0.0

    def run(self, trace: Trace, role: str, seed: int) -> PerfSummary:
        try:
            model = self.role_models[role]
        except KeyError:
            raise ExecutorError(f"no model configured for role {role!r}") from None
        if model == "oracle":
            return capacity_oracle(trace)
        if isinstance(model, (list, tuple)):
            return simulate(trace, list(model), seed=seed,
                            noise_sigma_ms=self.noise_sigma_ms)[0].summary
        return simulate(trace, model, seed=seed,
                        noise_sigma_ms=self.noise_sigma_ms)[0].summary


class ExternalExecutor:
    """Executor that invokes an external command per run.

    The command template must contain "{trace}" and "{out}" placeholders.
    The command reads the trace file and writes a result file of
    key=value lines: throughput_mbps, mean_delay_ms, optional fct_ms.
    """

    deterministic = False

    def __init__(self, command_template: str, timeout_ms: int = 60_000):
        if "{trace}" not in command_template or "{out}" not in command_template:
            raise ValueError("command template needs {trace} and {out} placeholders")
        self.command_template = command_template
        self.timeout_ms = timeout_ms

    def run(self, trace: Trace, role: str, seed: int) -> PerfSummary:
        with tempfile.TemporaryDirectory(prefix="advgen-ext-") as tmp:
            trace_path = Path(tmp) / "input.trace"
            out_path = Path(tmp) / "result.txt"
            write_trace(trace, trace_path)
            cmd = self.command_template.format(trace=trace_path, out=out_path,
                                               role=role, seed=seed)
            try:
                proc = subprocess.run(cmd, shell=True, capture_output=True,
                                      timeout=self.timeout_ms / 1000)
            except subprocess.TimeoutExpired as e:
                raise ExternalTimeoutError(
                    f"command exceeded {self.timeout_ms} ms") from e
            if proc.returncode != 0:
                raise ExternalExitError(
                    f"command exited {proc.returncode}: {proc.stderr.decode()[:500]}")
            return self._parse(out_path)

    @staticmethod
    def _parse(path: Path) -> PerfSummary:
        values: dict[str, float] = {}
        try:
            text = path.read_text()
        except OSError as e:
            raise ExternalParseError(f"result file missing: {path}") from e
        for ln in text.splitlines():
            if not ln.strip():
                continue
            key, sep, raw = ln.partition("=")
            if not sep:
                raise ExternalParseError(f"bad result line: {ln!r}")
            try:
                values[key.strip()] = float(raw)
            except ValueError:
                raise ExternalParseError(f"bad result line: {ln!r}") from None
        for needed in ("throughput_mbps", "mean_delay_ms"):
            if needed not in values:
                raise ExternalParseError(f"missing {needed} in {path}")
        return PerfSummary(throughput=values["throughput_mbps"],
                           mean_delay=values["mean_delay_ms"],
                           completion_time=values.get("fct_ms"))


def _spec_for_trace(spec: ScoreSpec, trace: Trace) -> ScoreSpec:
    """Fill trace-derived normalizers for the weighted use case.

    tau_max defaults to the duration-weighted mean bandwidth; d_min to the
    trace's minimum one-way latency (the simulator reports one-way delays).
    """
    if spec.use_case is not UseCase.UC2_WEIGHTED:
        return spec
    updates = {}
    if spec.tau_max is None:
        updates["tau_max"] = trace.mean_bandwidth()
    if spec.d_min is None:
        updates["d_min"] = float(max(trace.min_latency(), 1))
    return replace(spec, **updates) if updates else spec


def evaluate(trace: Trace, cfg: EvalConfig, executor, master_seed: int = 0,
             eval_index: int = 0,
             seed_offset: int = LEARN_SEED_OFFSET) -> EvalResult:
    """Run all required roles `repetitions` times and score the medians.

    Seeds derive from (master_seed, seed_offset, eval_index, repetition);
    repetitions may run concurrently, results are identical either way.
    A failing run is discarded and logged; the evaluation errors once
    more than half of a role's repetitions fail.
    """
    spec = _spec_for_trace(cfg.score_spec, trace)
    roles = REQUIRED_ROLES[spec.use_case]
    base = master_seed + seed_offset + eval_index * cfg.repetitions * len(roles)
    jobs = [(role, base + r * len(roles) + i)
            for r in range(cfg.repetitions)
            for i, role in enumerate(roles)]

    def one(job):
        role, seed = job
        try:
            return role, executor.run(trace, role, seed)
        except ExecutorError as e:
            log.warning("executor run failed (role=%s seed=%d): %s", role, seed, e)
            return role, None

    if cfg.max_concurrent > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_concurrent) as pool:
            outcomes = list(pool.map(one, jobs))
    else:
        outcomes = [one(j) for j in jobs]

    runs: dict[str, list[PerfSummary]] = {role: [] for role in roles}
    for role, summary in outcomes:
        if summary is not None:
            runs[role].append(summary)
    for role in roles:
        if len(runs[role]) * 2 <= cfg.repetitions:
            raise EvaluationError(
                f"more than half of {role!r} repetitions failed "
                f"({len(runs[role])}/{cfg.repetitions} succeeded)")

    # Median per role score across repetitions, before the gap is computed.
    ref = median_aggregate([role_score(spec, s) for s in runs[roles[0]]])
    tgt = median_aggregate([role_score(spec, s) for s in runs[roles[1]]])
    return EvalResult(score=eq1_score(ref, tgt, spec.direction),
                      reference_score=ref, target_score=tgt,
                      repetitions=cfg.repetitions, runs=runs)


def reevaluate_final(trace: Trace, cfg: EvalConfig, executor, master_seed: int = 0,
                     rounds: int = 5) -> tuple[float, float]:
    """Independent re-evaluations with a disjoint seed namespace.

    Returns (mean, standard deviation) of the gap score over `rounds`
    fresh evaluations.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    scores = []
    for r in range(rounds):
        res = evaluate(trace, cfg, executor, master_seed=master_seed,
                       eval_index=r, seed_offset=REEVAL_SEED_OFFSET)
        scores.append(res.score)
    n = len(scores)
    mean = sum(scores) / n
    var = sum((s - mean) ** 2 for s in scores) / (n - 1) if n > 1 else 0.0
    return mean, var ** 0.5
