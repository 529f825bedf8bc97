"""Search strategies over the flat trace encoding.

Four budgeted optimizers share one interface: they propose integer vectors
within bounds, hand them to an evaluator, and record every observed score
in order.  The evaluator is a callable ``vector -> float``; it may raise
EvaluationError to skip a proposal (the attempt still counts against an
evaluation budget).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .env import Bounds


class EvaluationError(RuntimeError):
    """Raised by an evaluator when a proposal could not be scored."""


@dataclass(frozen=True)
class Evaluation:
    """One scored proposal."""

    vector: tuple[int, ...]
    score: float
    repetitions: int = 1
    index: int = 0


@dataclass(frozen=True)
class OptimizerBudget:
    """Exactly one of max_evaluations / wall_clock_ms is active."""

    max_evaluations: Optional[int] = None
    wall_clock_ms: Optional[int] = None

    def __post_init__(self):
        if (self.max_evaluations is None) == (self.wall_clock_ms is None):
            raise ValueError("set exactly one of max_evaluations, wall_clock_ms")
        active = (self.max_evaluations if self.max_evaluations is not None
                  else self.wall_clock_ms)
        if active <= 0:
            raise ValueError("budget must be positive")


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 20
    mut_prob: float = 0.1
    elitism_count: int = 1
    tournament_size: int = 2

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 <= self.mut_prob <= 1:
            raise ValueError("mut_prob must be in [0, 1]")


@dataclass(frozen=True)
class EPSConfig:
    epsilon: float = 0.3
    elite_capacity: int = 10
    mutation_prob: float = 0.1

    def __post_init__(self):
        if self.elite_capacity < 1:
            raise ValueError("elite_capacity must be >= 1")


@dataclass(frozen=True)
class BOConfig:
    surrogate_trees: int = 50
    lcb_kappa: float = 1.96
    warmup_samples: int = 20
    candidate_pool: int = 500

    def __post_init__(self):
        if self.warmup_samples < 1:
            raise ValueError("warmup_samples must be >= 1")
        if self.lcb_kappa < 0:
            raise ValueError("lcb_kappa must be >= 0")


class _BudgetClock:
    """Tracks either evaluation count or elapsed wall clock."""

    def __init__(self, budget: OptimizerBudget):
        self.budget = budget
        self.used = 0
        self.start = time.monotonic()

    def exhausted(self) -> bool:
        if self.budget.max_evaluations is not None:
            return self.used >= self.budget.max_evaluations
        return (time.monotonic() - self.start) * 1000 >= self.budget.wall_clock_ms

    def spend(self) -> None:
        self.used += 1


def two_point_crossover(a: np.ndarray, b: np.ndarray,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Swap the segment between two distinct random cut points in [0, N]."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("parents must have the same length")
    n = len(a)
    if n < 2:
        raise ValueError("vectors must have length >= 2")
    p, q = sorted(rng.choice(n + 1, size=2, replace=False))
    c1 = a.copy()
    c2 = b.copy()
    c1[p:q] = b[p:q]
    c2[p:q] = a[p:q]
    return c1, c2


def uniform_mutation(v: np.ndarray, bounds: Bounds, mut_prob: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Resample each coordinate uniformly within its bounds with prob mut_prob."""
    v = np.asarray(v).copy()
    mask = rng.random(len(v)) < mut_prob
    if mask.any():
        lo = np.asarray(bounds.lower)[mask]
        hi = np.asarray(bounds.upper)[mask]
        v[mask] = rng.integers(lo, hi + 1)
    return v


def _evaluate(evaluator, vec, clock, history, repetitions=1) -> Optional[float]:
    """Spend one budget unit; returns None when the evaluator skipped it."""
    clock.spend()
    try:
        score = float(evaluator(vec))
    except EvaluationError:
        return None
    history.append(Evaluation(tuple(int(x) for x in vec), score,
                              repetitions=repetitions, index=len(history)))
    return score


def run_rg(evaluator: Callable, bounds: Bounds, budget: OptimizerBudget,
           seed: int = 0) -> list[Evaluation]:
    """Repeated uniform sampling."""
    rng = np.random.default_rng(seed)
    clock = _BudgetClock(budget)
    history: list[Evaluation] = []
    while not clock.exhausted():
        _evaluate(evaluator, bounds.sample_vector(rng), clock, history)
    return history


def run_ga(evaluator: Callable, bounds: Bounds, cfg: GAConfig,
           budget: OptimizerBudget, seed: int = 0) -> list[Evaluation]:
    """Generational GA: tournament selection, 2-point crossover, uniform mutation."""
    rng = np.random.default_rng(seed)
    clock = _BudgetClock(budget)
    history: list[Evaluation] = []

    def tournament(pop):
        # Entries are (vector, score, evaluation order); ties break earliest.
        picks = [pop[i] for i in rng.integers(0, len(pop), size=cfg.tournament_size)]
        return min(picks, key=lambda e: (-e[1], e[2]))[0]

    # Initial population.
    population: list[tuple[np.ndarray, float, int]] = []
    for _ in range(cfg.population_size):
        if clock.exhausted():
            return history
        vec = bounds.sample_vector(rng)
        score = _evaluate(evaluator, vec, clock, history)
        if score is not None:
            population.append((vec, score, len(history) - 1))

    while not clock.exhausted() and population:
        population.sort(key=lambda e: (-e[1], e[2]))
        next_gen = population[:min(cfg.elitism_count, len(population))]
        children: list[np.ndarray] = []
        while len(next_gen) + len(children) < cfg.population_size:
            p1 = tournament(population)
            p2 = tournament(population)
            c1, c2 = two_point_crossover(p1, p2, rng)
            children.append(uniform_mutation(c1, bounds, cfg.mut_prob, rng))
            if len(next_gen) + len(children) < cfg.population_size:
                children.append(uniform_mutation(c2, bounds, cfg.mut_prob, rng))
        scored = []
        for child in children:
            if clock.exhausted():
                break
            score = _evaluate(evaluator, child, clock, history)
            if score is not None:
                scored.append((child, score, len(history) - 1))
        population = next_gen + scored
    return history


def run_eps(evaluator: Callable, bounds: Bounds, cfg: EPSConfig,
            budget: OptimizerBudget, seed: int = 0) -> list[Evaluation]:
    """Epsilon-greedy: explore uniformly, or mutate a member of the elite set."""
    rng = np.random.default_rng(seed)
    clock = _BudgetClock(budget)
    history: list[Evaluation] = []
    # Elite set of (vector, score, order); kept sorted best-first, ties by order.
    elite: list[tuple[np.ndarray, float, int]] = []

    while not clock.exhausted():
        explore = rng.random() < cfg.epsilon or not elite
        if explore:
            vec = bounds.sample_vector(rng)
        else:
            base = elite[rng.integers(0, len(elite))][0]
            vec = uniform_mutation(base, bounds, cfg.mutation_prob, rng)
        score = _evaluate(evaluator, vec, clock, history)
        if score is None:
            continue
        elite.append((vec, score, len(history) - 1))
        elite.sort(key=lambda e: (-e[1], e[2]))
        del elite[cfg.elite_capacity:]
    return history


def run_bo(evaluator: Callable, bounds: Bounds, cfg: BOConfig,
           budget: OptimizerBudget, seed: int = 0) -> list[Evaluation]:
    """Random-forest surrogate with an LCB acquisition over a uniform pool."""
    from sklearn.ensemble import RandomForestRegressor

    rng = np.random.default_rng(seed)
    clock = _BudgetClock(budget)
    history: list[Evaluation] = []
    xs: list[np.ndarray] = []
    ys: list[float] = []

    def observe(vec):
        score = _evaluate(evaluator, vec, clock, history)
        if score is not None:
            xs.append(np.asarray(vec, dtype=float))
            ys.append(score)

    for _ in range(cfg.warmup_samples):
        if clock.exhausted():
            return history
        observe(bounds.sample_vector(rng))

    while not clock.exhausted():
        if len(xs) < 2 or np.ptp(ys) == 0:
            # Degenerate surrogate: fall back to uniform proposal.
            observe(bounds.sample_vector(rng))
            continue
        forest = RandomForestRegressor(
            n_estimators=cfg.surrogate_trees,
            random_state=int(rng.integers(2**31)),
            n_jobs=1)
        forest.fit(np.vstack(xs), np.asarray(ys))
        pool = np.vstack([bounds.sample_vector(rng) for _ in range(cfg.candidate_pool)])
        per_tree = np.stack([t.predict(pool) for t in forest.estimators_])
        mean = per_tree.mean(axis=0)
        std = per_tree.std(axis=0)
        # Minimizing -mean - kappa*std over the pool = maximizing the UCB
        # of the score; kappa=0 degenerates to pure predicted-mean argmax.
        best = int(np.argmin(-mean - cfg.lcb_kappa * std))
        observe(pool[best].astype(np.int64))
    return history


OPTIMIZERS = {
    "ga": (run_ga, GAConfig),
    "eps": (run_eps, EPSConfig),
    "bo": (run_bo, BOConfig),
    "rg": (run_rg, None),
}


def run_optimizer(name: str, evaluator: Callable, bounds: Bounds,
                  budget: OptimizerBudget, seed: int = 0,
                  config=None) -> list[Evaluation]:
    """Dispatch by optimizer name; config defaults per algorithm."""
    try:
        fn, cfg_cls = OPTIMIZERS[name]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}") from None
    if cfg_cls is None:
        return fn(evaluator, bounds, budget, seed=seed)
    cfg = config if config is not None else cfg_cls()
    return fn(evaluator, bounds, cfg, budget, seed=seed)
