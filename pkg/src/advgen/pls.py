"""Post-learning selection: pick the truly best candidate under noisy scores.

Given the top candidates of an optimizer run and a re-evaluation budget,
these algorithms decide how to spend that budget so the returned candidate
has the highest possible true mean score.  A Gaussian simulation harness
benchmarks them against an oracle on synthetic candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

OCBA_VAR_FLOOR = 1e-6
OCBA_DELTA_FLOOR = 1e-6
OCBA_VAR_WEIGHT = 0.85  # shrink per-candidate variance toward the pool
MRE_FINAL_POOL = 5


class BudgetError(ValueError):
    """Selection budget too small for the algorithm's first round."""


@dataclass
class Candidate:
    """A trace (or abstract alternative) with running score statistics."""

    id: object
    vector: Optional[tuple] = None
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def observe(self, score: float) -> None:
        # Welford update.
        self.count += 1
        delta = score - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (score - self.mean)

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def _argbest(candidates: Sequence[Candidate]) -> Candidate:
    """Highest observed mean among candidates with observations; ties earliest."""
    observed = [c for c in candidates if c.count > 0]
    if not observed:
        raise ValueError("no candidate has been observed")
    return max(observed, key=lambda c: c.mean)  # max() keeps the earliest tie


def simple_max(scores: Sequence[float], candidates: Sequence[Candidate]) -> Candidate:
    """The candidate whose single observed score is highest; no re-evaluation."""
    if len(scores) != len(candidates) or not candidates:
        raise ValueError("need one observed score per candidate")
    best = int(np.argmax(scores))  # argmax keeps the earliest tie
    return candidates[best]


def round_robin(candidates: Sequence[Candidate], budget: int,
                evaluator: Callable[[Candidate], float]) -> Candidate:
    """Split the budget equally; the first (budget mod n) get one extra."""
    n = len(candidates)
    if n == 0 or budget < 1:
        raise BudgetError("round_robin needs candidates and a positive budget")
    base, extra = divmod(budget, n)
    for i, c in enumerate(candidates):
        for _ in range(base + (1 if i < extra else 0)):
            c.observe(evaluator(c))
    return _argbest(candidates)


def mre_select(candidates: Sequence[Candidate], budget: int,
               evaluator: Callable[[Candidate], float]) -> Candidate:
    """Multi-round elimination.

    Rounds of one evaluation each; after every round the floor(n/2)
    lowest cumulative means are discarded, until at most five survive.
    Survivors are then evaluated cyclically until the budget runs out.
    Budget exhaustion mid-round spends what remains cyclically in order.
    """
    n = len(candidates)
    if budget < n:
        raise BudgetError(f"mre needs budget >= {n} for the first round")
    remaining = budget
    survivors = list(candidates)
    while len(survivors) > MRE_FINAL_POOL and remaining >= len(survivors):
        for c in survivors:
            c.observe(evaluator(c))
            remaining -= 1
        survivors.sort(key=lambda c: -c.mean)
        del survivors[len(survivors) - len(survivors) // 2:]
    i = 0
    while remaining > 0:
        c = survivors[i % len(survivors)]
        c.observe(evaluator(c))
        remaining -= 1
        i += 1
    return _argbest(survivors)


def tre_select(candidates: Sequence[Candidate], budget: int,
               evaluator: Callable[[Candidate], float],
               strict: bool = True) -> Candidate:
    """Two-round elimination: 2 evaluations each, keep top ceil(n/4), cycle.

    With strict=False an underfunded first round spends the whole budget
    on 2-evaluations-each in candidate order and selects among those
    observed (used by the Gaussian study at small budgets).
    """
    n = len(candidates)
    if budget < 2 * n:
        if strict:
            raise BudgetError(f"tre needs budget >= {2 * n}")
        remaining = budget
        for c in candidates:
            for _ in range(min(2, remaining)):
                c.observe(evaluator(c))
                remaining -= 1
            if remaining == 0:
                break
        return _argbest(candidates)
    remaining = budget
    for c in candidates:
        c.observe(evaluator(c))
        c.observe(evaluator(c))
        remaining -= 2
    survivors = sorted(candidates, key=lambda c: -c.mean)[:math.ceil(n / 4)]
    i = 0
    while remaining > 0:
        survivors[i % len(survivors)].observe(evaluator(survivors[i % len(survivors)]))
        remaining -= 1
        i += 1
    return _argbest(survivors)


def _ocba_allocation(means: np.ndarray, stds: np.ndarray, total: int) -> np.ndarray:
    """Target evaluation counts for a total budget under the OCBA ratios.

    For non-best i, j: N_i / N_j = (s_i/d_i)^2 / (s_j/d_j)^2 with
    d_i = mean_best - mean_i; the best gets s_b * sqrt(sum (N_i/s_i)^2).
    """
    k = len(means)
    stds = np.maximum(stds, math.sqrt(OCBA_VAR_FLOOR))
    best = int(np.argmax(means))
    deltas = np.maximum(means[best] - means, OCBA_DELTA_FLOOR)
    ratios = np.zeros(k)
    others = [i for i in range(k) if i != best]
    ref = others[0]
    for i in others:
        ratios[i] = (stds[i] / deltas[i]) ** 2 / (stds[ref] / deltas[ref]) ** 2
    ratios[best] = stds[best] * math.sqrt(
        sum((ratios[i] / stds[i]) ** 2 for i in others))
    alloc = ratios / ratios.sum() * total
    counts = np.floor(alloc).astype(int)
    # Hand out the remainder by largest fractional part.
    frac_order = np.argsort(-(alloc - counts))
    for i in frac_order[:total - counts.sum()]:
        counts[i] += 1
    return counts


def ocba_select(candidates: Sequence[Candidate], budget: int,
                evaluator: Callable[[Candidate], float],
                delta_budget: int = 10, warmup: int = 2,
                strict: bool = True) -> Candidate:
    """Optimal computing budget allocation.

    Warm-up of 2 evaluations per candidate for variance estimates, then
    repeated delta_budget-sized allocations by the OCBA ratios.  With
    strict=False an underfunded warm-up degrades the way a naive
    implementation does: one observation for only the first floor(budget/2)
    candidates, then allocation driven by meaningless variance estimates
    (Gaussian study, small budgets).
    """
    n = len(candidates)
    spent = 0
    if budget < warmup * n:
        if strict:
            raise BudgetError(f"ocba needs budget >= {warmup * n} for warm-up")
        pool = list(candidates[:max(budget // 2, 1)])
        for c in pool:
            c.observe(evaluator(c))
            spent += 1
    else:
        pool = list(candidates)
        for c in pool:
            for _ in range(warmup):
                c.observe(evaluator(c))
                spent += 1
    while spent < budget:
        step = min(delta_budget, budget - spent)
        means = np.array([c.mean for c in pool])
        # Per-candidate variances from a 2-sample warm-up are far too noisy
        # to allocate on; shrink them toward the pooled variance.
        var = np.array([c.variance for c in pool])
        counts = np.array([c.count for c in pool])
        pooled = var.mean()
        stds = np.sqrt(np.maximum(
            OCBA_VAR_WEIGHT * var + (1 - OCBA_VAR_WEIGHT) * pooled, OCBA_VAR_FLOOR))
        target = _ocba_allocation(means, stds, spent + step)
        deficit = np.maximum(target - counts, 0)
        given = 0
        for idx in np.argsort(-deficit):
            take = int(min(deficit[idx], step - given))
            for _ in range(take):
                pool[idx].observe(evaluator(pool[idx]))
            given += take
            if given >= step:
                break
        # No deficits left (allocation already satisfied): refine the best.
        best = int(np.argmax(means))
        for _ in range(step - given):
            pool[best].observe(evaluator(pool[best]))
        spent += step
    return _argbest(pool)


STUDY_ALGORITHMS = ("simple_max", "round_robin", "ocba", "tre", "mre")


def gaussian_study(algorithms: Sequence[str], budget: int, trials: int = 2000,
                   n_vars: int = 50, sigma: float = 20.0,
                   rng: Optional[np.random.Generator] = None,
                   include_oracle: bool = True) -> dict[str, np.ndarray]:
    """Benchmark selection algorithms on synthetic Gaussian candidates.

    Each trial draws n_vars true means uniformly from [0, 100]; an
    evaluation of a candidate samples N(true_mean, sigma^2).  All
    algorithms see the same true means per trial (paired comparison);
    evaluation noise is independent per algorithm.  Returns per-trial
    true means of each algorithm's pick.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    results = {a: np.empty(trials) for a in algorithms}
    if include_oracle:
        results["oracle"] = np.empty(trials)
    for t in range(trials):
        true_means = rng.uniform(0, 100, size=n_vars)
        if include_oracle:
            results["oracle"][t] = true_means.max()
        for alg in algorithms:
            cands = [Candidate(id=i) for i in range(n_vars)]

            def evaluator(c):
                return rng.normal(true_means[c.id], sigma)

            if alg == "simple_max":
                obs = [evaluator(c) for c in cands]
                pick = simple_max(obs, cands)
            elif alg == "round_robin":
                pick = round_robin(cands, budget, evaluator)
            elif alg == "mre":
                pick = mre_select(cands, budget, evaluator)
            elif alg == "tre":
                pick = tre_select(cands, budget, evaluator, strict=False)
            elif alg == "ocba":
                pick = ocba_select(cands, budget, evaluator, strict=False)
            else:
                raise ValueError(f"unknown study algorithm {alg!r}")
            results[alg][t] = true_means[pick.id]
    return results
