"""Gap scoring between a reference and a target behavior.

The headline score is the relative gap between two nonnegative scalars,
normalized by the larger one and sign-adjusted by metric direction, so it
always lands in [-1, 1].  Per-use-case mappings turn raw performance
summaries into those two scalars, and medians over repeated runs are taken
per role before the gap is computed.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence


class Direction(str, Enum):
    HIGHER_BETTER = "higher-better"
    LOWER_BETTER = "lower-better"


class UseCase(str, Enum):
    UC1_CAPACITY = "uc1-capacity"
    UC1_FAIRNESS = "uc1-fairness"
    UC2_WEIGHTED = "uc2-weighted"
    UC2_FAIRNESS = "uc2-fairness"
    UC3_MULTIPATH = "uc3-multipath"


# Which named runs each use case expects in the execution outputs.
REQUIRED_ROLES = {
    UseCase.UC1_CAPACITY: ("reference", "target"),
    UseCase.UC1_FAIRNESS: ("ref_only", "ref_with_target"),
    UseCase.UC2_WEIGHTED: ("reference", "target"),
    UseCase.UC2_FAIRNESS: ("competitor_vs_reference", "competitor_vs_target"),
    UseCase.UC3_MULTIPATH: ("single_link", "dual_link"),
}


@dataclass(frozen=True)
class PerfSummary:
    """Measured performance of one protocol execution in one trace."""

    throughput: float                 # Mbps
    mean_delay: float                 # ms per packet
    completion_time: Optional[float] = None  # ms
    bytes_delivered: int = 0

    def __post_init__(self):
        if self.throughput < 0 or self.mean_delay < 0:
            raise ValueError("throughput and mean_delay must be >= 0")


@dataclass(frozen=True)
class ScoreSpec:
    """Selects the use-case score mapping and its constants."""

    use_case: UseCase = UseCase.UC1_CAPACITY
    direction: Direction = Direction.HIGHER_BETTER
    t_coeff: Optional[float] = None   # UC2 weighted only
    tau_max: Optional[float] = None   # Mbps; default: trace mean bandwidth
    d_min: Optional[float] = None     # ms; default: trace minimum latency

    def __post_init__(self):
        if self.use_case is UseCase.UC2_WEIGHTED:
            if self.t_coeff is None:
                raise ValueError("uc2-weighted requires t_coeff")
            if not 0 <= self.t_coeff <= 1:
                raise ValueError("t_coeff must be in [0, 1]")
        elif self.t_coeff is not None:
            raise ValueError("t_coeff only applies to uc2-weighted")


def eq1_score(reference_score: float, target_score: float,
              direction: Direction = Direction.HIGHER_BETTER) -> float:
    """Relative gap between two nonnegative scores, in [-1, 1].

    Both inputs zero scores 0: an environment where neither behavior moves
    data is uninteresting rather than maximally adversarial.
    """
    if reference_score < 0 or target_score < 0:
        raise ValueError("scores must be nonnegative")
    denom = max(reference_score, target_score)
    if denom == 0:
        return 0.0
    if direction is Direction.HIGHER_BETTER:
        return (reference_score - target_score) / denom
    return (target_score - reference_score) / denom


def weighted_perf(p: PerfSummary, t_coeff: float, tau_max: float, d_min: float) -> float:
    """Weighted relative-throughput / relative-delay performance in [0, 1]."""
    if tau_max <= 0 or d_min <= 0:
        raise ValueError("tau_max and d_min must be positive")
    if p.mean_delay <= 0 and t_coeff < 1:
        raise ValueError("mean_delay must be positive when delay is weighted")
    tau_rel = min(p.throughput / tau_max, 1.0)
    d_rel = min(d_min / p.mean_delay, 1.0) if t_coeff < 1 else 0.0
    return t_coeff * tau_rel + (1 - t_coeff) * d_rel


def role_score(spec: ScoreSpec, p: PerfSummary) -> float:
    """Scalar a single run contributes to its side of the gap score."""
    if spec.use_case is UseCase.UC2_WEIGHTED:
        if spec.tau_max is None or spec.d_min is None:
            raise ValueError("uc2-weighted requires tau_max and d_min")
        return weighted_perf(p, spec.t_coeff, spec.tau_max, spec.d_min)
    if (spec.use_case is UseCase.UC3_MULTIPATH
            and spec.direction is Direction.LOWER_BETTER):
        if p.completion_time is None:
            raise ValueError("uc3 lower-better requires completion times")
        return p.completion_time
    return p.throughput


def uc_scores(spec: ScoreSpec, runs: Mapping[str, PerfSummary]) -> tuple[float, float]:
    """Map named execution outputs to the (reference_score, target_score) pair."""
    required = REQUIRED_ROLES[spec.use_case]
    missing = [r for r in required if r not in runs]
    if missing:
        raise KeyError(f"{spec.use_case.value} requires runs {missing}")
    a, b = (runs[r] for r in required)
    return role_score(spec, a), role_score(spec, b)


def median_aggregate(scores: Sequence[float]) -> float:
    """Median of per-run scores for one role; even counts average the middle two."""
    if not scores:
        raise ValueError("median of empty list")
    return statistics.median(scores)
