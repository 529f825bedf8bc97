"""Adversarial network-trace generation: search for environments where a
target transport behavior underperforms a reference."""

from .env import (Bounds, Interval, Layout, LayoutError, Trace, decode,
                  default_bounds, encode, read_trace, sample_uniform, validate,
                  write_trace)
from .score import (Direction, PerfSummary, ScoreSpec, UseCase, eq1_score,
                    median_aggregate, role_score, uc_scores, weighted_perf)
from .sim import capacity_oracle, simulate
from .optim import (BOConfig, EPSConfig, Evaluation, EvaluationError, GAConfig,
                    OptimizerBudget, run_optimizer)
from .pls import (Candidate, gaussian_study, mre_select, ocba_select,
                  round_robin, simple_max, tre_select)
from .runner import (EvalConfig, EvalResult, ExternalExecutor,
                     SimulatorExecutor, evaluate, reevaluate_final)
from .experiment import (ConfigError, ExperimentConfig, load_config,
                         run_experiment)

__version__ = "1.0.0"
