"""Command-line interface.

Exit codes: 0 success, 1 configuration error, 2 runtime failure
(including an invalid trace under ``validate``).
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import pls as pls_mod
from .env import LayoutError, default_bounds, read_trace, validate as validate_trace
from .experiment import ConfigError, ExperimentConfig, build_executor, load_config, \
    run_experiment
from .runner import EvalConfig, reevaluate_final
from .sim import MODEL_FACTORIES, simulate, write_event_log


def _fail(exit_code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(exit_code)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose):
    """Adversarial network-trace generation toolkit."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(file_okay=False), default=None,
              help="Override the configured output directory.")
@click.option("--seed", type=int, default=None, help="Override the master seed.")
@click.option("--jobs", type=int, default=None,
              help="Override max concurrent executor runs.")
@click.option("--no-plot", is_flag=True, help="Skip figure rendering.")
def run(config_path, output, seed, jobs, no_plot):
    """Run the full search pipeline from a YAML config."""
    import dataclasses

    try:
        cfg = load_config(config_path)
        if output is not None:
            cfg = dataclasses.replace(cfg, output_dir=Path(output))
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        if jobs is not None:
            cfg = dataclasses.replace(cfg, max_concurrent=jobs)
    except (ConfigError, ValueError) as e:
        _fail(1, str(e))
    try:
        report = run_experiment(cfg, with_plots=not no_plot)
    except Exception as e:  # noqa: BLE001 - any pipeline failure is exit 2
        _fail(2, f"run failed: {e}")
    click.echo(f"best observed score: {report.best_observed_score:.4f}")
    click.echo(f"winner (via {report.winner_source}): "
               f"reevaluated {report.reeval_mean:.4f} "
               f"(std {report.reeval_std:.4f}, {report.reeval_runs} rounds)")
    click.echo(f"artifacts written to {cfg.output_dir}")


@main.command("bench-pls")
@click.option("--budgets", default="50,100,150,200,250", show_default=True,
              help="Comma-separated selection budgets.")
@click.option("--trials", default=2000, show_default=True, type=int)
@click.option("--sigma", default=20.0, show_default=True, type=float,
              help="Evaluation noise standard deviation.")
@click.option("--candidates", default=50, show_default=True, type=int,
              help="Synthetic candidates per trial.")
@click.option("--seed", default=2024, show_default=True, type=int)
@click.option("--out", default="bench_pls.csv", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--no-plot", is_flag=True, help="Skip figure rendering.")
def bench_pls(budgets, trials, sigma, candidates, seed, out, no_plot):
    """Benchmark selection algorithms on synthetic Gaussian candidates."""
    try:
        budget_list = [int(b) for b in budgets.split(",") if b.strip()]
        if not budget_list or any(b < 1 for b in budget_list):
            raise ValueError(f"bad budgets {budgets!r}")
        if trials < 1 or sigma < 0 or candidates < 2:
            raise ValueError("trials >= 1, sigma >= 0, candidates >= 2 required")
    except ValueError as e:
        _fail(1, str(e))

    rows: dict[str, dict[int, tuple[float, float]]] = {}
    try:
        for budget in budget_list:
            rng = np.random.default_rng(seed + budget)
            results = pls_mod.gaussian_study(
                pls_mod.STUDY_ALGORITHMS, budget, trials=trials,
                n_vars=candidates, sigma=sigma, rng=rng)
            for alg, picks in results.items():
                stderr = picks.std(ddof=1) / np.sqrt(len(picks)) if len(picks) > 1 else 0.0
                rows.setdefault(alg, {})[budget] = (float(picks.mean()), float(stderr))
    except Exception as e:  # noqa: BLE001
        _fail(2, f"benchmark failed: {e}")

    out = Path(out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as f:
        f.write("budget,algorithm,mean_true_score,stderr\n")
        for budget in budget_list:
            for alg in (*pls_mod.STUDY_ALGORITHMS, "oracle"):
                mean, stderr = rows[alg][budget]
                f.write(f"{budget},{alg},{mean:.4f},{stderr:.4f}\n")
    click.echo(f"wrote {out}")
    if not no_plot:
        from .plotting import plot_pls_benchmark
        fig_path = out.with_suffix(".png")
        plot_pls_benchmark(rows, fig_path)
        click.echo(f"wrote {fig_path}")


@main.command()
@click.argument("trace_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Reproduce the configured reevaluated score for this trace.")
@click.option("--model", default="reno", show_default=True,
              help="Congestion-control model for a bare replay.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--events", type=click.Path(dir_okay=False), default=None,
              help="Write the packet event log as CSV.")
def replay(trace_path, config_path, model, seed, events):
    """Re-run a trace: bare simulation, or the configured evaluation."""
    try:
        trace = read_trace(trace_path)
    except (ValueError, OSError) as e:
        _fail(2, f"cannot read trace: {e}")

    if config_path is not None:
        try:
            cfg = load_config(config_path)
        except ConfigError as e:
            _fail(1, str(e))
        try:
            executor = build_executor(cfg)
            repetitions = cfg.repetitions
            if (cfg.collapse_deterministic
                    and getattr(executor, "deterministic", False)):
                repetitions = 1
            eval_cfg = EvalConfig(repetitions=repetitions,
                                  max_concurrent=cfg.max_concurrent,
                                  score_spec=cfg.score_spec)
            mean, std = reevaluate_final(trace, eval_cfg, executor,
                                         master_seed=cfg.seed,
                                         rounds=cfg.reeval_rounds)
        except Exception as e:  # noqa: BLE001
            _fail(2, f"replay failed: {e}")
        click.echo(f"reevaluated score: {mean:.4f} (std {std:.4f}, "
                   f"{cfg.reeval_rounds} rounds)")
        if events:
            _write_bare_events(trace, model, seed, events)
        return

    if model not in MODEL_FACTORIES:
        _fail(1, f"unknown model {model!r}; choose from {sorted(MODEL_FACTORIES)}")
    try:
        results = simulate(trace, model, seed=seed, collect_events=bool(events))
    except Exception as e:  # noqa: BLE001
        _fail(2, f"simulation failed: {e}")
    for fid, res in enumerate(results):
        s = res.summary
        click.echo(f"flow {fid} ({model}): "
                   f"throughput {s.throughput:.2f} Mbps, "
                   f"mean delay {s.mean_delay:.1f} ms, "
                   f"{s.bytes_delivered} bytes"
                   + (f", fct {s.completion_time:.0f} ms"
                      if s.completion_time is not None else ""))
    if events:
        write_event_log(results, events)
        click.echo(f"wrote {events}")


def _write_bare_events(trace, model, seed, events_path):
    results = simulate(trace, model, seed=seed, collect_events=True)
    write_event_log(results, events_path)
    click.echo(f"wrote {events_path}")


@main.command()
@click.argument("trace_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Validate against this config's bounds.")
def validate(trace_path, config_path):
    """Check a trace file against bounds; exit 2 when invalid."""
    try:
        trace = read_trace(trace_path)
    except (ValueError, OSError) as e:
        _fail(2, f"invalid trace file: {e}")
    if config_path is not None:
        try:
            bounds = load_config(config_path).bounds
        except ConfigError as e:
            _fail(1, str(e))
    else:
        bounds = default_bounds(len(trace.intervals),
                                data_range=(1, 10**9) if trace.data_size else None)
    try:
        violations = validate_trace(trace, bounds)
    except LayoutError as e:
        _fail(2, f"trace shape mismatch: {e}")
    if violations:
        for v in violations:
            click.echo(f"violation: {v}", err=True)
        sys.exit(2)
    click.echo(f"{trace_path}: valid ({len(trace.intervals)} intervals, "
               f"buffer {trace.buffer_len} packets)")


if __name__ == "__main__":
    main()
