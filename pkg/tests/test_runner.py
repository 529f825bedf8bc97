import stat

import pytest

from advgen.env import Interval, Trace
from advgen.optim import EvaluationError
from advgen.runner import (REEVAL_SEED_OFFSET, EvalConfig, ExecutorError,
                           ExternalExecutor, ExternalExitError,
                           ExternalParseError, ExternalTimeoutError,
                           SimulatorExecutor, evaluate, reevaluate_final)
from advgen.score import Direction, PerfSummary, ScoreSpec, UseCase, eq1_score

TRACE = Trace((Interval(20, 20, 800), Interval(60, 40, 700)), buffer_len=800)


class RecordingExecutor:
    """Deterministic stub: score derived from the seed; records all calls."""

    deterministic = False

    def __init__(self, fail_seeds=()):
        self.calls = []
        self.fail_seeds = set(fail_seeds)

    def run(self, trace, role, seed):
        self.calls.append((role, seed))
        if seed in self.fail_seeds:
            raise ExecutorError("injected failure")
        base = 10.0 if role == "reference" else 5.0
        return PerfSummary(throughput=base + (seed % 7), mean_delay=1.0)


class TestEvaluate:
    def test_single_rep_deterministic_simulator(self):
        ex = SimulatorExecutor({"reference": "oracle", "target": "reno"})
        assert ex.deterministic
        cfg = EvalConfig(repetitions=1)
        a = evaluate(TRACE, cfg, ex, master_seed=3)
        b = evaluate(TRACE, cfg, ex, master_seed=3)
        assert a.score == b.score
        assert 0 < a.score <= 1  # reno cannot reach the capacity oracle

    def test_median_cross_check(self):
        ex = RecordingExecutor()
        cfg = EvalConfig(repetitions=5)
        res = evaluate(TRACE, cfg, ex, master_seed=0)
        refs = sorted(s.throughput for s in res.runs["reference"])
        tgts = sorted(s.throughput for s in res.runs["target"])
        assert res.reference_score == refs[2]
        assert res.target_score == tgts[2]
        assert res.score == eq1_score(refs[2], tgts[2])

    def test_seed_layout_unique_per_eval(self):
        ex = RecordingExecutor()
        cfg = EvalConfig(repetitions=3)
        evaluate(TRACE, cfg, ex, master_seed=100, eval_index=0)
        evaluate(TRACE, cfg, ex, master_seed=100, eval_index=1)
        seeds = [s for _, s in ex.calls]
        assert len(set(seeds)) == len(seeds) == 12

    def test_failures_discarded_then_error(self):
        # Fail 2 of 5 target repetitions: still fine.
        ex = RecordingExecutor(fail_seeds={1, 3})
        res = evaluate(TRACE, EvalConfig(repetitions=5), ex, master_seed=0)
        assert len(res.runs["target"]) == 3
        # Fail 3 of 5: more than half, evaluation errors.
        ex = RecordingExecutor(fail_seeds={1, 3, 5})
        with pytest.raises(EvaluationError):
            evaluate(TRACE, EvalConfig(repetitions=5), ex, master_seed=0)

    def test_concurrent_matches_sequential(self):
        seq = evaluate(TRACE, EvalConfig(repetitions=5), RecordingExecutor(),
                       master_seed=7)
        par = evaluate(TRACE, EvalConfig(repetitions=5, max_concurrent=4),
                       RecordingExecutor(), master_seed=7)
        assert seq.score == par.score
        assert seq.runs == par.runs

    def test_uc2_normalizers_filled_from_trace(self):
        ex = SimulatorExecutor({"reference": "oracle", "target": "reno"})
        spec = ScoreSpec(use_case=UseCase.UC2_WEIGHTED, t_coeff=0.6)
        res = evaluate(TRACE, EvalConfig(repetitions=1, score_spec=spec), ex)
        assert 0 <= res.reference_score <= 1
        assert 0 <= res.target_score <= 1


class TestReevaluate:
    def test_seed_namespace_disjoint(self):
        ex = RecordingExecutor()
        cfg = EvalConfig(repetitions=3)
        for i in range(5):
            evaluate(TRACE, cfg, ex, master_seed=0, eval_index=i)
        learn_seeds = {s for _, s in ex.calls}
        ex.calls.clear()
        reevaluate_final(TRACE, cfg, ex, master_seed=0, rounds=5)
        reeval_seeds = {s for _, s in ex.calls}
        assert learn_seeds.isdisjoint(reeval_seeds)
        assert all(s >= REEVAL_SEED_OFFSET for s in reeval_seeds)

    def test_deterministic_executor_zero_std(self):
        ex = SimulatorExecutor({"reference": "oracle", "target": "reno"})
        cfg = EvalConfig(repetitions=1)
        mean, std = reevaluate_final(TRACE, cfg, ex, master_seed=3, rounds=4)
        assert std == 0.0
        assert mean == evaluate(TRACE, cfg, ex, master_seed=3).score

    def test_zero_rounds_error(self):
        with pytest.raises(ValueError):
            reevaluate_final(TRACE, EvalConfig(), RecordingExecutor(), rounds=0)


def make_script(tmp_path, body):
    p = tmp_path / "stub.sh"
    p.write_text("#!/bin/sh\n" + body)
    p.chmod(p.stat().st_mode | stat.S_IEXEC)
    return p


class TestExternalExecutor:
    def test_placeholders_required(self):
        with pytest.raises(ValueError):
            ExternalExecutor("run-something")

    def test_fixed_metrics(self, tmp_path):
        script = make_script(
            tmp_path, 'printf "throughput_mbps=10.0\\nmean_delay_ms=25.0\\n" > "$2"\n')
        ex = ExternalExecutor(f"{script} {{trace}} {{out}}")
        p = ex.run(TRACE, "target", seed=0)
        assert p == PerfSummary(throughput=10.0, mean_delay=25.0)

    def test_reads_trace_file(self, tmp_path):
        # The stub derives throughput from the first interval's bandwidth.
        script = make_script(tmp_path, (
            'bw=$(sed -n 2p "$1" | cut -d, -f2)\n'
            'printf "throughput_mbps=$bw\\nmean_delay_ms=1\\nfct_ms=99\\n" > "$2"\n'))
        ex = ExternalExecutor(f"{script} {{trace}} {{out}}")
        p = ex.run(TRACE, "target", seed=0)
        assert p.throughput == 20.0
        assert p.completion_time == 99.0

    def test_nonzero_exit(self, tmp_path):
        script = make_script(tmp_path, "exit 3\n")
        ex = ExternalExecutor(f"{script} {{trace}} {{out}}")
        with pytest.raises(ExternalExitError):
            ex.run(TRACE, "target", seed=0)

    def test_timeout(self, tmp_path):
        script = make_script(tmp_path, "sleep 5\n")
        ex = ExternalExecutor(f"{script} {{trace}} {{out}}", timeout_ms=200)
        with pytest.raises(ExternalTimeoutError):
            ex.run(TRACE, "target", seed=0)

    def test_parse_error_names_line(self, tmp_path):
        script = make_script(
            tmp_path, 'printf "throughput_mbps=10\\ngarbage line\\n" > "$2"\n')
        ex = ExternalExecutor(f"{script} {{trace}} {{out}}")
        with pytest.raises(ExternalParseError, match="garbage line"):
            ex.run(TRACE, "target", seed=0)

    def test_missing_key(self, tmp_path):
        script = make_script(tmp_path, 'printf "throughput_mbps=10\\n" > "$2"\n')
        ex = ExternalExecutor(f"{script} {{trace}} {{out}}")
        with pytest.raises(ExternalParseError, match="mean_delay_ms"):
            ex.run(TRACE, "target", seed=0)
