import json

import pytest
from click.testing import CliRunner

from advgen.cli import main
from advgen.env import Interval, Trace, write_trace
from advgen.experiment import ConfigError, load_config


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, **overrides):
    base = {
        "seed": 5,
        "intervals": 2,
        "bounds": {"duration": [500, 900]},
        "optimizer": {"name": "rg"},
        "budget": {"evaluations": 20},
        "pls": {"algorithm": "round_robin", "top_n": 3, "budget_fraction": 0.1},
        "executor": {"type": "simulator",
                     "roles": {"reference": "oracle", "target": "reno"}},
        "output_dir": str(tmp_path / "out"),
    }
    base.update(overrides)
    import yaml
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(base))
    return p


class TestConfig:
    def test_unknown_top_level_key(self, tmp_path):
        p = write_config(tmp_path, bogus=1)
        with pytest.raises(ConfigError, match="bogus"):
            load_config(p)

    def test_unknown_nested_key(self, tmp_path):
        p = write_config(tmp_path, pls={"algorithm": "mre", "typo": 2})
        with pytest.raises(ConfigError, match="typo"):
            load_config(p)

    def test_bad_fraction(self, tmp_path):
        p = write_config(tmp_path, pls={"algorithm": "mre", "budget_fraction": 1.5})
        with pytest.raises(ConfigError):
            load_config(p)

    def test_external_requires_command(self, tmp_path):
        p = write_config(tmp_path, executor={"type": "external"})
        with pytest.raises(ConfigError, match="command"):
            load_config(p)

    def test_defaults_round_trip(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.seed == 5
        assert cfg.bounds.upper[2] == 900
        assert cfg.pls_top_n == 3

    def test_config_error_exits_1(self, runner, tmp_path):
        p = write_config(tmp_path, bogus=1)
        res = runner.invoke(main, ["run", str(p)])
        assert res.exit_code == 1


class TestRunCommand:
    def test_artifacts_and_reproducibility(self, runner, tmp_path):
        p = write_config(tmp_path)
        out = tmp_path / "out"
        res = runner.invoke(main, ["run", str(p), "--no-plot"])
        assert res.exit_code == 0, res.output
        for name in ("history.csv", "winner.trace", "report.json"):
            assert (out / name).exists()
        first = (out / "history.csv").read_bytes()
        report = json.loads((out / "report.json").read_text())
        assert report["winner_valid"] is True
        assert report["budget"]["optimizer_evaluations"] == 18
        assert report["budget"]["pls_runs"] == 2
        # Same config + seed: byte-identical history on the deterministic executor.
        res = runner.invoke(main, ["run", str(p), "--no-plot"])
        assert res.exit_code == 0
        assert (out / "history.csv").read_bytes() == first

    def test_plot_rendered(self, runner, tmp_path):
        p = write_config(tmp_path, budget={"evaluations": 12},
                         pls={"algorithm": "simple_max"})
        res = runner.invoke(main, ["run", str(p)])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "out" / "history.png").exists()


class TestBenchPls:
    def test_csv_rows(self, runner, tmp_path):
        out = tmp_path / "bench.csv"
        res = runner.invoke(main, ["bench-pls", "--budgets", "50", "--trials", "10",
                                   "--out", str(out), "--no-plot"])
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert lines[0] == "budget,algorithm,mean_true_score,stderr"
        algs = [ln.split(",")[1] for ln in lines[1:]]
        assert algs == ["simple_max", "round_robin", "ocba", "tre", "mre", "oracle"]

    def test_bad_budgets(self, runner):
        res = runner.invoke(main, ["bench-pls", "--budgets", "0"])
        assert res.exit_code == 1


class TestReplayValidate:
    def test_validate_ok_and_violation(self, runner, tmp_path):
        good = tmp_path / "good.trace"
        write_trace(Trace((Interval(10, 10, 600),), buffer_len=600), good)
        res = runner.invoke(main, ["validate", str(good)])
        assert res.exit_code == 0, res.output

        bad = tmp_path / "bad.trace"
        write_trace(Trace((Interval(500, 10, 600),), buffer_len=600), bad)
        res = runner.invoke(main, ["validate", str(bad)])
        assert res.exit_code == 2

    def test_validate_unreadable(self, runner, tmp_path):
        junk = tmp_path / "junk.trace"
        junk.write_text("not a trace\n")
        res = runner.invoke(main, ["validate", str(junk)])
        assert res.exit_code == 2

    def test_replay_bare_and_events(self, runner, tmp_path):
        tr = tmp_path / "t.trace"
        write_trace(Trace((Interval(10, 10, 600),), buffer_len=600), tr)
        ev = tmp_path / "events.csv"
        res = runner.invoke(main, ["replay", str(tr), "--events", str(ev)])
        assert res.exit_code == 0, res.output
        assert "throughput" in res.output
        assert ev.read_text().startswith("time_ms,event,packet_id,flow_id")

    def test_replay_unknown_model(self, runner, tmp_path):
        tr = tmp_path / "t.trace"
        write_trace(Trace((Interval(10, 10, 600),), buffer_len=600), tr)
        res = runner.invoke(main, ["replay", str(tr), "--model", "cubic"])
        assert res.exit_code == 1
