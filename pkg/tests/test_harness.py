#!/usr/bin/env python

"""Run outputs, sweeps, comparisons, the audit and the command line."""

import argparse
import json

import numpy as np
import pandas as pd
import pytest

from flucsim.cli import main, parse_seeds
from flucsim.config import RunConfig
from flucsim.harness import audit_run, compare, run_compression, run_experiment, sweep
from flucsim.io.writer import Writer
from flucsim.nn.mlp import MlpModel
from flucsim.nn.snapshot import read_snapshot, write_snapshot
from flucsim.ran.world import TTI_COLUMNS
from flucsim.utils.logger_setup import set_log_level
from flucsim.utils.utils import ConfigurationError, StatisticError

RUN_FILES = {
    "ttis.csv", "reward_trajectory.csv", "summary.json", "federation.csv",
    "compression.csv", "timing.json", "config.json",
}


class TestRunExperiment:
    def test_writes_outputs(self, small_config, tmp_path):
        out = tmp_path / "run"
        run_experiment(small_config, out=str(out))
        assert RUN_FILES <= {i.name for i in out.iterdir()}
        frame = pd.read_csv(out / "ttis.csv")
        assert list(frame.columns) == TTI_COLUMNS
        trajectory = pd.read_csv(out / "reward_trajectory.csv")
        assert list(trajectory["tti"]) == sorted(frame["tti"].unique())
        assert trajectory["n_ues"].sum() == len(frame)
        np.testing.assert_allclose(
            trajectory["mean_reward"], frame.groupby("tti")["reward"].mean().to_numpy())
        with open(out / "config.json", encoding="utf-8") as infile:
            assert json.load(infile)["seed"] == 7

    def test_no_out_writes_nothing(self, small_config, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        run_experiment(small_config.replace(ttis=20))
        assert list(tmp_path.iterdir()) == []

    def test_zero_ttis(self, small_config, tmp_path):
        out = tmp_path / "empty"
        record = run_experiment(small_config.replace(ttis=0), out=str(out))
        assert record.rows == []
        lines = (out / "ttis.csv").read_text().splitlines()
        assert lines == [",".join(TTI_COLUMNS)]
        assert (out / "reward_trajectory.csv").read_text().splitlines() == ["tti,mean_reward,n_ues"]
        assert record.summary()["mean_reward"] is None

    def test_repeat_is_bytewise_identical(self, small_config, tmp_path):
        for name in ("one", "two"):
            run_experiment(small_config, out=str(tmp_path / name))
        for fname in ("ttis.csv", "summary.json", "federation.csv", "config.json"):
            assert (tmp_path / "one" / fname).read_bytes() == (tmp_path / "two" / fname).read_bytes()

    def test_model_outputs(self, small_config, tmp_path):
        prefix = tmp_path / "models" / "kt"
        (tmp_path / "models").mkdir()
        config = small_config.replace(save_model=str(prefix), save_fed_rounds=True)
        record = run_experiment(config, out=str(tmp_path / "run"))
        for label in record.final_models:
            assert (tmp_path / "models" / f"kt_{label}.mlp").is_file()
        rounds = list((tmp_path / "run" / "fed_rounds").iterdir())
        assert len(rounds) == len(record.fed_snapshots) > 0


class TestAudit:
    def test_clean_run_passes(self, small_config, tmp_path):
        run_experiment(small_config, out=str(tmp_path))
        assert audit_run(str(tmp_path)) == {}

    def test_tampered_summary(self, small_config, tmp_path):
        run_experiment(small_config, out=str(tmp_path))
        path = tmp_path / "summary.json"
        summary = json.loads(path.read_text())
        summary["mean_reward"] += 0.1
        summary["rb_conflicts"] = 2
        path.write_text(json.dumps(summary))
        bad = audit_run(str(tmp_path))
        assert set(bad) == {"mean_reward", "rb_conflicts"}

    def test_missing_run(self, tmp_path):
        with pytest.raises(ConfigurationError):
            audit_run(str(tmp_path / "nothing"))


class TestCompressionRun:
    def test_outputs(self, small_config, tmp_path):
        config = small_config.replace(
            compression_ttis=300, split_interval=20, n_required=1, compression_eval_ttis=20)
        record = run_compression(config, out=str(tmp_path))
        assert (tmp_path / "compressed.mlp").is_file()
        assert (tmp_path / "effectiveness.json").is_file()
        assert record.compression
        with open(tmp_path / "config.json", encoding="utf-8") as infile:
            assert json.load(infile)["algorithm"] == "dil"


@pytest.mark.slow
class TestCompressionCurve:
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_threshold_below_peak(self, seed, tmp_path):
        config = RunConfig(seed=seed, m_avg=10)
        record = run_compression(config, out=str(tmp_path))
        report = record.effectiveness
        assert any(row["phase"] == "pruning" for row in record.compression)
        assert report["threshold_neurons"] is not None
        assert report["threshold_neurons"] < report["peak_neurons"]
        above = [i for i in report["curve"] if i["total_neurons"] >= report["threshold_neurons"]]
        assert all(i["effectiveness"] >= 0.9 for i in above)

        sizes = report["recommended_hidden_sizes"]
        assert sum(sizes) == report["threshold_neurons"]
        sized = config.replace(hidden_sizes=sizes)
        path = write_snapshot(MlpModel(sized.layer_sizes), tmp_path / "recommended.mlp")
        assert list(read_snapshot(path).layer_sizes) == list(sized.layer_sizes)
        compressed = read_snapshot(tmp_path / "compressed.mlp")
        assert (compressed.input_dim, compressed.output_dim) == (config.state_dim, config.n_bs)


class TestSweep:
    def test_shape(self, small_config, tmp_path):
        config = small_config.replace(ttis=60)
        table = sweep(config, ues=[2, 3], seeds=[1, 2, 3],
                      algorithms=["dil", "maxrssi"], out=str(tmp_path))
        assert len(table) == 4
        assert set(table["n_seeds"]) == {3}
        assert {"mean_reward_mean", "mean_reward_std", "mean_reward_ci95"} <= set(table.columns)
        runs = pd.read_csv(tmp_path / "sweep_runs.csv")
        assert len(runs) == 12
        assert list(runs.columns[:3]) == ["algorithm", "m_avg", "seed"]
        assert (tmp_path / "sweep.csv").is_file()

    def test_identical_seeds_have_zero_spread(self, small_config):
        table = sweep(small_config.replace(ttis=60), ues=[8], seeds=[5, 5], algorithms=["maxrssi"])
        assert table["mean_reward_std"].iloc[0] == 0.0
        assert table["mean_reward_ci95"].iloc[0] == 0.0

    def test_single_seed_matches_run(self, small_config):
        config = small_config.replace(ttis=60, algorithm="dil")
        table = sweep(config, ues=[4], seeds=[7])
        summary = run_experiment(config.replace(m_avg=4.0)).summary()
        assert table["mean_reward_mean"].iloc[0] == summary["mean_reward"]
        assert np.isnan(table["mean_reward_ci95"].iloc[0])

    def test_workers_do_not_change_results(self, small_config):
        config = small_config.replace(ttis=40)
        one = sweep(config, ues=[3], seeds=[1, 2], algorithms=["dil"], workers=1)
        two = sweep(config, ues=[3], seeds=[1, 2], algorithms=["dil"], workers=2)
        pd.testing.assert_frame_equal(one, two)

    def test_needs_seeds_and_ues(self, small_config):
        with pytest.raises(ConfigurationError):
            sweep(small_config, ues=[3], seeds=[])
        with pytest.raises(ConfigurationError):
            sweep(small_config, ues=[], seeds=[1])


class TestCompare:
    def test_delay_improvement(self):
        table = pd.DataFrame({"algorithm": ["cl", "ktfluc"], "mean_gbr_delay_ms": [100.0, 35.0]})
        assert compare(table, "cl", "ktfluc", "mean_gbr_delay_ms") == pytest.approx(0.65)

    def test_higher_is_better(self):
        table = pd.DataFrame({
            "algorithm": ["dil", "ktfluc"], "m_avg": [45, 45],
            "mean_nongbr_throughput_bps_mean": [1.0, 1.52],
        })
        assert compare(
            table, "dil", "ktfluc", "mean_nongbr_throughput_bps", m_avg=45) == pytest.approx(0.52)

    def test_selects_cell_by_load(self):
        table = pd.DataFrame({
            "algorithm": ["dil", "dil", "fl", "fl"], "m_avg": [25, 45, 25, 45],
            "mean_reward_mean": [0.5, 0.4, 0.6, 0.6],
        })
        assert compare(table, "dil", "fl", "mean_reward", m_avg=45) == pytest.approx(0.5)
        with pytest.raises(ConfigurationError):
            compare(table, "dil", "fl", "mean_reward")

    def test_missing_and_undefined(self):
        table = pd.DataFrame({"algorithm": ["dil", "fl"], "mean_reward": [0.0, np.nan]})
        with pytest.raises(ConfigurationError):
            compare(table, "dil", "cl", "mean_reward")
        with pytest.raises(ConfigurationError):
            compare(table, "dil", "fl", "blocking_rate")
        with pytest.raises(StatisticError):
            compare(table, "dil", "fl", "mean_reward")
        table.loc[1, "mean_reward"] = 0.3
        with pytest.raises(StatisticError):
            compare(table, "dil", "fl", "mean_reward")


class TestWriter:
    def test_cleanup_removes_created_dir(self, tmp_path):
        writer = Writer(str(tmp_path / "new"))
        writer.write_csv(pd.DataFrame({"a": [1]}), "a.csv")
        writer.write_json({"b": 2}, "b.json")
        writer.cleanup()
        assert not (tmp_path / "new").exists()

    def test_cleanup_keeps_existing_files(self, tmp_path):
        (tmp_path / "keep.txt").write_text("x")
        writer = Writer(str(tmp_path))
        writer.write_csv(pd.DataFrame({"a": [1]}), "a.csv")
        writer.cleanup()
        assert [i.name for i in tmp_path.iterdir()] == ["keep.txt"]


class TestCli:
    @pytest.mark.parametrize("text, seeds", [
        ("1..5", [1, 2, 3, 4, 5]), ("1,4,9", [1, 4, 9]), ("7", [7]),
    ])
    def test_parse_seeds(self, text, seeds):
        assert parse_seeds(text) == seeds

    @pytest.mark.parametrize("text", ["a..b", "", "-1", "5..1"])
    def test_bad_seeds(self, text):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_seeds(text)

    def test_run_then_audit(self, small_config, tmp_path, capsys):
        config_path = tmp_path / "scenario.json"
        small_config.replace(ttis=60).to_json(config_path)
        out = tmp_path / "run"
        code = main(["run", "--config", str(config_path), "--algorithm", "dil", "--out", str(out)])
        assert code == 0
        assert "dil: mean reward" in capsys.readouterr().out
        assert main(["audit", "--run", str(out)]) == 0

        summary = json.loads((out / "summary.json").read_text())
        summary["eligible_rate"] = -1.0
        (out / "summary.json").write_text(json.dumps(summary))
        assert main(["audit", "--run", str(out)]) == 1

    def test_error_exit_code(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "missing.json")])
        assert code == 2
        assert capsys.readouterr().err.startswith("fluc-sim: error:")

    def test_bad_config_value(self, tmp_path, capsys):
        config_path = tmp_path / "scenario.json"
        config_path.write_text(json.dumps({"epsilon": 3}))
        assert main(["run", "--config", str(config_path)]) == 2

    def test_log_file(self, tmp_path):
        log_path = tmp_path / "run.log"
        try:
            code = main([
                "--log-level", "INFO", "--log-file", str(log_path),
                "run", "--algorithm", "maxrssi", "--ttis", "10", "--out", str(tmp_path / "run"),
            ])
        finally:
            set_log_level("WARNING")
        assert code == 0
        text = log_path.read_text()
        assert "running maxrssi for 10 TTIs" in text
        assert "DEBUG" not in text
