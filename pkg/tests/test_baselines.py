#!/usr/bin/env python

"""The simulation loop under every algorithm mode."""

import numpy as np
import pandas as pd
import pytest

from flucsim.baselines import (
    AlgorithmMode, Simulation, run_cl, run_dil, run_fl, run_fli, run_ktfluc, run_mode,
)
from flucsim.config import ALGORITHMS, RunConfig
from flucsim.nn.mlp import MlpModel
from flucsim.nn.snapshot import write_snapshot
from flucsim.utils.utils import ConfigurationError

AUDIT_COUNTERS = ("rb_conflicts", "attachment_errors", "conservation_errors")


class TestAlgorithmMode:
    def test_flags(self):
        assert AlgorithmMode("ktfluc").transfer
        assert not AlgorithmMode("fli").transfer
        assert {i.value for i in AlgorithmMode if i.federated} == {"ktfluc", "fl", "fli"}
        assert {i.value for i in AlgorithmMode if i.newcomer_init} == {"ktfluc", "fli"}
        assert {i.value for i in AlgorithmMode} == set(ALGORITHMS)

    def test_unknown(self):
        with pytest.raises(ValueError):
            AlgorithmMode("qlearning")


class TestModes:
    @pytest.mark.parametrize("algorithm", ALGORITHMS)
    def test_runs_clean(self, small_config, algorithm):
        record = run_mode(small_config.replace(ttis=120), AlgorithmMode(algorithm))
        assert len(record.rows) > 0
        assert all(record.counters[i] == 0 for i in AUDIT_COUNTERS)
        summary = record.summary()
        assert summary["ttis"] == 120
        assert summary["mean_reward"] is not None

    def test_final_models_per_mode(self, small_config):
        config = small_config.replace(ttis=90)
        kt = run_ktfluc(config)
        assert set(kt.final_models) <= {"global_gbr", "global_nongbr"}
        assert kt.final_models
        dil = run_dil(config)
        assert all(key.startswith("ue") for key in dil.final_models)
        assert run_mode(config, AlgorithmMode.MAX_RSSI).final_models == {}
        central = run_mode(config, AlgorithmMode.CL)
        assert set(central.final_models) == {"central"}
        assert "cl_overflow" in central.counters

    @pytest.mark.parametrize("runner, algorithm", [
        (run_cl, "cl"), (run_fl, "fl"), (run_fli, "fli"),
    ])
    def test_named_runners(self, small_config, runner, algorithm):
        config = small_config.replace(ttis=60)
        pd.testing.assert_frame_equal(
            runner(config).df, run_mode(config, AlgorithmMode(algorithm)).df)

    def test_determinism(self, small_config):
        one = run_ktfluc(small_config).df
        two = run_ktfluc(small_config).df
        pd.testing.assert_frame_equal(one, two)

    def test_dil_and_ktfluc_agree_before_first_round(self):
        # no training starts before the buffer holds a full batch of 64
        config = RunConfig(seed=4, ttis=45, m_avg=4, fed_interval=30)
        dil = run_dil(config).df
        kt = run_ktfluc(config).df
        pd.testing.assert_frame_equal(
            dil[dil["tti"] <= 30].reset_index(drop=True),
            kt[kt["tti"] <= 30].reset_index(drop=True))

    def test_central_slots_cover_waiting_ues(self):
        config = RunConfig(seed=3, ttis=1000, m_avg=6, cl_slots=4, algorithm="cl",
                           batch_size=16, buffer_size=50)
        sim = Simulation(config)
        decide = sim.central.decide
        stranded = []

        def checked(observations):
            out = decide(observations)
            waiting = set(observations) - set(sim.central.slots)
            if waiting and None in sim.central.slots:
                stranded.append(observations)
            return out

        sim.central.decide = checked
        record = sim.run()
        assert stranded == []
        assert record.counters["cl_overflow"] > 0

    def test_federation_rounds_at_boundaries(self, small_config):
        record = run_ktfluc(small_config)
        ttis = {i["tti"] for i in record.federation}
        assert ttis and all(tti % 30 == 0 and tti > 0 for tti in ttis)
        assert record.summary()["federation_rounds"] == len({i["round"] for i in record.federation})

    def test_overlap_runs(self, small_config):
        record = run_ktfluc(small_config.replace(overlap_aggregation=True))
        assert all(record.counters[i] == 0 for i in AUDIT_COUNTERS)
        assert {i["tti"] for i in record.federation} <= {30, 60, 90, 120, 150, 180}

    def test_timing_parts(self, small_config):
        timing = run_ktfluc(small_config.replace(ttis=60)).timing
        assert set(timing) == {"federation_s", "transfer_s", "other_s", "total_s"}
        assert all(value >= 0 for value in timing.values())


class TestLoadModel:
    def test_template_initializes_agents(self, small_config, tmp_path):
        template = MlpModel(small_config.layer_sizes, rng=np.random.default_rng(8))
        path = write_snapshot(template, tmp_path / "start.mlp")
        sim = Simulation(small_config.replace(algorithm="dil", load_model=str(path)))
        assert sim.agents
        for agent in sim.agents.values():
            np.testing.assert_array_equal(agent.local_model.get_params(), template.get_params())

    def test_wrong_dimensions(self, small_config, tmp_path):
        path = write_snapshot(MlpModel([5, 4, 4, 2]), tmp_path / "bad.mlp")
        with pytest.raises(ConfigurationError):
            Simulation(small_config.replace(load_model=str(path)))


class TestCompressionRun:
    def test_requires_dil(self, small_config):
        with pytest.raises(ConfigurationError):
            Simulation(small_config.replace(algorithm="ktfluc"), compress=True)

    def test_designated_model_is_grown(self, small_config):
        config = small_config.replace(
            algorithm="dil", ttis=400, split_interval=20, n_required=50,
            compression_eval_ttis=20)
        sim = Simulation(config, compress=True)
        record = sim.run()
        assert record.compression
        assert all(row["phase"] == "growing" for row in record.compression)
        assert sum(record.final_models["compressed"].hidden_sizes) > 4
        assert record.effectiveness["curve"] == []


def final_quarter(config, algorithm):
    return Simulation(config.replace(algorithm=algorithm)).run().summary()["final_quarter_reward"]


@pytest.mark.slow
class TestDeskScaleOrdering:
    """Five-seed comparisons at desk scale; run with --runslow."""
    seeds = (1, 2, 3, 4, 5)

    def base(self, seed):
        return RunConfig(seed=seed, ttis=20000, m_avg=10, n_sbs=2)

    def test_federated_ordering(self):
        wins = 0
        means = {i: [] for i in ("ktfluc", "fli", "fl", "dil")}
        for seed in self.seeds:
            rewards = {alg: final_quarter(self.base(seed), alg) for alg in means}
            for alg, value in rewards.items():
                means[alg].append(value)
            wins += rewards["ktfluc"] >= 1.05 * rewards["dil"]
        avg = {alg: np.mean(vals) for alg, vals in means.items()}
        assert avg["ktfluc"] >= avg["fli"] >= avg["fl"] >= avg["dil"]
        assert wins >= 4

    def test_gbr_delay_against_central(self):
        wins = 0
        for seed in self.seeds:
            config = self.base(seed).replace(m_avg=65, n_sbs=4)
            kt = run_ktfluc(config).summary()["mean_gbr_delay_ms"]
            cl = run_mode(config, AlgorithmMode.CL).summary()["mean_gbr_delay_ms"]
            wins += kt < cl
        assert wins >= 4

    def test_newcomer_jump_start(self):
        wins = 0
        for seed in self.seeds:
            config = self.base(seed)
            fli = Simulation(config.replace(algorithm="fli")).run().summary()
            fl = Simulation(config.replace(algorithm="fl")).run().summary()
            wins += fli["newcomer_first_window_reward"] >= fl["newcomer_first_window_reward"]
        assert wins >= 4
