#!/usr/bin/env python

"""Scheduling, SINR, queueing and accounting of RanWorld."""

import numpy as np
import pandas as pd
import pytest

from flucsim.config import RunConfig
from flucsim.ran.entities import GBR, NON_GBR, Packet
from flucsim.ran.world import RanWorld, TTI_COLUMNS
from flucsim.utils.utils import ConfigurationError


def backlog(world, ue_id, npackets=400, size=3200):
    ue = world.ues[ue_id]
    queue = world.stations[ue.attached_bs].queues[ue_id]
    for _ in range(npackets):
        queue.append(Packet(ue_id=ue_id, size_bytes=size, enqueue_ms=0.0))


def run_random(world, ttis, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for tti in range(ttis):
        actions = {uid: int(rng.integers(world.n_bs)) for uid in sorted(world.ues)}
        rows.extend(world.step(actions, tti).rows)
    return pd.DataFrame(rows, columns=TTI_COLUMNS)


class TestTopology:
    def test_stations(self, empty_config):
        world = RanWorld(empty_config)
        assert world.n_bs == 5
        assert [i.rat for i in world.stations] == ["LTE", "NR", "NR", "NR", "NR"]
        assert world.stations[0].rb_count == 50 and world.stations[1].rb_count == 100
        # the macro cell shares no carrier with the small cells
        assert not world.cochannel[0].any()
        assert world.cochannel[1:, 1:].sum() == 4 * 3

    def test_populate(self):
        world = RanWorld(RunConfig(m_avg=6, seed=2))
        assert len(world.ues) == 6
        assert not any(ue.newcomer for ue in world.ues.values())

    def test_initial_attachment_is_max_rssi(self):
        world = RanWorld(RunConfig(m_avg=10, seed=4))
        for uid, ue in world.ues.items():
            assert ue.attached_bs == int(np.argmax(ue.rssi_dbm))
            assert uid in world.stations[ue.attached_bs].queues


class TestState:
    def test_length_and_onehot(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((0.0, 10.0), GBR, attached_bs=3)
        state = world.observe_state(ue.ue_id)
        assert state.size == 12
        np.testing.assert_array_equal(state[-5:], [0, 0, 0, 1, 0])

    def test_rssi_ordering_follows_gain(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((200.0, 240.0), NON_GBR)
        state = world.observe_state(ue.ue_id)
        sbs = slice(1, 5)
        assert np.array_equal(np.argsort(state[sbs]), np.argsort(ue.gains[sbs]))

    def test_inactive(self, empty_config):
        with pytest.raises(ConfigurationError):
            RanWorld(empty_config).observe_state(0)


class TestReward:
    def test_gbr_endpoints(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((0.0, 0.0), GBR)
        ue.delay_ms = empty_config.d_max_ms
        assert world.reward(ue) == 0.0
        ue.delay_ms = 0.0
        assert world.reward(ue) == 1.0
        ue.delay_ms = 400.0
        assert world.reward(ue) == 0.0

    def test_nongbr_endpoints(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((0.0, 0.0), NON_GBR)
        ue.throughput_bps = empty_config.b_max_bps
        assert world.reward(ue) == 1.0
        ue.throughput_bps = empty_config.b_max_bps / 4
        assert world.reward(ue) == 0.25

    def test_eligibility(self, empty_config):
        world = RanWorld(empty_config)
        gbr = world.add_ue((0.0, 0.0), GBR)
        gbr.delay_ms = 50.0
        assert world.is_eligible(gbr)
        gbr.delay_ms = 50.5
        assert not world.is_eligible(gbr)


class TestSinr:
    def test_no_interferer(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((100.0, 0.0), GBR, attached_bs=0)
        alloc = np.full((world.n_bs, world.max_rbs), -1)
        alloc[0, 5] = ue.ue_id
        world.set_allocation(alloc)
        expected = ue.gains[0] * world.rb_power[0] / world.params.rb_noise_w
        np.testing.assert_allclose(world.sinr(0, 5, ue.ue_id), expected)
        np.testing.assert_allclose(world.sinr_map[0, 5], expected)

    def test_cochannel_interference(self, empty_config):
        world = RanWorld(empty_config)
        one = world.add_ue((200.0, 200.0), GBR, attached_bs=1)
        two = world.add_ue((-200.0, 200.0), GBR, attached_bs=2)
        three = world.add_ue((10.0, 0.0), GBR, attached_bs=0)
        alloc = np.full((world.n_bs, world.max_rbs), -1)
        alloc[1, 7] = one.ue_id
        alloc[2, 7] = two.ue_id
        alloc[0, 7] = three.ue_id
        world.set_allocation(alloc)

        # direct evaluation: only the other small cell interferes
        power = world.rb_power
        noise = world.params.rb_noise_w
        expected = one.gains[1] * power[1] / (one.gains[2] * power[2] + noise)
        np.testing.assert_allclose(world.sinr(1, 7, one.ue_id), expected)
        np.testing.assert_allclose(world.sinr_map[1, 7], expected)
        np.testing.assert_allclose(
            world.sinr_map[0, 7], three.gains[0] * power[0] / noise)

    def test_equal_interferer_gives_unit_sinr(self, empty_config):
        config = empty_config.replace(noise_dbm_hz=-400.0)
        world = RanWorld(config)
        # on the bisector of SBS 1 and SBS 2 both links are equally strong
        one = world.add_ue((0.0, 250.0), GBR, attached_bs=1)
        two = world.add_ue((0.0, 260.0), GBR, attached_bs=2)
        alloc = np.full((world.n_bs, world.max_rbs), -1)
        alloc[1, 0] = one.ue_id
        alloc[2, 0] = two.ue_id
        world.set_allocation(alloc)
        np.testing.assert_allclose(world.sinr(1, 0, one.ue_id), 1.0, rtol=1e-9)

    def test_unallocated_rb(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((0.0, 0.0), GBR)
        with pytest.raises(ConfigurationError):
            world.sinr(0, 0, ue.ue_id)


class TestCapacity:
    def test_two_rbs_at_sinr_three(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((0.0, 0.0), GBR, attached_bs=0)
        world.alloc[0, :2] = ue.ue_id
        world.sinr_map[0, :2] = 3.0
        np.testing.assert_allclose(world.link_capacity(0, ue.ue_id), 720e3)

    def test_unit_sinr_gives_rb_bandwidth(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((0.0, 0.0), GBR, attached_bs=0)
        world.alloc[0, 4] = ue.ue_id
        world.sinr_map[0, 4] = 1.0
        np.testing.assert_allclose(world.link_capacity(0, ue.ue_id), 180e3)

    def test_no_rbs(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((0.0, 0.0), GBR)
        assert world.link_capacity(ue.attached_bs, ue.ue_id) == 0.0


class TestScheduler:
    def test_empty_queues(self, empty_config):
        world = RanWorld(empty_config)
        world.add_ue((240.0, 240.0), GBR, attached_bs=1)
        assert np.all(world.schedule_rbs(world.stations[1], 0) == -1)

    def test_single_backlogged_ue_takes_every_rb(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((240.0, 240.0), NON_GBR, attached_bs=1)
        backlog(world, ue.ue_id)
        assert np.all(world.schedule_rbs(world.stations[1], 0) == ue.ue_id)

    def test_small_demand_takes_few_rbs(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((240.0, 240.0), GBR, attached_bs=1)
        backlog(world, ue.ue_id, npackets=1, size=1600)
        alloc = world.schedule_rbs(world.stations[1], 0)
        assert 0 < np.sum(alloc == ue.ue_id) < world.stations[1].rb_count

    def test_gbr_saturating_blocks_nongbr(self, empty_config):
        world = RanWorld(empty_config)
        ids = [
            world.add_ue((240.0, 250.0), GBR, attached_bs=1).ue_id,
            world.add_ue((250.0, 240.0), GBR, attached_bs=1).ue_id,
            world.add_ue((260.0, 250.0), NON_GBR, attached_bs=1).ue_id,
            world.add_ue((250.0, 260.0), NON_GBR, attached_bs=1).ue_id,
        ]
        for uid in ids:
            backlog(world, uid)
        alloc = world.schedule_rbs(world.stations[1], 0)
        counts = {uid: int(np.sum(alloc == uid)) for uid in ids}
        assert counts[ids[0]] == counts[ids[1]] == 50
        assert counts[ids[2]] == counts[ids[3]] == 0

    def test_leftover_goes_to_nongbr(self, empty_config):
        world = RanWorld(empty_config)
        gbr = [world.add_ue((240.0, 250.0), GBR, attached_bs=1).ue_id,
               world.add_ue((250.0, 240.0), GBR, attached_bs=1).ue_id]
        nongbr = [world.add_ue((260.0, 250.0), NON_GBR, attached_bs=1).ue_id,
                  world.add_ue((250.0, 260.0), NON_GBR, attached_bs=1).ue_id]
        for uid in gbr:
            backlog(world, uid, npackets=1, size=1600)
        for uid in nongbr:
            backlog(world, uid)
        alloc = world.schedule_rbs(world.stations[1], 0)
        gbr_rbs = np.flatnonzero(np.isin(alloc, gbr))
        nongbr_rbs = np.flatnonzero(np.isin(alloc, nongbr))
        assert gbr_rbs.max() < nongbr_rbs.min()
        assert gbr_rbs.size + nongbr_rbs.size == world.stations[1].rb_count
        assert abs(np.sum(alloc == nongbr[0]) - np.sum(alloc == nongbr[1])) <= 1


class TestStep:
    def test_light_load_has_no_queueing(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((240.0, 240.0), GBR, attached_bs=1)
        for tti in range(9):
            result = world.step({ue.ue_id: 1}, tti)
            row = result.rows[0]
            assert row["queue_len"] == 0
            assert 0.0 < row["delay_ms"] < 1.0
        assert world.bytes_generated == world.bytes_delivered == 3 * 1600

    def test_delay_decomposition(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((-300.0, -300.0), NON_GBR, attached_bs=0)
        backlog(world, ue.ue_id, npackets=3)
        budget = 5e4
        done = world._drain(ue, budget, tti=4)
        assert len(done) == 1
        pkt = done[0]
        assert pkt.dequeue_ms == 4.0
        np.testing.assert_allclose(pkt.tx_delay, 25600 / budget)
        assert pkt.total_delay == pkt.queue_delay + pkt.tx_delay
        # the second packet started in this TTI and carries its dequeue time
        second = world.stations[0].queues[ue.ue_id][0]
        assert second.in_flight
        np.testing.assert_allclose(second.dequeue_ms, 4.0 + 25600 / budget)

    def test_queue_migrates_on_handover(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((0.0, 300.0), GBR, attached_bs=0)
        backlog(world, ue.ue_id, npackets=5)
        stamps = [i.enqueue_ms for i in world.stations[0].queues[ue.ue_id]]
        world._apply_actions({ue.ue_id: 2}, tti=0)
        assert ue.ue_id not in world.stations[0].queues
        assert [i.enqueue_ms for i in world.stations[2].queues[ue.ue_id]] == stamps

    def test_departure_and_cycle(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((240.0, 240.0), GBR, attached_bs=1)
        uid = ue.ue_id
        for tti in range(200):
            result = world.step({uid: 1}, tti)
            if result.departed:
                break
        assert result.departed == [uid]
        assert tti == 93
        assert ue.departure_tti == tti + 1
        assert result.rows[0]["cycle_ms"] == 94.0
        assert uid not in world.ues
        assert world.bytes_delivered == 50 * 1024

    def test_ignored_action(self, empty_config):
        world = RanWorld(empty_config)
        result = world.step({42: 1}, 0)
        assert result.ignored_actions == 1
        assert world.audit["ignored_actions"] == 1

    def test_bad_action(self, empty_config):
        world = RanWorld(empty_config)
        ue = world.add_ue((0.0, 0.0), GBR)
        with pytest.raises(ConfigurationError):
            world.step({ue.ue_id: 9}, 0)

    def test_rows_and_states(self):
        world = RanWorld(RunConfig(m_avg=5, seed=3))
        ids = sorted(world.ues)
        result = world.step({}, 0)
        assert [i["ue_id"] for i in result.rows] == ids
        assert set(result.rewards) == set(ids)
        assert set(result.states) == set(ids) | set(result.arrived)
        for row in result.rows:
            assert 0.0 <= row["reward"] <= 1.0
            assert list(row) == TTI_COLUMNS

    def test_audits_stay_clean(self):
        world = RanWorld(RunConfig(m_avg=8, seed=11))
        frame = run_random(world, 400, seed=5)
        assert world.audit["rb_conflicts"] == 0
        assert world.audit["attachment_errors"] == 0
        assert world.audit["conservation_errors"] == 0
        assert frame["rbs"].sum() > 0

    def test_deterministic(self):
        one = run_random(RanWorld(RunConfig(m_avg=6, seed=21)), 150, seed=1)
        two = run_random(RanWorld(RunConfig(m_avg=6, seed=21)), 150, seed=1)
        pd.testing.assert_frame_equal(one, two)

    def test_arrivals_independent_of_actions(self):
        one, two = RanWorld(RunConfig(m_avg=6, seed=8)), RanWorld(RunConfig(m_avg=6, seed=8))
        arrived_one, arrived_two = [], []
        for tti in range(100):
            arrived_one += world_step_arrivals(one, tti, bs=0)
            arrived_two += world_step_arrivals(two, tti, bs=1)
        assert arrived_one == arrived_two
        for uid in arrived_one:
            if uid in one.ues and uid in two.ues:
                np.testing.assert_array_equal(one.ues[uid].position, two.ues[uid].position)


def world_step_arrivals(world, tti, bs):
    return world.step({uid: bs for uid in world.ues}, tti).arrived


@pytest.mark.slow
class TestLongRun:
    def test_constraint_and_conservation_audit(self):
        world = RanWorld(RunConfig(m_avg=25, seed=1))
        frame = run_random(world, 20000, seed=1)
        assert world.audit["rb_conflicts"] == 0
        assert world.audit["conservation_errors"] == 0
        assert world.audit["attachment_errors"] == 0
        assert len(frame)

    def test_population_tracks_average(self):
        config = RunConfig(m_avg=10, seed=2)
        world = RanWorld(config)
        counts = []
        for tti in range(20000):
            world.step({uid: world.max_rssi_bs(uid) for uid in world.ues}, tti)
            counts.append(len(world.ues))
        assert abs(np.mean(counts[2000:]) - 10) / 10 < 0.1
