#!/usr/bin/env python

"""TTI-stepped simulation of one macro cell and several small cells.

The world owns every BaseStation and active UserEquipment. Each call to
`step` applies the UEs' BS choices, generates CBR packets, schedules RBs
per BS, computes per-RB SINR with co-carrier interference, drains the
queues, and returns per-UE rewards, next states and per-TTI metric rows.
UE arrivals (Poisson) and departures (file completed) happen at the end
of a step.
"""

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
import numpy as np
from loguru import logger

from flucsim.config import RunConfig
from flucsim.ran.channel import ChannelParams, channel_gain, rssi_dbm
from flucsim.ran.entities import BaseStation, UserEquipment, Packet, GBR, NON_GBR
from flucsim.ran.jitted import rb_sinr, worst_case_sinr
from flucsim.utils.utils import ConfigurationError, argmax_lowest

logger = logger.bind(name="flucsim")

# column order of the per-TTI metrics table
TTI_COLUMNS = [
    "tti", "ue_id", "traffic_type", "attached_bs", "reward", "delay_ms",
    "throughput_bps", "queue_len", "eligible",
    "rbs", "backlogged", "blocked", "delivered", "violations", "cycle_ms",
]


@dataclass
class StepResult:
    """Everything a single TTI produced."""
    tti: int
    rows: List[dict] = field(default_factory=list)
    rewards: Dict[int, float] = field(default_factory=dict)
    eligible: Dict[int, bool] = field(default_factory=dict)
    states: Dict[int, np.ndarray] = field(default_factory=dict)
    departed: List[int] = field(default_factory=list)
    arrived: List[int] = field(default_factory=list)
    ignored_actions: int = 0


class RanWorld:
    """Dual-RAT radio access network advanced one TTI at a time.

    Parameters
    ----------
    config: RunConfig
        Scenario settings. The topology is one LTE macro BS at the
        origin (id 0) followed by `n_sbs` NR small BSs.
    populate: bool
        If True (default) round(m_avg) UEs are spawned at TTI 0. Set
        False to build hand-made scenarios with `add_ue`.

    Example
    -------
    >>> world = RanWorld(RunConfig(m_avg=5))
    >>> actions = {uid: ue.attached_bs for uid, ue in world.ues.items()}
    >>> result = world.step(actions, tti=0)
    """
    def __init__(self, config: RunConfig, populate: bool = True):
        self.config = config
        self.params = ChannelParams.from_config(config)
        self.stations: List[BaseStation] = []
        self.ues: Dict[int, UserEquipment] = {}
        self.next_ue_id = 0
        self.tti = 0

        self.audit = {
            "rb_conflicts": 0,
            "attachment_errors": 0,
            "conservation_errors": 0,
            "ignored_actions": 0,
        }
        """Counters of constraint violations and recoverable anomalies."""
        self.bytes_generated = 0
        self.bytes_delivered = 0
        self.n_departed = 0

        self._set_stations()
        self._arrival_rng = config.rng("traffic")
        self.alloc = np.full((self.n_bs, self.max_rbs), -1, dtype=np.int64)
        """RB allocation of the last TTI: UE id per (BS, RB), -1 if empty."""
        self.sinr_map = np.zeros((self.n_bs, self.max_rbs))
        """Linear SINR of every allocated RB in the last TTI."""

        if populate:
            for _ in range(int(round(config.m_avg))):
                self.spawn_ue(tti=0, newcomer=False)
            logger.debug(f"spawned {len(self.ues)} UEs at TTI 0")

    # ----------------------------------------------------------------
    # construction
    # ----------------------------------------------------------------

    def _set_stations(self):
        cfg = self.config
        self.stations.append(BaseStation(
            bs_id=0, rat="LTE", position=np.zeros(2), carrier_ghz=cfg.mbs_freq_ghz,
            tx_power_w=cfg.mbs_power_w, bandwidth_mhz=cfg.mbs_bandwidth_mhz,
            rb_count=cfg.mbs_rbs,
        ))
        for idx in range(cfg.n_sbs):
            self.stations.append(BaseStation(
                bs_id=idx + 1, rat="NR", position=np.array(cfg.sbs_positions[idx], dtype=float),
                carrier_ghz=cfg.sbs_freq_ghz, tx_power_w=cfg.sbs_power_w,
                bandwidth_mhz=cfg.sbs_bandwidth_mhz, rb_count=cfg.sbs_rbs,
            ))
        self.n_bs = len(self.stations)
        self.max_rbs = max(i.rb_count for i in self.stations)
        self.rb_power = np.array([i.rb_power_w for i in self.stations])
        carriers = np.array([i.carrier_ghz for i in self.stations])
        self.cochannel = carriers[:, None] == carriers[None, :]
        np.fill_diagonal(self.cochannel, False)

    def add_ue(
        self,
        position: Sequence[float],
        traffic_type: int,
        tti: int = 0,
        shadowing_db: Optional[Sequence[float]] = None,
        attached_bs: Optional[int] = None,
        newcomer: bool = False,
        ) -> UserEquipment:
        """Place a UE at a given position and attach it.

        Without an explicit attached_bs the UE attaches to its
        maximum-RSSI BS.
        """
        shadowing = np.zeros(self.n_bs) if shadowing_db is None else np.asarray(shadowing_db, float)
        if shadowing.shape != (self.n_bs,):
            raise ConfigurationError(f"shadowing_db needs one value per BS ({self.n_bs})")
        ue = UserEquipment(
            ue_id=self.next_ue_id,
            position=np.asarray(position, dtype=float),
            traffic_type=int(traffic_type),
            file_bytes=self.config.file_bytes(traffic_type),
            arrival_tti=tti,
            shadowing_db=shadowing,
            newcomer=newcomer,
            delivered_bits=deque(maxlen=self.config.throughput_window_ttis),
        )
        self.next_ue_id += 1
        ue.gains = np.array([channel_gain(bs, ue, self.params) for bs in self.stations])
        ue.rssi_dbm = np.array([rssi_dbm(bs, g) for bs, g in zip(self.stations, ue.gains)])
        wsinr = worst_case_sinr(ue.gains[None, :], self.rb_power, self.params.rb_noise_w, self.cochannel)
        ue.worst_rate_bps = self.params.rb_bandwidth_hz * np.log2(1.0 + wsinr[0])

        bs_idx = argmax_lowest(ue.rssi_dbm) if attached_bs is None else int(attached_bs)
        self._check_bs(bs_idx)
        ue.attached_bs = bs_idx
        self.stations[bs_idx].attach(ue.ue_id)
        self.ues[ue.ue_id] = ue
        return ue

    def spawn_ue(self, tti: int, newcomer: bool) -> UserEquipment:
        """Draw a random UE from its own (topology, ue_id) stream."""
        cfg = self.config
        rng = cfg.rng("topology", self.next_ue_id)
        half = cfg.area_m / 2.0
        position = rng.uniform(-half, half, size=2)
        traffic_type = GBR if rng.random() < cfg.gbr_share else NON_GBR
        shadowing = rng.normal(0.0, cfg.shadowing_sigma_db, size=self.n_bs)
        return self.add_ue(position, traffic_type, tti=tti, shadowing_db=shadowing, newcomer=newcomer)

    def _check_bs(self, bs_idx: int):
        if not 0 <= bs_idx < self.n_bs:
            raise ConfigurationError(f"BS index {bs_idx} out of range 0..{self.n_bs - 1}")

    # ----------------------------------------------------------------
    # channel queries
    # ----------------------------------------------------------------

    def set_allocation(self, alloc: np.ndarray):
        """Install an RB allocation (UE ids, -1 empty) and recompute SINR."""
        alloc = np.asarray(alloc, dtype=np.int64)
        if alloc.shape != (self.n_bs, self.max_rbs):
            raise ConfigurationError(f"allocation must have shape {(self.n_bs, self.max_rbs)}")
        self.alloc = alloc.copy()
        ids = sorted(self.ues)
        if not ids:
            self.sinr_map = np.zeros(alloc.shape)
            return
        ids_arr = np.array(ids, dtype=np.int64)
        pos = np.clip(np.searchsorted(ids_arr, alloc), 0, len(ids) - 1)
        alloc_rows = np.where((alloc >= 0) & (ids_arr[pos] == alloc), pos, -1)
        gains = np.stack([self.ues[uid].gains for uid in ids])
        self.sinr_map = rb_sinr(alloc_rows, gains, self.rb_power, self.params.rb_noise_w, self.cochannel)

    def sinr(self, bs: int, rb: int, ue_id: int) -> float:
        """Linear SINR of UE ue_id on RB rb of BS bs under the current allocation."""
        if self.alloc[bs, rb] != ue_id:
            raise ConfigurationError(f"RB {rb} of BS {bs} is not allocated to UE {ue_id}")
        ue = self.ues[ue_id]
        signal = ue.gains[bs] * self.rb_power[bs]
        interference = 0.0
        for other in range(self.n_bs):
            if other != bs and self.cochannel[bs, other] and self.alloc[other, rb] >= 0:
                interference += ue.gains[other] * self.rb_power[other]
        return float(signal / (interference + self.params.rb_noise_w))

    def link_capacity(self, bs: int, ue_id: int) -> float:
        """Shannon capacity in bits/s over the RBs of bs allocated to the UE."""
        mask = self.alloc[bs] == ue_id
        if not mask.any():
            return 0.0
        return float(np.sum(self.params.rb_bandwidth_hz * np.log2(1.0 + self.sinr_map[bs][mask])))

    # ----------------------------------------------------------------
    # scheduling
    # ----------------------------------------------------------------

    def _rb_demand(self, ue: UserEquipment, bs: BaseStation) -> int:
        bits = bs.queued_bits(ue.ue_id)
        rate = ue.worst_rate_bps[bs.bs_id] * self.config.tti_ms / 1000.0
        if rate <= 0:
            return bs.rb_count
        return int(math.ceil(bits / rate))

    def schedule_rbs(self, bs: BaseStation, tti: int) -> np.ndarray:
        """Strict-priority round-robin allocation for one BS.

        Backlogged GBR UEs are served first, one RB at a time in rotating
        order, until their estimated demand is met or RBs run out; the
        remaining RBs go round-robin to backlogged non-GBR UEs.
        """
        alloc = np.full(bs.rb_count, -1, dtype=np.int64)
        free = 0
        for group in (GBR, NON_GBR):
            users = [
                uid for uid in bs.attached
                if self.ues[uid].traffic_type == group and bs.queues[uid]
            ]
            if not users:
                continue
            shift = tti % len(users)
            users = users[shift:] + users[:shift]
            need = {uid: self._rb_demand(self.ues[uid], bs) for uid in users}
            while free < bs.rb_count and any(need[i] > 0 for i in users):
                for uid in users:
                    if free >= bs.rb_count:
                        break
                    if need[uid] > 0:
                        alloc[free] = uid
                        need[uid] -= 1
                        free += 1
        return alloc

    # ----------------------------------------------------------------
    # state and reward
    # ----------------------------------------------------------------

    def queue_len(self, ue_id: int) -> int:
        ue = self.ues[ue_id]
        return len(self.stations[ue.attached_bs].queues[ue_id])

    def observe_state(self, ue_id: int) -> np.ndarray:
        """State vector [RSSI per BS, queue length, delay, one-hot BS]."""
        if ue_id not in self.ues:
            raise ConfigurationError(f"UE {ue_id} is not active")
        cfg = self.config
        ue = self.ues[ue_id]
        onehot = np.zeros(self.n_bs)
        onehot[ue.attached_bs] = 1.0
        return np.concatenate([
            (ue.rssi_dbm + cfg.rssi_offset_dbm) / cfg.rssi_scale_db,
            [self.queue_len(ue_id) / cfg.queue_scale, ue.delay_ms / cfg.d_max_ms],
            onehot,
        ])

    def observations(self) -> Dict[int, np.ndarray]:
        return {uid: self.observe_state(uid) for uid in sorted(self.ues)}

    def reward(self, ue: UserEquipment) -> float:
        """Normalized delay (GBR) or throughput (non-GBR) reward in [0, 1]."""
        if ue.is_gbr:
            value = 1.0 - ue.delay_ms / self.config.d_max_ms
        else:
            value = ue.throughput_bps / self.config.b_max_bps
        return float(np.clip(value, 0.0, 1.0))

    def is_eligible(self, ue: UserEquipment) -> bool:
        if ue.is_gbr:
            return bool(ue.delay_ms <= self.config.gbr_latency_ms)
        return bool(ue.throughput_bps >= self.config.nongbr_rate_bps)

    def max_rssi_bs(self, ue_id: int) -> int:
        return argmax_lowest(self.ues[ue_id].rssi_dbm)

    # ----------------------------------------------------------------
    # stepping
    # ----------------------------------------------------------------

    def _apply_actions(self, actions: Dict[int, int], tti: int) -> int:
        ignored = 0
        for ue_id in sorted(actions):
            if ue_id not in self.ues:
                ignored += 1
                logger.warning(f"TTI {tti}: ignored action for inactive UE {ue_id}")
                continue
            target = int(actions[ue_id])
            self._check_bs(target)
            ue = self.ues[ue_id]
            if target != ue.attached_bs:
                queue = self.stations[ue.attached_bs].detach(ue_id)
                self.stations[target].attach(ue_id, queue)
                ue.attached_bs = target
        return ignored

    def _generate_packets(self, tti: int):
        cfg = self.config
        for ue in self.ues.values():
            if ue.unsent_bytes <= 0 or (tti - ue.arrival_tti) % cfg.packet_interval_ttis:
                continue
            size = min(cfg.packet_bytes(ue.traffic_type), ue.unsent_bytes)
            ue.unsent_bytes -= size
            self.bytes_generated += size
            self.stations[ue.attached_bs].queues[ue.ue_id].append(
                Packet(ue_id=ue.ue_id, size_bytes=size, enqueue_ms=float(tti) * cfg.tti_ms))

    def _drain(self, ue: UserEquipment, budget: float, tti: int) -> List[Packet]:
        """Serve up to budget bits from the UE's queue; return delivered packets."""
        queue = self.stations[ue.attached_bs].queues[ue.ue_id]
        start = float(tti) * self.config.tti_ms
        served = 0.0
        done = []
        while queue and served < budget:
            pkt = queue[0]
            if pkt.dequeue_ms is None:
                pkt.dequeue_ms = start + self.config.tti_ms * served / budget
            left = budget - served
            if pkt.remaining_bits <= left:
                served += pkt.remaining_bits
                pkt.remaining_bits = 0.0
                pkt.delivery_ms = start + self.config.tti_ms * served / budget
                done.append(queue.popleft())
            else:
                pkt.remaining_bits -= left
                served = budget
        ue.delivered_bits.append(served)
        return done

    def step(self, actions: Dict[int, int], tti: int) -> StepResult:
        """Advance the network by one TTI.

        Parameters
        ----------
        actions: Dict[int, int]
            Chosen BS index per UE id. UEs without an entry keep their
            current BS; entries for inactive UEs are ignored and counted.
        tti: int
            Index of the TTI being simulated.

        Returns
        -------
        StepResult
            Rewards, eligibility, next states and metric rows for every
            UE active during the TTI, plus the ids of UEs that departed
            at its end and of those that arrived for the next TTI.
        """
        cfg = self.config
        self.tti = tti
        result = StepResult(tti=tti)
        result.ignored_actions = self._apply_actions(actions, tti)
        self.audit["ignored_actions"] += result.ignored_actions
        self._generate_packets(tti)

        # allocate RBs per BS
        ids = sorted(self.ues)
        backlogged = {uid: bool(self.stations[self.ues[uid].attached_bs].queues[uid]) for uid in ids}
        alloc = np.full((self.n_bs, self.max_rbs), -1, dtype=np.int64)
        for bs in self.stations:
            alloc[bs.bs_id, :bs.rb_count] = self.schedule_rbs(bs, tti)
        self.set_allocation(alloc)
        self._audit_allocation()

        # serve queues
        tti_s = cfg.tti_ms / 1000.0
        gbr_served = np.zeros(self.n_bs, dtype=bool)
        nrbs = {}
        for uid in ids:
            ue = self.ues[uid]
            nrbs[uid] = int(np.sum(self.alloc[ue.attached_bs] == uid))
            if ue.is_gbr and nrbs[uid]:
                gbr_served[ue.attached_bs] = True

        for uid in ids:
            ue = self.ues[uid]
            budget = self.link_capacity(ue.attached_bs, uid) * tti_s
            done = self._drain(ue, budget, tti) if budget > 0 else []
            if budget <= 0:
                ue.delivered_bits.append(0.0)
            delivered_bytes = sum(i.size_bytes for i in done)
            ue.remaining_file_bytes -= delivered_bytes
            self.bytes_delivered += delivered_bytes
            if done:
                ue.last_packet_delay = done[-1].total_delay
            ue.delay_ms = ue.last_packet_delay
            queue = self.stations[ue.attached_bs].queues[uid]
            if queue:
                age = (tti + 1) * cfg.tti_ms - queue[0].enqueue_ms
                ue.delay_ms = max(ue.delay_ms, age)
            window_s = cfg.throughput_window_ttis * tti_s
            ue.throughput_bps = float(sum(ue.delivered_bits) / window_s)

            reward = self.reward(ue)
            eligible = self.is_eligible(ue)
            result.rewards[uid] = reward
            result.eligible[uid] = eligible
            violations = 0
            if ue.is_gbr:
                violations = sum(1 for i in done if i.total_delay > cfg.gbr_latency_ms)
            blocked = (
                not ue.is_gbr and backlogged[uid] and nrbs[uid] == 0
                and gbr_served[ue.attached_bs]
            )
            cycle = np.nan
            if ue.remaining_file_bytes <= 0:
                ue.departure_tti = tti + 1
                cycle = (ue.departure_tti - ue.arrival_tti) * cfg.tti_ms
            result.rows.append({
                "tti": tti,
                "ue_id": uid,
                "traffic_type": ue.traffic_type,
                "attached_bs": ue.attached_bs,
                "reward": reward,
                "delay_ms": ue.delay_ms,
                "throughput_bps": ue.throughput_bps,
                "queue_len": len(queue),
                "eligible": int(eligible),
                "rbs": nrbs[uid],
                "backlogged": int(backlogged[uid]),
                "blocked": int(blocked),
                "delivered": len(done),
                "violations": violations,
                "cycle_ms": cycle,
            })

        # next states, then departures and arrivals
        for uid in ids:
            result.states[uid] = self.observe_state(uid)
        for uid in ids:
            ue = self.ues[uid]
            if ue.departure_tti is not None:
                self.stations[ue.attached_bs].detach(uid)
                del self.ues[uid]
                self.n_departed += 1
                result.departed.append(uid)
        narrivals = int(self._arrival_rng.poisson(cfg.arrival_rate))
        for _ in range(narrivals):
            ue = self.spawn_ue(tti=tti + 1, newcomer=True)
            result.arrived.append(ue.ue_id)
            result.states[ue.ue_id] = self.observe_state(ue.ue_id)
        if result.departed or result.arrived:
            logger.debug(
                f"TTI {tti}: departed {result.departed}, arrived {result.arrived}")
        self._audit_conservation()
        return result

    # ----------------------------------------------------------------
    # audits
    # ----------------------------------------------------------------

    def _audit_allocation(self):
        for bs in self.stations:
            row = self.alloc[bs.bs_id]
            if np.any(row[bs.rb_count:] >= 0):
                self.audit["rb_conflicts"] += 1
            for uid in np.unique(row[row >= 0]):
                if int(uid) not in bs.queues:
                    self.audit["rb_conflicts"] += 1
        for uid in self.ues:
            count = sum(1 for bs in self.stations if uid in bs.queues)
            if count != 1:
                self.audit["attachment_errors"] += 1

    def queued_and_inflight_bytes(self):
        """Bytes waiting untouched and bytes of partially served packets."""
        queued = inflight = 0
        for bs in self.stations:
            for queue in bs.queues.values():
                for pkt in queue:
                    if pkt.in_flight:
                        inflight += pkt.size_bytes
                    else:
                        queued += pkt.size_bytes
        return queued, inflight

    def _audit_conservation(self):
        queued, inflight = self.queued_and_inflight_bytes()
        if self.bytes_delivered != self.bytes_generated - queued - inflight:
            self.audit["conservation_errors"] += 1
            logger.error(
                f"TTI {self.tti}: byte conservation broken "
                f"({self.bytes_generated} generated, {self.bytes_delivered} delivered, "
                f"{queued} queued, {inflight} in flight)")
