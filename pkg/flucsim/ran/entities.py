#!/usr/bin/env python

"""Base stations, user equipments and packets.

Time is measured in ms with one TTI = 1 ms. A packet enqueued during
TTI t carries enqueue time t; its dequeue and delivery times are the
fraction of the TTI's bit budget already used when its first and last
bits are served.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional
import numpy as np

GBR = 1
NON_GBR = 0


@dataclass
class Packet:
    """One CBR packet of a UE's file."""
    ue_id: int
    size_bytes: int
    enqueue_ms: float
    remaining_bits: float = None
    dequeue_ms: Optional[float] = None
    delivery_ms: Optional[float] = None

    def __post_init__(self):
        if self.remaining_bits is None:
            self.remaining_bits = float(8 * self.size_bytes)

    @property
    def in_flight(self) -> bool:
        """True once the first bit has been served."""
        return self.dequeue_ms is not None

    @property
    def queue_delay(self) -> float:
        return self.dequeue_ms - self.enqueue_ms

    @property
    def tx_delay(self) -> float:
        return self.delivery_ms - self.dequeue_ms

    @property
    def total_delay(self) -> float:
        return self.queue_delay + self.tx_delay


@dataclass
class BaseStation:
    """A macro (LTE) or small (NR) cell.

    The per-UE packet queues of attached UEs are held here and move to
    the new BS on handover.
    """
    bs_id: int
    rat: str
    position: np.ndarray
    carrier_ghz: float
    tx_power_w: float
    bandwidth_mhz: float
    rb_count: int
    queues: Dict[int, Deque[Packet]] = field(default_factory=dict)

    @property
    def rb_power_w(self) -> float:
        """Uniform per-RB transmit power P_{n,r}."""
        return self.tx_power_w / self.rb_count

    @property
    def attached(self) -> List[int]:
        """Sorted ids of attached UEs (M_n)."""
        return sorted(self.queues)

    def attach(self, ue_id: int, queue: Optional[Deque[Packet]] = None):
        self.queues[ue_id] = queue if queue is not None else deque()

    def detach(self, ue_id: int) -> Deque[Packet]:
        return self.queues.pop(ue_id)

    def queued_bits(self, ue_id: int) -> float:
        return float(sum(i.remaining_bits for i in self.queues[ue_id]))


@dataclass
class UserEquipment:
    """A UE with a fixed position downloading one file as CBR packets."""
    ue_id: int
    position: np.ndarray
    traffic_type: int
    file_bytes: int
    arrival_tti: int
    shadowing_db: np.ndarray
    attached_bs: int = -1
    newcomer: bool = False
    gains: np.ndarray = None
    rssi_dbm: np.ndarray = None
    unsent_bytes: int = None
    remaining_file_bytes: int = None
    throughput_bps: float = 0.0
    last_packet_delay: float = 0.0
    delay_ms: float = 0.0
    departure_tti: Optional[int] = None
    delivered_bits: Deque[float] = None
    worst_rate_bps: np.ndarray = None

    def __post_init__(self):
        if self.unsent_bytes is None:
            self.unsent_bytes = self.file_bytes
        if self.remaining_file_bytes is None:
            self.remaining_file_bytes = self.file_bytes

    @property
    def is_gbr(self) -> bool:
        return self.traffic_type == GBR
