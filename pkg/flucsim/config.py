#!/usr/bin/env python

"""Run configuration.

A single flat dataclass holds every scenario, learning and run-control
setting. Configs are loaded from and saved to JSON, validated when
constructed, and hand out independent named random streams derived from
one root seed.

Example
-------
>>> config = RunConfig.from_json("scenario.json")
>>> config = config.replace(algorithm="dil", seed=3)
>>> rng = config.rng("traffic")
"""

import json
import math
from dataclasses import dataclass, field, fields, asdict, replace as dc_replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import numpy as np

from flucsim.utils.utils import ConfigurationError

ALGORITHMS = ("ktfluc", "fl", "fli", "dil", "cl", "maxrssi")

# random substreams; every stream is seeded with [seed, STREAM_ID, *keys]
STREAMS = {
    "topology": 0,
    "traffic": 1,
    "exploration": 2,
    "init": 3,
    "compression": 4,
}


def _default_sbs_positions() -> List[List[float]]:
    return [[250.0, 250.0], [-250.0, 250.0], [-250.0, -250.0], [250.0, -250.0]]


@dataclass
class RunConfig:
    """All settings of a simulation run.

    Defaults reproduce the simulation settings table (two carriers,
    CBR traffic, DQN hyperparameters, 30 TTI federation interval) with
    a desk-scale run length.
    """
    # run control
    algorithm: str = "ktfluc"
    seed: int = 0
    ttis: int = 20000
    m_avg: float = 10.0
    out: Optional[str] = None
    save_model: Optional[str] = None
    load_model: Optional[str] = None
    save_fed_rounds: bool = False

    # topology: one LTE macro cell at the origin plus NR small cells
    n_sbs: int = 4
    sbs_positions: List[List[float]] = field(default_factory=_default_sbs_positions)
    area_m: float = 700.0
    mbs_freq_ghz: float = 0.8
    mbs_power_w: float = 40.0
    mbs_bandwidth_mhz: float = 10.0
    mbs_rbs: int = 50
    sbs_freq_ghz: float = 3.5
    sbs_power_w: float = 20.0
    sbs_bandwidth_mhz: float = 20.0
    sbs_rbs: int = 100

    # channel
    rb_bandwidth_hz: float = 180e3
    noise_dbm_hz: float = -174.0
    antenna_gain_db: float = 15.0
    shadowing_sigma_db: float = 8.0
    pathloss_a: float = 128.1
    pathloss_b: float = 37.6
    min_distance_m: float = 1.0
    tti_ms: float = 1.0

    # traffic
    gbr_share: float = 0.4
    nongbr_share: float = 0.6
    gbr_packet_bytes: int = 1600
    nongbr_packet_bytes: int = 3200
    packet_interval_ttis: int = 3
    gbr_file_kb: float = 50.0
    nongbr_file_kb: float = 250.0
    kb_bytes: int = 1024

    # reward, eligibility and state normalization
    d_max_ms: float = 100.0
    b_max_bps: float = 20e6
    gbr_latency_ms: float = 50.0
    nongbr_rate_bps: float = 2e6
    throughput_window_ttis: int = 3
    rssi_offset_dbm: float = 80.0
    rssi_scale_db: float = 40.0
    queue_scale: float = 10.0

    # dqn
    hidden_sizes: List[int] = field(default_factory=lambda: [14, 28])
    epsilon: float = 0.05
    gamma: float = 0.5
    learning_rate: float = 0.001
    batch_size: int = 64
    buffer_size: int = 200
    loss_reduction: str = "sum"
    full_gradient: bool = False

    # federation and transfer
    fed_interval: int = 30
    eta1: float = 0.9
    eta2: float = 0.9
    n_indicators: int = 3
    overlap_aggregation: bool = False

    # centralized baseline
    cl_slots: Optional[int] = None
    cl_hidden_sizes: List[int] = field(default_factory=lambda: [64, 128])
    cl_reward: str = "mean"

    # compression pre-simulation
    split_interval: int = 300
    n_required: int = 3
    split_delta: float = 0.5
    split_bias: str = "copy"
    grow_layer2_splits: int = 1
    plateau_strict_decline: bool = False
    plateau_tolerance: float = 1e-6
    compression_start_sizes: List[int] = field(default_factory=lambda: [2, 2])
    compression_ttis: int = 60000
    # greedy rollout scoring each window; 0 scores the owner's own rewards
    compression_eval_ttis: int = 200
    effectiveness_threshold: float = 0.9

    def __post_init__(self):
        self._set_algorithm()
        self._check_run_control()
        self._check_topology()
        self._check_traffic()
        self._check_learning()
        self._check_compression()

    # ----------------------------------------------------------------
    # validation
    # ----------------------------------------------------------------

    def _set_algorithm(self):
        self.algorithm = str(self.algorithm).lower().replace("-", "").replace("_", "")
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"algorithm {self.algorithm!r} not recognized; use one of {ALGORITHMS}")

    def _check_run_control(self):
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed}")
        if self.ttis < 0:
            raise ConfigurationError("ttis must be >= 0")
        if self.m_avg <= 0:
            raise ConfigurationError("m_avg must be positive")

    def _check_topology(self):
        _positive(self, "area_m", "mbs_power_w", "sbs_power_w", "mbs_bandwidth_mhz",
                  "sbs_bandwidth_mhz", "mbs_rbs", "sbs_rbs", "rb_bandwidth_hz",
                  "mbs_freq_ghz", "sbs_freq_ghz", "min_distance_m", "tti_ms")
        if self.n_sbs < 0 or self.n_sbs > len(self.sbs_positions):
            raise ConfigurationError(
                f"n_sbs={self.n_sbs} but only {len(self.sbs_positions)} sbs_positions given")
        if any(len(i) != 2 for i in self.sbs_positions):
            raise ConfigurationError("sbs_positions must be [x, y] pairs")
        if self.shadowing_sigma_db < 0:
            raise ConfigurationError("shadowing_sigma_db must be >= 0")
        # co-carrier cells interfere RB by RB, so they share one grid
        if self.mbs_freq_ghz == self.sbs_freq_ghz and self.mbs_rbs != self.sbs_rbs:
            raise ConfigurationError("co-carrier base stations must have equal RB counts")

    def _check_traffic(self):
        _positive(self, "gbr_packet_bytes", "nongbr_packet_bytes", "packet_interval_ttis",
                  "gbr_file_kb", "nongbr_file_kb", "kb_bytes", "d_max_ms", "b_max_bps",
                  "gbr_latency_ms", "nongbr_rate_bps", "throughput_window_ttis",
                  "rssi_scale_db", "queue_scale")
        if min(self.gbr_share, self.nongbr_share) < 0:
            raise ConfigurationError("traffic shares must be non-negative")
        if not math.isclose(self.gbr_share + self.nongbr_share, 1.0, abs_tol=1e-9):
            raise ConfigurationError(
                f"traffic shares must sum to 1, got {self.gbr_share} + {self.nongbr_share}")

    def _check_learning(self):
        if not 0 <= self.epsilon <= 1:
            raise ConfigurationError("epsilon must lie in [0, 1]")
        if not 0 <= self.gamma < 1:
            raise ConfigurationError("gamma must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        _positive(self, "batch_size", "buffer_size", "fed_interval", "n_indicators")
        if self.batch_size > self.buffer_size:
            raise ConfigurationError("batch_size cannot exceed buffer_size")
        for name in ("eta1", "eta2"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigurationError(f"{name} must lie in (0, 1]")
        for name in ("hidden_sizes", "cl_hidden_sizes", "compression_start_sizes"):
            sizes = getattr(self, name)
            if len(sizes) != 2 or any(int(i) < 2 for i in sizes):
                raise ConfigurationError(f"{name} must be two widths >= 2, got {sizes}")
            setattr(self, name, [int(i) for i in sizes])
        if self.loss_reduction not in ("sum", "mean"):
            raise ConfigurationError("loss_reduction must be 'sum' or 'mean'")
        if self.cl_reward not in ("sum", "mean"):
            raise ConfigurationError("cl_reward must be 'sum' or 'mean'")
        if self.cl_slots is not None and self.cl_slots < 1:
            raise ConfigurationError("cl_slots must be >= 1")
        if self.overlap_aggregation and self.algorithm != "ktfluc":
            raise ConfigurationError("overlap_aggregation is only available for ktfluc")

    def _check_compression(self):
        _positive(self, "split_interval", "n_required", "grow_layer2_splits")
        if not 0 < self.split_delta < 1:
            raise ConfigurationError("split_delta must lie in (0, 1)")
        if self.split_bias not in ("copy", "scale"):
            raise ConfigurationError("split_bias must be 'copy' or 'scale'")
        if self.compression_ttis < 0:
            raise ConfigurationError("compression_ttis must be >= 0")
        if self.compression_eval_ttis < 0:
            raise ConfigurationError("compression_eval_ttis must be >= 0")
        if not 0 < self.effectiveness_threshold <= 1:
            raise ConfigurationError("effectiveness_threshold must lie in (0, 1]")

    # ----------------------------------------------------------------
    # derived values
    # ----------------------------------------------------------------

    @property
    def n_bs(self) -> int:
        """Number of base stations (macro cell first)."""
        return 1 + self.n_sbs

    @property
    def state_dim(self) -> int:
        """Per-UE state length: RSSI per BS, queue, delay, one-hot BS."""
        return 2 * self.n_bs + 2

    @property
    def layer_sizes(self) -> List[int]:
        return [self.state_dim, *self.hidden_sizes, self.n_bs]

    def file_bytes(self, traffic_type: int) -> int:
        kb = self.gbr_file_kb if traffic_type else self.nongbr_file_kb
        return int(round(kb * self.kb_bytes))

    def packet_bytes(self, traffic_type: int) -> int:
        return self.gbr_packet_bytes if traffic_type else self.nongbr_packet_bytes

    @property
    def mean_lifetime_ttis(self) -> float:
        """Expected UE lifetime if every packet is served on arrival."""
        life = 0.0
        for ttype, share in ((1, self.gbr_share), (0, self.nongbr_share)):
            npackets = math.ceil(self.file_bytes(ttype) / self.packet_bytes(ttype))
            life += share * npackets * self.packet_interval_ttis
        return life

    @property
    def arrival_rate(self) -> float:
        """Poisson UE arrivals per TTI keeping m_avg UEs active on average."""
        return self.m_avg / self.mean_lifetime_ttis

    @property
    def n_cl_slots(self) -> int:
        if self.cl_slots is not None:
            return int(self.cl_slots)
        return int(math.ceil(self.m_avg + 4 * math.sqrt(self.m_avg))) + 1

    def rng(self, stream: str, *keys: int) -> np.random.Generator:
        """Independent generator for a named stream, optionally keyed."""
        if stream not in STREAMS:
            raise ConfigurationError(f"unknown random stream {stream!r}")
        return np.random.default_rng([int(self.seed), STREAMS[stream], *[int(i) for i in keys]])

    # ----------------------------------------------------------------
    # (de)serialization
    # ----------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {i.name for i in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as err:
            raise ConfigurationError(str(err)) from err

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path).expanduser()
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as err:
            raise ConfigurationError(f"config file {path} does not exist") from err
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"config file {path} is not valid JSON: {err}") from err
        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self, path: Optional[Union[str, Path]] = None) -> str:
        """Serialize to JSON; also write to path if one is given."""
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            path = Path(path).expanduser()
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text + "\n", encoding="utf-8")
        return text

    def replace(self, **kwargs) -> "RunConfig":
        """Return a validated copy with some fields changed."""
        unknown = sorted(set(kwargs) - {i.name for i in fields(self)})
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        return dc_replace(self, **kwargs)


def _positive(config: RunConfig, *names: str):
    for name in names:
        if getattr(config, name) <= 0:
            raise ConfigurationError(f"{name} must be positive, got {getattr(config, name)}")
