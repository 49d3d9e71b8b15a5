#!/usr/bin/env python

"""Large-scale propagation: pathloss, shadowing and antenna gain.

Fast fading is not modeled; the channel between a BS and a UE is fixed
for the UE's lifetime.
"""

from dataclasses import dataclass
import numpy as np

from flucsim.utils.utils import db_to_linear, watts_to_dbm, dbm_to_watts


@dataclass(frozen=True)
class ChannelParams:
    """Propagation and noise constants.

    Pathloss is `pathloss_a + pathloss_b * log10(d_km)` in dB.
    """
    pathloss_a: float = 128.1
    pathloss_b: float = 37.6
    shadowing_sigma_db: float = 8.0
    antenna_gain_db: float = 15.0
    noise_dbm_hz: float = -174.0
    rb_bandwidth_hz: float = 180e3
    min_distance_m: float = 1.0

    @classmethod
    def from_config(cls, config) -> "ChannelParams":
        return cls(
            pathloss_a=config.pathloss_a,
            pathloss_b=config.pathloss_b,
            shadowing_sigma_db=config.shadowing_sigma_db,
            antenna_gain_db=config.antenna_gain_db,
            noise_dbm_hz=config.noise_dbm_hz,
            rb_bandwidth_hz=config.rb_bandwidth_hz,
            min_distance_m=config.min_distance_m,
        )

    def pathloss_db(self, distance_m):
        """Pathloss in dB; distances below min_distance_m are clamped."""
        dist = np.maximum(np.asarray(distance_m, dtype=float), self.min_distance_m)
        return self.pathloss_a + self.pathloss_b * np.log10(dist / 1000.0)

    def gain_db(self, distance_m, shadowing_db=0.0):
        """Antenna gain minus pathloss minus shadowing, in dB."""
        return self.antenna_gain_db - self.pathloss_db(distance_m) - np.asarray(shadowing_db)

    @property
    def rb_noise_w(self) -> float:
        """Thermal noise power over one RB: B_r * N_0, in watts."""
        return float(dbm_to_watts(self.noise_dbm_hz) * self.rb_bandwidth_hz)


def channel_gain(bs, ue, params: ChannelParams) -> float:
    """Linear power gain between a base station and a UE."""
    dist = np.linalg.norm(np.asarray(ue.position) - np.asarray(bs.position))
    return float(db_to_linear(params.gain_db(dist, ue.shadowing_db[bs.bs_id])))


def rssi_dbm(bs, gain: float) -> float:
    """Received signal strength from a BS transmitting at full power."""
    return float(watts_to_dbm(bs.tx_power_w) + 10.0 * np.log10(gain))
