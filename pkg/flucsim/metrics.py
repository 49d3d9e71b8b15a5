#!/usr/bin/env python

"""Per-TTI measurements and the run summary computed from them.

Every summary value except the event counters is a pure function of
the per-TTI table, so a written run can be audited by recomputing the
summary from its CSV.
"""

import math
from typing import Dict, List, Optional
import numpy as np
import pandas as pd

from flucsim.ran.world import TTI_COLUMNS

# summary metrics where a smaller value is better
DELAY_LIKE = {
    "mean_gbr_delay_ms", "blocking_rate", "qos_violation_rate", "mean_cycle_ms",
}

SUMMARY_METRICS = [
    "mean_reward",
    "final_quarter_reward",
    "mean_gbr_delay_ms",
    "mean_nongbr_throughput_bps",
    "blocking_rate",
    "qos_violation_rate",
    "mean_cycle_ms",
    "eligible_rate",
    "mean_active_ues",
    "newcomer_first_window_reward",
]

TRAJECTORY_COLUMNS = ["tti", "mean_reward", "n_ues"]


def _value(number) -> Optional[float]:
    """Plain float, or None for an undefined statistic."""
    if number is None:
        return None
    number = float(number)
    return None if math.isnan(number) else number


def _ratio(num, den) -> Optional[float]:
    return float(num) / float(den) if den else None


def summarize(frame: pd.DataFrame, ttis: int, fed_interval: int) -> Dict[str, Optional[float]]:
    """Summary metrics of a per-TTI table.

    Parameters
    ----------
    frame: pd.DataFrame
        Rows with the per-TTI columns.
    ttis: int
        Run length, used for the final-quarter window and UE counts.
    fed_interval: int
        Length of the newcomer first window in TTIs.
    """
    out: Dict[str, Optional[float]] = {i: None for i in SUMMARY_METRICS}
    if frame.empty:
        out["mean_active_ues"] = 0.0
        return out

    gbr = frame[frame["traffic_type"] == 1]
    nongbr = frame[frame["traffic_type"] == 0]
    out["mean_reward"] = _value(frame["reward"].mean())
    final = frame[frame["tti"] >= int(math.floor(0.75 * ttis))]
    out["final_quarter_reward"] = _value(final["reward"].mean()) if len(final) else None
    out["mean_gbr_delay_ms"] = _value(gbr["delay_ms"].mean()) if len(gbr) else None
    out["mean_nongbr_throughput_bps"] = (
        _value(nongbr["throughput_bps"].mean()) if len(nongbr) else None)
    out["blocking_rate"] = _ratio(nongbr["blocked"].sum(), nongbr["backlogged"].sum())
    out["qos_violation_rate"] = _ratio(gbr["violations"].sum(), gbr["delivered"].sum())
    cycles = frame["cycle_ms"].dropna()
    out["mean_cycle_ms"] = _value(cycles.mean()) if len(cycles) else None
    out["eligible_rate"] = _value(frame["eligible"].mean())
    out["mean_active_ues"] = float(len(frame) / ttis) if ttis else 0.0

    first = frame.groupby("ue_id")["tti"].transform("min")
    newcomers = frame[(first > 0) & (frame["tti"] < first + fed_interval)]
    out["newcomer_first_window_reward"] = (
        _value(newcomers["reward"].mean()) if len(newcomers) else None)
    return out


class MetricsRecord:
    """Everything a run measured.

    Attributes
    ----------
    rows: per-TTI metric rows (see TTI_COLUMNS).
    federation: federation log rows.
    compression: compression history rows.
    counters: event counters (ignored actions, excluded groups, audits).
    timing: wall-clock seconds per part of the run.
    """
    def __init__(self, ttis: int = 0, fed_interval: int = 30):
        self.ttis = ttis
        self.fed_interval = fed_interval
        self.rows: List[dict] = []
        self.federation: List[dict] = []
        self.compression: List[dict] = []
        self.effectiveness: Optional[dict] = None
        self.counters: Dict[str, int] = {}
        self.timing: Dict[str, float] = {}
        self.final_models: Dict[str, object] = {}
        self.fed_snapshots: List[tuple] = []
        self._df: Optional[pd.DataFrame] = None

    def extend(self, rows: List[dict]):
        self.rows.extend(rows)
        self._df = None

    @property
    def df(self) -> pd.DataFrame:
        """Per-TTI table with a fixed column order."""
        if self._df is None:
            self._df = pd.DataFrame(self.rows, columns=TTI_COLUMNS)
        return self._df

    def reward_trajectory(self) -> pd.DataFrame:
        """Mean reward and active UE count at every TTI."""
        if self.df.empty:
            return pd.DataFrame(columns=TRAJECTORY_COLUMNS)
        grouped = self.df.groupby("tti", sort=True)["reward"]
        means = grouped.mean()
        return pd.DataFrame({
            "tti": means.index.astype(int),
            "mean_reward": means.to_numpy(dtype=float),
            "n_ues": grouped.size().to_numpy(),
        })

    def summary(self) -> Dict:
        out = summarize(self.df, self.ttis, self.fed_interval)
        out["ttis"] = self.ttis
        out["fed_interval"] = self.fed_interval
        out["n_ues"] = int(self.df["ue_id"].nunique())
        out["federation_rounds"] = (
            int(pd.Series([i["round"] for i in self.federation]).nunique())
            if self.federation else 0)
        out.update({key: int(val) for key, val in sorted(self.counters.items())})
        return out


def audit_frame(frame: pd.DataFrame, summary: Dict, rtol: float = 1e-9) -> Dict[str, tuple]:
    """Return {metric: (stored, recomputed)} for every disagreement."""
    recomputed = summarize(frame, int(summary["ttis"]), int(summary["fed_interval"]))
    bad = {}
    for key, value in recomputed.items():
        stored = summary.get(key)
        if stored is None or value is None:
            if stored is not value:
                bad[key] = (stored, value)
        elif not np.isclose(stored, value, rtol=rtol, atol=0.0):
            bad[key] = (stored, value)
    return bad
