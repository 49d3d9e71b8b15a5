#!/usr/bin/env python

"""Grow-then-prune search for the smallest adequate hidden layer sizes.

Starting from two neurons per hidden layer, the designated model is
grown once per window by splitting its most competitive neuron (lowest
PoZ) in each hidden layer. When the window reward stops improving for
`n_required` consecutive windows, the controller switches to pruning
and removes the weakest neuron (highest PoZ) once per window until both
layers are back at two neurons. The reward measured at every size
during pruning gives the effectiveness curve.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence
import numpy as np
import pandas as pd
from loguru import logger

from flucsim.nn.mlp import MlpModel, MIN_HIDDEN_WIDTH
from flucsim.utils.utils import StatisticError

logger = logger.bind(name="flucsim")

GROWING = "growing"
PRUNING = "pruning"

COMPRESSION_COLUMNS = [
    "event_tti", "phase", "layer", "neuron", "poz", "N_1", "N_2", "window_reward",
]


@dataclass
class CompressionSchedule:
    """Window bookkeeping and the plateau counter.

    Parameters
    ----------
    split_interval: int
        Rewards per window.
    n_required: int
        Consecutive non-improving windows that end the growing phase.
    tolerance: float
        Absolute tolerance of the window reward comparison.
    strict_decline: bool
        Count only windows whose reward dropped, instead of windows
        that failed to improve.
    """
    split_interval: int = 300
    n_required: int = 3
    tolerance: float = 1e-6
    strict_decline: bool = False
    phase: str = GROWING
    counter: int = 0
    prev_reward: Optional[float] = None
    reward_sum: float = 0.0
    reward_count: int = 0
    complete: bool = False
    history: List[dict] = field(default_factory=list)

    def observe(self, reward: float):
        self.reward_sum += reward
        self.reward_count += 1

    @property
    def window_complete(self) -> bool:
        return self.reward_count >= self.split_interval

    def close_window(self) -> float:
        """Return the window mean reward and start a new window."""
        mean = self.reward_sum / self.reward_count if self.reward_count else 0.0
        self.reward_sum = 0.0
        self.reward_count = 0
        return float(mean)

    def plateau_check(self, window_reward: float) -> str:
        """Update the non-improvement counter and return the phase."""
        if self.phase != GROWING:
            return self.phase
        if self.prev_reward is not None:
            if self.strict_decline:
                stalled = window_reward < self.prev_reward - self.tolerance
            else:
                stalled = window_reward <= self.prev_reward + self.tolerance
            self.counter = self.counter + 1 if stalled else 0
        self.prev_reward = window_reward
        if self.counter >= self.n_required:
            self.phase = PRUNING
            logger.info(f"reward plateau after {self.counter} windows; switching to pruning")
        return self.phase


def grow_step(
    model: MlpModel,
    delta: float = 0.5,
    bias_mode: str = "copy",
    layer2_splits: int = 1,
    ) -> List[dict]:
    """Split the minimum-PoZ neuron of every hidden layer.

    Returns one event per split with the layer, neuron and PoZ of the
    parent. PoZ counters are reset afterwards.
    """
    events = []
    for layer in range(1, model.n_hidden_layers + 1):
        nsplits = layer2_splits if layer == 2 else 1
        for _ in range(nsplits):
            poz = model.poz_vector(layer)
            neuron = int(np.argmin(poz))
            events.append({"layer": layer, "neuron": neuron, "poz": float(poz[neuron])})
            model.split_neuron(layer, neuron, delta=delta, bias_mode=bias_mode)
    model.reset_poz()
    return events


def prune_step(model: MlpModel) -> Optional[dict]:
    """Remove the maximum-PoZ neuron among layers above the width floor.

    Ties go to the lower layer, then the lower neuron index. Returns
    None when every hidden layer is already at the floor.
    """
    best = None
    for layer in range(1, model.n_hidden_layers + 1):
        if model.layer_sizes[layer] <= MIN_HIDDEN_WIDTH:
            continue
        poz = model.poz_vector(layer)
        neuron = int(np.argmax(poz))
        if best is None or poz[neuron] > best["poz"]:
            best = {"layer": layer, "neuron": neuron, "poz": float(poz[neuron])}
    if best is None:
        return None
    model.prune_neuron(best["layer"], best["neuron"])
    model.reset_poz()
    return best


def effectiveness(history: Sequence[dict], threshold: float = 0.9) -> Dict:
    """Effectiveness and compression rate per total hidden size.

    Parameters
    ----------
    history: sequence of compression history rows
        Only rows from the pruning phase are scored.
    threshold: float
        Effectiveness level defining the compression threshold.

    Returns
    -------
    dict with "curve" (rows of total_neurons, mean_reward,
    effectiveness, compression_rate, N_1, N_2, sorted by size),
    "peak_neurons", "threshold" and "threshold_neurons" (the smallest
    size whose effectiveness and that of every larger size reach the
    threshold, or None) and "recommended_hidden_sizes".
    """
    frame = pd.DataFrame(list(history), columns=COMPRESSION_COLUMNS)
    peak = int((frame["N_1"] + frame["N_2"]).max()) if len(frame) else 0
    pruning = frame[frame["phase"] == PRUNING].copy()
    report = {
        "curve": [],
        "peak_neurons": peak,
        "threshold": threshold,
        "threshold_neurons": None,
        "recommended_hidden_sizes": None,
    }
    if pruning.empty:
        return report

    pruning["total_neurons"] = pruning["N_1"] + pruning["N_2"]
    grouped = pruning.groupby("total_neurons", sort=True)
    means = grouped["window_reward"].mean()
    best = means.max()
    eff = means / best if best > 0 else pd.Series(1.0, index=means.index)
    shapes = grouped[["N_1", "N_2"]].first()

    curve = []
    for size in means.index:
        curve.append({
            "total_neurons": int(size),
            "mean_reward": float(means[size]),
            "effectiveness": float(eff[size]),
            "compression_rate": float(peak / size),
            "N_1": int(shapes.loc[size, "N_1"]),
            "N_2": int(shapes.loc[size, "N_2"]),
        })
    report["curve"] = curve

    # walk down from the largest size while effectiveness holds
    threshold_row = None
    for row in reversed(curve):
        if row["effectiveness"] < threshold:
            break
        threshold_row = row
    if threshold_row is not None:
        report["threshold_neurons"] = threshold_row["total_neurons"]
        report["recommended_hidden_sizes"] = [threshold_row["N_1"], threshold_row["N_2"]]
    return report


class CompressionController:
    """Drive the growing and pruning phases on one designated model.

    Parameters
    ----------
    model: MlpModel
        The designated model. It is edited in place so it can be
        handed from UE to UE as owners depart.
    schedule: CompressionSchedule
        Window and plateau state.
    delta: float
        Split ratio of incoming weights.
    bias_mode: str
        "copy" or "scale", see MlpModel.split_neuron.
    layer2_splits: int
        Splits of the second hidden layer per grow event.
    evaluator: callable or None
        Scores the model at each window end. Without one the window
        reward is the mean reward of the model's owners.
    """
    def __init__(
        self,
        model: MlpModel,
        schedule: Optional[CompressionSchedule] = None,
        delta: float = 0.5,
        bias_mode: str = "copy",
        layer2_splits: int = 1,
        evaluator: Optional[Callable[[MlpModel], float]] = None,
        ):
        self.model = model
        self.schedule = schedule if schedule is not None else CompressionSchedule()
        self.delta = delta
        self.bias_mode = bias_mode
        self.layer2_splits = layer2_splits
        self.evaluator = evaluator
        self.model.reset_poz()

    @classmethod
    def from_config(cls, config, model: MlpModel) -> "CompressionController":
        schedule = CompressionSchedule(
            split_interval=config.split_interval,
            n_required=config.n_required,
            tolerance=config.plateau_tolerance,
            strict_decline=config.plateau_strict_decline,
        )
        return cls(model, schedule, config.split_delta, config.split_bias, config.grow_layer2_splits)

    @property
    def phase(self) -> str:
        return self.schedule.phase

    @property
    def complete(self) -> bool:
        return self.schedule.complete

    @property
    def history(self) -> List[dict]:
        return self.schedule.history

    def observe(self, tti: int, reward: float):
        """Add one reward of the model's current owner; close full windows."""
        if self.complete:
            return
        self.schedule.observe(reward)
        if self.schedule.window_complete:
            self.end_window(tti)

    def _row(self, tti, phase, reward, event=None) -> dict:
        event = event or {}
        return {
            "event_tti": tti,
            "phase": phase,
            "layer": event.get("layer"),
            "neuron": event.get("neuron"),
            "poz": event.get("poz"),
            "N_1": self.model.layer_sizes[1],
            "N_2": self.model.layer_sizes[2],
            "window_reward": reward,
        }

    def end_window(self, tti: int):
        """Score the window, then grow, switch phase, or prune."""
        sched = self.schedule
        reward = sched.close_window()
        if self.evaluator is not None:
            reward = self.evaluator(self.model)
        try:
            if sched.phase == GROWING:
                if sched.plateau_check(reward) == GROWING:
                    # sizes in each row are those the window was measured at
                    base = self._row(tti, GROWING, reward)
                    sched.history.extend({**base, **event} for event in self._grow())
                else:
                    sched.history.append(self._row(tti, GROWING, reward))
                    self.model.reset_poz()
                return

            row = self._row(tti, PRUNING, reward)
            event = prune_step(self.model)
            if event is None:
                sched.complete = True
                logger.info(f"compression complete at TTI {tti}")
            else:
                row.update(event)
            sched.history.append(row)
        except StatisticError as err:
            logger.warning(f"TTI {tti}: skipped structural edit, {err}")
            self.model.reset_poz()

    def _grow(self) -> List[dict]:
        before = (self.model.layer_sizes[1], self.model.layer_sizes[2])
        events = grow_step(self.model, self.delta, self.bias_mode, self.layer2_splits)
        logger.debug(f"grew {before} -> {tuple(self.model.hidden_sizes)}")
        return events

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=COMPRESSION_COLUMNS)
