#!/usr/bin/env python

"""Writer class for emitting run results to a directory.

Outputs are the per-TTI CSV, the mean reward trajectory, the summary
JSON, the federation log, the compression history, the effectiveness
report, a wall-clock timing breakdown and optional model snapshots. Every file written is tracked
so that a failed command can remove its partial outputs.
"""

import json
import os
from typing import Dict, List, Optional
import pandas as pd
from loguru import logger

from flucsim.compress.controller import COMPRESSION_COLUMNS
from flucsim.fed.coordinator import FEDERATION_COLUMNS, GROUP_NAMES
from flucsim.metrics import MetricsRecord
from flucsim.nn.mlp import MlpModel
from flucsim.nn.snapshot import write_snapshot

logger = logger.bind(name="flucsim")

TTI_CSV = "ttis.csv"
TRAJECTORY_CSV = "reward_trajectory.csv"
SUMMARY_JSON = "summary.json"
FEDERATION_CSV = "federation.csv"
COMPRESSION_CSV = "compression.csv"
EFFECTIVENESS_JSON = "effectiveness.json"
TIMING_JSON = "timing.json"
CONFIG_JSON = "config.json"


class Writer:
    """Write flucsim results to an output directory.

    This class is used by the harness functions and is not intended to
    be accessed by users directly.

    Parameters
    ----------
    outdir: str
        Directory for all outputs. It is created if it does not exist.
    """
    def __init__(self, outdir: str):
        self.outdir = os.path.realpath(os.path.expanduser(outdir))
        self.written: List[str] = []
        self._created_dir = False

    def _path(self, name: str) -> str:
        if not os.path.exists(self.outdir):
            os.makedirs(self.outdir)
            self._created_dir = True
        path = os.path.join(self.outdir, name)
        self.written.append(path)
        return path

    def write_csv(self, frame: pd.DataFrame, name: str) -> str:
        path = self._path(name)
        frame.to_csv(path, index=False, na_rep="")
        return path

    def write_json(self, data: Dict, name: str) -> str:
        path = self._path(name)
        with open(path, "w", encoding="utf-8") as out:
            json.dump(data, out, indent=2, sort_keys=True)
            out.write("\n")
        return path

    def write_model(self, model: MlpModel, name: str) -> str:
        path = self._path(name)
        write_snapshot(model, path)
        return path

    def write_record(
        self,
        record: MetricsRecord,
        config=None,
        save_model: Optional[str] = None,
        save_fed_rounds: bool = False,
        ):
        """Write every output of a run.

        Parameters
        ----------
        record: MetricsRecord
            The finished run.
        config: RunConfig or None
            Written next to the results so the run can be reproduced.
        save_model: str or None
            Path prefix for the run's final model snapshots.
        save_fed_rounds: bool
            Write the global models of every federation round under
            fed_rounds/.
        """
        self.write_csv(record.df, TTI_CSV)
        self.write_csv(record.reward_trajectory(), TRAJECTORY_CSV)
        self.write_json(record.summary(), SUMMARY_JSON)
        self.write_csv(pd.DataFrame(record.federation, columns=FEDERATION_COLUMNS), FEDERATION_CSV)
        self.write_csv(pd.DataFrame(record.compression, columns=COMPRESSION_COLUMNS), COMPRESSION_CSV)
        if record.effectiveness is not None:
            self.write_json(record.effectiveness, EFFECTIVENESS_JSON)
        self.write_json(record.timing, TIMING_JSON)
        if config is not None:
            self.write_json(config.to_dict(), CONFIG_JSON)

        if save_model:
            for label, model in sorted(record.final_models.items()):
                path = f"{save_model}_{label}.mlp"
                write_snapshot(model, path)
                self.written.append(os.path.realpath(os.path.expanduser(path)))
        if save_fed_rounds:
            for rnd, group, model in record.fed_snapshots:
                self.write_model(model, os.path.join(
                    "fed_rounds", f"round{rnd:05d}_{GROUP_NAMES[group]}.mlp"))
        logger.info(f"wrote {len(self.written)} files to {self.outdir}")

    def cleanup(self):
        """Remove every file this writer created (and its dir if it made it)."""
        for path in reversed(self.written):
            if os.path.isfile(path):
                os.remove(path)
        fed_dir = os.path.join(self.outdir, "fed_rounds")
        if os.path.isdir(fed_dir) and not os.listdir(fed_dir):
            os.rmdir(fed_dir)
        if self._created_dir and os.path.isdir(self.outdir) and not os.listdir(self.outdir):
            os.rmdir(self.outdir)
        logger.debug(f"removed {len(self.written)} partial outputs from {self.outdir}")
        self.written = []
