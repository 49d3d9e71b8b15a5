#!/usr/bin/env python

"""Experiment orchestration.

Single runs, the compression pre-simulation, multi-seed sweeps over
average UE counts, relative comparisons between algorithms and the
consistency audit of a written run.

Example
-------
>>> config = RunConfig(ttis=5000)
>>> table = sweep(config, ues=[25, 45], seeds=[1, 2, 3], algorithms=["ktfluc", "dil"])
>>> compare(table, "dil", "ktfluc", "mean_gbr_delay_ms", m_avg=45)
"""

import json
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Iterable, Optional, Sequence
import numpy as np
import pandas as pd
from scipy import stats
from loguru import logger

from flucsim.baselines import Simulation
from flucsim.config import RunConfig
from flucsim.io.writer import Writer, TTI_CSV, SUMMARY_JSON
from flucsim.metrics import DELAY_LIKE, SUMMARY_METRICS, MetricsRecord, audit_frame
from flucsim.utils.utils import ConfigurationError, FlucSimError, StatisticError

logger = logger.bind(name="flucsim")

SWEEP_RUNS_CSV = "sweep_runs.csv"
SWEEP_CSV = "sweep.csv"
COMPRESSED_MODEL = "compressed.mlp"


def _write(record: MetricsRecord, config: RunConfig, out: Optional[str], extra=None):
    """Write a finished run, removing partial outputs on failure."""
    if not out:
        return
    writer = Writer(out)
    try:
        writer.write_record(record, config, config.save_model, config.save_fed_rounds)
        if extra is not None:
            extra(writer)
    except (OSError, FlucSimError):
        writer.cleanup()
        raise


def run_experiment(config: RunConfig, out: Optional[str] = None) -> MetricsRecord:
    """Run the configured algorithm end to end.

    Parameters
    ----------
    config: RunConfig
        Scenario, algorithm and seed.
    out: str or None
        Output directory; defaults to config.out. Nothing is written
        if both are None.

    Returns
    -------
    MetricsRecord with the per-TTI rows, federation log and summary.
    """
    out = out if out is not None else config.out
    record = Simulation(config).run()
    _write(record, config, out)
    return record


def run_compression(config: RunConfig, out: Optional[str] = None) -> MetricsRecord:
    """Run the grow/prune pre-simulation.

    The pre-simulation runs in dil mode for at most
    config.compression_ttis TTIs and stops early once pruning reaches
    the width floor. The designated model is written as compressed.mlp.
    """
    out = out if out is not None else config.out
    pre = config.replace(
        algorithm="dil", ttis=config.compression_ttis, overlap_aggregation=False)
    record = Simulation(pre, compress=True).run(stop_when_compressed=True)
    if not record.compression:
        logger.warning("no compression window closed; increase compression_ttis")

    def _model(writer: Writer):
        writer.write_model(record.final_models["compressed"], COMPRESSED_MODEL)

    _write(record, pre, out, extra=_model)
    report = record.effectiveness or {}
    logger.info(
        f"compression finished: peak {report.get('peak_neurons')} neurons, "
        f"threshold {report.get('threshold_neurons')}")
    return record


def _sweep_cell(config: RunConfig) -> Dict:
    """One sweep run; module level so process pools can pickle it."""
    summary = Simulation(config).run().summary()
    summary.update({"algorithm": config.algorithm, "m_avg": config.m_avg, "seed": config.seed})
    return summary


def _ci95(values: pd.Series) -> float:
    vals = values.dropna().to_numpy(dtype=float)
    if len(vals) < 2:
        return np.nan
    return float(stats.sem(vals) * stats.t.ppf(0.975, len(vals) - 1))


def aggregate_runs(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean, population std and 95% CI of every summary metric per cell."""
    rows = []
    for (algorithm, m_avg), cell in runs.groupby(["algorithm", "m_avg"], sort=True):
        row = {"algorithm": algorithm, "m_avg": m_avg, "n_seeds": len(cell)}
        for metric in SUMMARY_METRICS:
            values = pd.to_numeric(cell[metric], errors="coerce")
            row[f"{metric}_mean"] = values.mean()
            row[f"{metric}_std"] = values.std(ddof=0)
            row[f"{metric}_ci95"] = _ci95(values)
        rows.append(row)
    return pd.DataFrame(rows)


def sweep(
    config: RunConfig,
    ues: Iterable[float],
    seeds: Sequence[int],
    algorithms: Optional[Sequence[str]] = None,
    workers: int = 1,
    out: Optional[str] = None,
    ) -> pd.DataFrame:
    """Repeat runs over algorithms, average UE counts and seeds.

    Parameters
    ----------
    config: RunConfig
        Base settings; algorithm, m_avg and seed are overridden.
    ues: iterable of float
        Average UE counts.
    seeds: sequence of int
        Root seeds; at least one.
    algorithms: sequence of str or None
        Modes to run; defaults to config.algorithm.
    workers: int
        Parallel processes. Results do not depend on it.
    out: str or None
        Directory for sweep_runs.csv (one row per run) and sweep.csv.

    Returns
    -------
    pd.DataFrame with one row per (algorithm, m_avg) cell holding
    n_seeds and {metric}_mean, {metric}_std, {metric}_ci95 columns.
    """
    seeds = list(seeds)
    if not seeds:
        raise ConfigurationError("sweep needs at least one seed")
    algorithms = list(algorithms) if algorithms else [config.algorithm]
    ues = list(ues)
    if not ues:
        raise ConfigurationError("sweep needs at least one UE count")
    configs = [
        config.replace(algorithm=alg, m_avg=float(m), seed=int(seed),
                       out=None, save_model=None, save_fed_rounds=False)
        for alg in algorithms for m in ues for seed in seeds
    ]
    logger.info(f"sweep of {len(configs)} runs on {workers} worker(s)")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_sweep_cell, configs))
    else:
        summaries = [_sweep_cell(i) for i in configs]

    runs = pd.DataFrame(summaries)
    lead = ["algorithm", "m_avg", "seed"]
    runs = runs[lead + [i for i in runs.columns if i not in lead]]
    table = aggregate_runs(runs)

    if out:
        writer = Writer(out)
        try:
            writer.write_csv(runs, SWEEP_RUNS_CSV)
            writer.write_csv(table, SWEEP_CSV)
        except OSError:
            writer.cleanup()
            raise
        logger.info(f"wrote sweep tables to {writer.outdir}")
    return table


def compare(
    summary: pd.DataFrame,
    baseline_mode: str,
    test_mode: str,
    metric: str,
    m_avg: Optional[float] = None,
    ) -> float:
    """Relative improvement of test_mode over baseline_mode.

    Delay-like metrics (smaller is better) give (baseline - test) /
    baseline; all others give (test - baseline) / baseline.

    Parameters
    ----------
    summary: pd.DataFrame
        A sweep table, or any frame with an algorithm column and either
        a {metric}_mean or a {metric} column.
    m_avg: float or None
        Selects the UE count when the table holds several.

    Example
    -------
    >>> table = pd.DataFrame({"algorithm": ["cl", "ktfluc"], "mean_gbr_delay_ms": [100, 35]})
    >>> compare(table, "cl", "ktfluc", "mean_gbr_delay_ms")
    0.65
    """
    column = f"{metric}_mean" if f"{metric}_mean" in summary.columns else metric
    if column not in summary.columns:
        raise ConfigurationError(f"metric {metric!r} not in summary table")
    values = {}
    for mode in (baseline_mode, test_mode):
        cell = summary[summary["algorithm"] == mode]
        if m_avg is not None and "m_avg" in cell.columns:
            cell = cell[np.isclose(cell["m_avg"].astype(float), float(m_avg))]
        if cell.empty:
            raise ConfigurationError(f"no {mode!r} cell in summary table (m_avg={m_avg})")
        if len(cell) > 1:
            raise ConfigurationError(
                f"{len(cell)} {mode!r} cells in summary table; select one with m_avg")
        value = cell[column].iloc[0]
        if pd.isna(value):
            raise StatisticError(f"{metric} is undefined for {mode!r}")
        values[mode] = float(value)

    base, test = values[baseline_mode], values[test_mode]
    if base == 0:
        raise StatisticError(f"baseline {metric} is zero; relative change undefined")
    if metric in DELAY_LIKE:
        return (base - test) / base
    return (test - base) / base


def audit_run(run_dir: str) -> Dict[str, tuple]:
    """Recompute the summary of a written run from its per-TTI CSV.

    Returns {metric: (stored, recomputed)} for every mismatch plus any
    non-zero constraint or conservation counter as (value, 0).
    """
    run_dir = os.path.realpath(os.path.expanduser(run_dir))
    csv_path = os.path.join(run_dir, TTI_CSV)
    json_path = os.path.join(run_dir, SUMMARY_JSON)
    for path in (csv_path, json_path):
        if not os.path.isfile(path):
            raise ConfigurationError(f"{path} does not exist")

    frame = pd.read_csv(csv_path, float_precision="round_trip")
    with open(json_path, "r", encoding="utf-8") as infile:
        summary = json.load(infile)

    bad = audit_frame(frame, summary)
    for counter in ("rb_conflicts", "attachment_errors", "conservation_errors"):
        if summary.get(counter, 0):
            bad[counter] = (summary[counter], 0)
    if bad:
        logger.warning(f"audit of {run_dir} found {len(bad)} problem(s)")
    else:
        logger.info(f"audit of {run_dir} passed")
    return bad
