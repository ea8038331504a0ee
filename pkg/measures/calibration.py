"""
Grid Calibration

Factorial sweep of (M_max, alpha) against a ground-truth event log. Every cell
runs `repetitions` seeded simulations; each is scored by the JS divergence of
its volume, virality and unique-user distributions against the truth.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from agents.models import SeedActivity, SimConfig
from agents.seeding import derive_seed
from sources.events import EventLog
from sources.influence import InfluenceNetwork

from .cascades import METRICS, BinningSpec, Distribution, cascade_table, js_divergence, paired_distributions
from .jobs import SimJob, mean_outputs, run_jobs, simulate_outputs

logger = logging.getLogger(__name__)


class GridSpec(BaseModel):
    """Parameter grid and replication of a calibration sweep"""

    m_max_values: list[int] = Field(default_factory=lambda: list(range(5, 40, 5)))
    alpha_values: list[float] = Field(default_factory=lambda: [round(0.1 * i, 1) for i in range(10)])
    repetitions: int = Field(10, ge=1)
    base_seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("m_max_values", "alpha_values")
    @classmethod
    def _nonempty(cls, value: list) -> list:
        if not value:
            raise ValueError("grid axes must be nonempty")
        if len(set(value)) != len(value):
            raise ValueError(f"grid axis has duplicate values: {value}")
        return sorted(value)

    @field_validator("m_max_values")
    @classmethod
    def _positive(cls, value: list[int]) -> list[int]:
        if min(value) < 1:
            raise ValueError(f"M_max values must be >= 1, got {min(value)}")
        return value

    @field_validator("alpha_values")
    @classmethod
    def _unit(cls, value: list[float]) -> list[float]:
        if min(value) < 0 or max(value) > 1:
            raise ValueError(f"alpha values must lie in [0, 1], got {value}")
        return value

    def cells(self) -> list[tuple[int, float]]:
        return [(m, a) for m in self.m_max_values for a in self.alpha_values]

    def seed_for(self, m_max: int, alpha: float, rep: int) -> int:
        return derive_seed(self.base_seed, "cell", m_max, alpha, rep)

    def jobs(self) -> list[SimJob]:
        return [
            SimJob(job_id=(m, a, rep), m_max=m, alpha=a, seed=self.seed_for(m, a, rep))
            for m, a in self.cells()
            for rep in range(self.repetitions)
        ]


@dataclass
class CalibrationCell:
    """Per-repetition JSDs (and model outputs) of one grid cell"""

    m_max: int
    alpha: float
    jsd: dict[str, list[float]] = field(default_factory=lambda: {m: [] for m in METRICS})
    outputs: list[dict] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def params(self) -> tuple[int, float]:
        return self.m_max, self.alpha

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def metric_means(self) -> dict[str, float]:
        return {m: float(np.mean(v)) if v else math.nan for m, v in self.jsd.items()}

    @property
    def mean_jsd(self) -> float:
        """Unweighted mean of the per-metric mean JSDs."""
        return float(np.mean(list(self.metric_means.values())))

    @property
    def objectives(self) -> tuple[float, ...]:
        means = self.metric_means
        return tuple(means[m] for m in METRICS)

    def to_record(self) -> dict:
        record = {"m_max": self.m_max, "alpha": self.alpha, "mean_jsd": None if self.failed else self.mean_jsd}
        record.update({f"jsd_{m}": None if self.failed else v for m, v in self.metric_means.items()})
        if self.failed:
            record["error"] = self.error
        return record


def score_against_truth(truth: pd.DataFrame, simulated: pd.DataFrame, binning: BinningSpec) -> dict[str, float]:
    """JS divergence of each cascade metric distribution, truth vs simulation."""
    if simulated.empty:
        raise ValueError("simulation produced no cascades")
    scores = {}
    for metric in METRICS:
        p, q = paired_distributions(truth[metric], simulated[metric], metric, binning)
        scores[metric] = js_divergence(p, q)
    return scores


def _calibration_run(
    job: SimJob,
    network: InfluenceNetwork,
    config: SimConfig,
    seeds: Optional[SeedActivity],
    truth: pd.DataFrame,
    binning: BinningSpec,
    identity: bool,
) -> dict:
    if identity:
        return {"jsd": score_against_truth(truth, truth, binning), "outputs": {}}
    cascades, agent_resp, _ = simulate_outputs(network, config.with_params(job.m_max, job.alpha, job.seed), seeds)
    return {"jsd": score_against_truth(truth, cascades, binning), "outputs": mean_outputs(cascades, agent_resp)}


def grid_sweep(
    network: Optional[InfluenceNetwork],
    grid: GridSpec,
    ground_truth: EventLog,
    config: Optional[SimConfig] = None,
    seeds: Optional[SeedActivity] = None,
    binning: Optional[BinningSpec] = None,
    workers: int = 1,
    identity: bool = False,
    progress: bool = False,
) -> list[CalibrationCell]:
    """
    Run the factorial calibration sweep.

    Args:
        network: Influence network the agents use (unused in identity mode)
        grid: Parameter values, repetitions and base seed
        ground_truth: Holdout log the simulations are compared against
        config: Base simulation settings; horizon should cover the holdout interval
        identity: Compare the ground truth with itself instead of simulating
        workers: Parallel simulation processes

    Returns:
        One CalibrationCell per grid cell in (M_max, alpha) order. A failed
        repetition marks its cell failed; the sweep still completes.

    Example:
        cells = grid_sweep(network, GridSpec(base_seed=7), truth, SimConfig(horizon=720), seeds)
        select_best(cells)
    """
    config = config or SimConfig(start=ground_truth.start, horizon=ground_truth.n_buckets)
    if config.horizon < ground_truth.n_buckets:
        logger.warning(
            "Simulation horizon %d is shorter than the ground truth (%d steps)",
            config.horizon, ground_truth.n_buckets,
        )
    if network is None and not identity:
        raise ValueError("a network is required unless identity mode is set")

    truth = cascade_table(ground_truth)
    if truth.empty:
        raise ValueError("ground truth has no cascades")
    binning = binning or BinningSpec()

    jobs = grid.jobs()
    logger.info("Sweeping %d cells x %d repetitions", len(grid.cells()), grid.repetitions)
    context = {
        "network": network, "config": config, "seeds": seeds,
        "truth": truth, "binning": binning, "identity": identity,
    }
    outcomes = run_jobs(_calibration_run, jobs, context, workers=workers, progress=progress)

    cells = {params: CalibrationCell(*params) for params in grid.cells()}
    for job in jobs:
        m_max, alpha, _ = job.job_id
        cell = cells[(m_max, alpha)]
        outcome = outcomes[job.job_id]
        if outcome.failed:
            if cell.error is None:
                cell.error = f"rep {job.job_id[2]}: {outcome.error}"
            continue
        for metric, value in outcome.value["jsd"].items():
            cell.jsd[metric].append(value)
        cell.outputs.append(outcome.value["outputs"])

    failed = [c.params for c in cells.values() if c.failed]
    if failed:
        logger.warning("%d of %d cells failed: %s", len(failed), len(cells), failed)
    return list(cells.values())


def select_best(cells: list[CalibrationCell]) -> CalibrationCell:
    """Lowest mean JSD; ties go to the lower M_max, then the lower alpha."""
    candidates = [c for c in cells if not c.failed]
    if not candidates:
        raise ValueError("no successful cells to select from")
    return min(candidates, key=lambda c: (c.mean_jsd, c.m_max, c.alpha))


def _dominates(a: tuple[float, ...], b: tuple[float, ...]) -> bool:
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def pareto_front(cells: list[CalibrationCell]) -> list[CalibrationCell]:
    """Cells no other cell beats on every per-metric mean JSD, in (M_max, alpha) order."""
    candidates = [c for c in cells if not c.failed]
    front = [c for c in candidates if not any(_dominates(o.objectives, c.objectives) for o in candidates)]
    return sorted(front, key=lambda c: (c.m_max, c.alpha))


def capacity_distribution(traces: pd.DataFrame) -> tuple[Distribution, dict]:
    """
    Pooled histogram of hourly capacity M_t over all agents and steps.

    Returns:
        (Distribution with one unit-width bin per integer value, {"max", "mode", "mean"})
    """
    capacity = traces["capacity"].to_numpy(dtype=int)
    if capacity.size == 0:
        raise ValueError("traces are empty")
    top = int(capacity.max())
    counts = np.bincount(capacity, minlength=top + 1)
    dist = Distribution(edges=np.arange(top + 2, dtype=float), counts=counts)
    summary = {"max": top, "mode": int(np.argmax(counts)), "mean": float(capacity.mean())}
    return dist, summary


def sweep_frame(cells: list[CalibrationCell]) -> pd.DataFrame:
    """Long format: m_max, alpha, rep, metric, jsd."""
    rows = [
        (cell.m_max, cell.alpha, rep, metric, value)
        for cell in cells
        for metric in METRICS
        for rep, value in enumerate(cell.jsd[metric])
    ]
    return pd.DataFrame(rows, columns=["m_max", "alpha", "rep", "metric", "jsd"])


def runs_frame(cells: list[CalibrationCell]) -> pd.DataFrame:
    """One row per successful repetition with its model outputs."""
    rows = []
    for cell in cells:
        for rep, outputs in enumerate(cell.outputs):
            rows.append({"m_max": cell.m_max, "alpha": cell.alpha, "rep": rep, **outputs})
    return pd.DataFrame(rows)


def responsiveness_cells(runs: pd.DataFrame) -> pd.DataFrame:
    """
    Per-cell responsiveness from run rows.

    responsiveness_mean averages the runs' mean over agents; responsiveness_var
    averages the runs' variance across agents.
    """
    return runs.groupby(["m_max", "alpha"]).agg(
        responsiveness_mean=("responsiveness", "mean"),
        responsiveness_var=("responsiveness_var", "mean"),
    ).reset_index()


def cell_frame(cells: list[CalibrationCell]) -> pd.DataFrame:
    """Per-cell mean JSDs plus responsiveness mean and agent variance."""
    frame = pd.DataFrame([cell.to_record() for cell in cells])
    runs = runs_frame(cells)
    if not runs.empty and "responsiveness" in runs:
        frame = frame.merge(responsiveness_cells(runs), on=["m_max", "alpha"], how="left")
    return frame


def sweep_summary(cells: list[CalibrationCell]) -> dict:
    failed = [c.to_record() for c in cells if c.failed]
    ok = [c for c in cells if not c.failed]
    summary = {
        "cells": len(cells),
        "failed_cells": failed,
        "best": None,
        "pareto_front": [c.to_record() for c in pareto_front(cells)],
    }
    if ok:
        summary["best"] = select_best(cells).to_record()
    return summary
