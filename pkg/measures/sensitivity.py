"""
Sobol Sensitivity Analysis

Variance-based sensitivity of conversation characteristics and responsiveness
to the overload parameters (M_max, alpha):
- Saltelli design on a scrambled Sobol sequence (SALib) with Saltelli first-order
  and Jansen total-order estimators, bootstrap confidence intervals
- Grid mode: variance decomposition over the cell means of a factorial sweep
- Sliced first-order indices of one parameter at fixed values of the other
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from SALib.analyze import sobol as sobol_analyze
from SALib.sample import sobol as sobol_sample
from scipy.stats import norm

from agents.models import SeedActivity, SimConfig
from agents.seeding import derive_seed
from sources.influence import InfluenceNetwork

from .calibration import GridSpec
from .jobs import SimJob, run_jobs, sensitivity_job

logger = logging.getLogger(__name__)

OUTPUT_METRICS = ("volume", "virality", "unique_users", "responsiveness")


class ParameterSpace(BaseModel):
    """Names, bounds, and integer-valued parameters"""

    names: list[str] = Field(default_factory=lambda: ["m_max", "alpha"])
    bounds: list[tuple[float, float]] = Field(default_factory=lambda: [(5.0, 35.0), (0.0, 0.9)])
    integer: list[str] = Field(default_factory=lambda: ["m_max"])

    @model_validator(mode="after")
    def _check(self) -> "ParameterSpace":
        if len(self.names) != len(self.bounds) or not self.names:
            raise ValueError(f"{len(self.names)} names for {len(self.bounds)} bounds")
        for name, (lo, hi) in zip(self.names, self.bounds):
            if not lo < hi:
                raise ValueError(f"invalid range for {name}: [{lo}, {hi}]")
        unknown = set(self.integer) - set(self.names)
        if unknown:
            raise ValueError(f"integer parameters not in names: {sorted(unknown)}")
        return self

    @property
    def dimension(self) -> int:
        return len(self.names)

    def problem(self) -> dict:
        return {"num_vars": self.dimension, "names": list(self.names), "bounds": [list(b) for b in self.bounds]}


@dataclass(frozen=True, eq=False)
class SaltelliDesign:
    """Rows in SALib order: per base point A, AB_1 .. AB_d, B"""

    space: ParameterSpace
    n_base: int
    matrix: np.ndarray

    @property
    def step(self) -> int:
        return self.space.dimension + 2

    @property
    def A(self) -> np.ndarray:
        return self.matrix[0::self.step]

    @property
    def B(self) -> np.ndarray:
        return self.matrix[self.step - 1::self.step]

    def AB(self, i: int) -> np.ndarray:
        return self.matrix[i + 1::self.step]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.matrix, columns=self.space.names)


def saltelli_sample(space: ParameterSpace, n_base: int, seed: int = 0) -> SaltelliDesign:
    """
    Low-discrepancy Saltelli design with N_base * (d + 2) rows.

    Integer parameters (M_max) are rounded to the nearest integer after sampling.

    Example:
        saltelli_sample(ParameterSpace(), 8).matrix.shape  # (32, 2)
    """
    if n_base < 1 or n_base & (n_base - 1):
        raise ValueError(f"N_base must be a power of 2, got {n_base}")
    matrix = sobol_sample.sample(space.problem(), n_base, calc_second_order=False, scramble=True, seed=seed)
    for j, name in enumerate(space.names):
        if name in space.integer:
            lo, hi = space.bounds[j]
            matrix[:, j] = np.clip(np.floor(matrix[:, j] + 0.5), lo, hi)
    return SaltelliDesign(space=space, n_base=n_base, matrix=matrix)


class SobolIndex(BaseModel):
    parameter: str
    s1: Optional[float] = None
    s1_conf: Optional[float] = None
    st: Optional[float] = None
    st_conf: Optional[float] = None


class SobolResult(BaseModel):
    """First-order and total indices of one output metric"""

    metric: str
    n: int
    indices: list[SobolIndex]

    @property
    def missing(self) -> bool:
        return any(ix.s1 is None for ix in self.indices)

    def index(self, parameter: str) -> SobolIndex:
        for ix in self.indices:
            if ix.parameter == parameter:
                return ix
        raise KeyError(parameter)

    def to_rows(self) -> list[dict]:
        rows = []
        for ix in self.indices:
            conf = ix.s1_conf
            rows.append({
                "metric": self.metric,
                "parameter": ix.parameter,
                "S_i": ix.s1,
                "S_Ti": ix.st,
                "ci_lo": None if ix.s1 is None or conf is None else ix.s1 - conf,
                "ci_hi": None if ix.s1 is None or conf is None else ix.s1 + conf,
                "S_Ti_conf": ix.st_conf,
                "N": self.n,
            })
        return rows


def _missing(metric: str, names: Sequence[str], n: int) -> SobolResult:
    return SobolResult(metric=metric, n=n, indices=[SobolIndex(parameter=p) for p in names])


def sobol_indices(
    space: ParameterSpace,
    outputs: Sequence[float],
    metric: str = "output",
    num_resamples: int = 1000,
    conf_level: float = 0.95,
    seed: int = 0,
) -> SobolResult:
    """
    Sobol indices from model outputs on a Saltelli design.

    Args:
        space: Parameter space the design was drawn from
        outputs: One output per design row, in design order
        metric: Output name recorded in the result
        num_resamples: Bootstrap resamples for the confidence half-widths

    Returns:
        SobolResult; indices are None when the outputs have zero variance

    Example:
        design = saltelli_sample(space, 1024)
        Y = model(design.matrix)
        sobol_indices(space, Y).index("m_max").s1
    """
    Y = np.asarray(outputs, dtype=float)
    step = space.dimension + 2
    if Y.ndim != 1 or Y.size == 0 or Y.size % step:
        raise ValueError(f"{Y.size} outputs do not fill a design with {step} rows per base point")
    if not np.isfinite(Y).all():
        raise ValueError(f"{int((~np.isfinite(Y)).sum())} non-finite model outputs")
    n = Y.size // step
    if np.var(Y) == 0:
        logger.warning("Output %s has zero variance; indices undefined", metric)
        return _missing(metric, space.names, n)

    res = sobol_analyze.analyze(
        space.problem(), Y, calc_second_order=False, num_resamples=num_resamples,
        conf_level=conf_level, print_to_console=False, seed=seed,
    )
    indices = [
        SobolIndex(
            parameter=name,
            s1=float(res["S1"][j]), s1_conf=float(res["S1_conf"][j]),
            st=float(res["ST"][j]), st_conf=float(res["ST_conf"][j]),
        )
        for j, name in enumerate(space.names)
    ]
    return SobolResult(metric=metric, n=n, indices=indices)


def _grid_point(frame: pd.DataFrame, metric: str, params: Sequence[str]) -> tuple[list[float], list[float]]:
    y = frame[metric]
    var_y = y.var(ddof=0)
    s1, st = [], []
    for p in params:
        others = [o for o in params if o != p]
        s1.append(y.groupby(frame[p]).transform("mean").var(ddof=0) / var_y)
        if others:
            st.append(1.0 - y.groupby([frame[o] for o in others]).transform("mean").var(ddof=0) / var_y)
        else:
            st.append(1.0)
    return s1, st


def grid_sobol_indices(
    runs: pd.DataFrame,
    metric: str,
    params: Sequence[str] = ("m_max", "alpha"),
    num_resamples: int = 1000,
    conf_level: float = 0.95,
    seed: int = 0,
) -> SobolResult:
    """
    Sobol indices over a full factorial sweep with replicates.

    S_i = Var(E[Y | x_i]) / Var(Y) and S_Ti = 1 - Var(E[Y | x_~i]) / Var(Y), with
    expectations taken as grid cell means. Confidence half-widths come from
    resampling replicates within each cell.

    Args:
        runs: One row per simulation with the parameter columns and `metric`
    """
    params = list(params)
    frame = runs.dropna(subset=[metric]).reset_index(drop=True)
    cells = frame.groupby(params).size()
    n = int(cells.min()) if len(cells) else 0
    if frame.empty or frame[metric].var(ddof=0) == 0:
        return _missing(metric, params, n)

    s1, st = _grid_point(frame, metric, params)

    rng = np.random.default_rng(seed)
    groups = [np.asarray(idx) for idx in frame.groupby(params).indices.values()]
    boot_s1, boot_st = [], []
    for _ in range(num_resamples):
        picks = np.concatenate([g[rng.integers(0, len(g), len(g))] for g in groups])
        sample = frame.iloc[picks]
        if sample[metric].var(ddof=0) == 0:
            continue
        b1, bt = _grid_point(sample, metric, params)
        boot_s1.append(b1)
        boot_st.append(bt)

    z = norm.ppf(0.5 + conf_level / 2)
    s1_conf = z * np.std(boot_s1, axis=0, ddof=1) if len(boot_s1) > 1 else [None] * len(params)
    st_conf = z * np.std(boot_st, axis=0, ddof=1) if len(boot_st) > 1 else [None] * len(params)
    indices = [
        SobolIndex(
            parameter=p, s1=float(s1[j]), st=float(st[j]),
            s1_conf=None if s1_conf[j] is None else float(s1_conf[j]),
            st_conf=None if st_conf[j] is None else float(st_conf[j]),
        )
        for j, p in enumerate(params)
    ]
    return SobolResult(metric=metric, n=n, indices=indices)


def sliced_first_order(
    runs: pd.DataFrame,
    slice_param: str,
    other_param: str,
    metric: str = "responsiveness",
) -> pd.DataFrame:
    """
    First-order index of `other_param` at each fixed value of `slice_param`.

    Returns:
        Columns slice_value, S_i, runs; S_i is NaN where the slice has no variance

    Example:
        # sensitivity of responsiveness to M_max as alpha varies
        sliced_first_order(runs, slice_param="alpha", other_param="m_max")
    """
    frame = runs.dropna(subset=[metric])
    rows = []
    for value, sub in frame.groupby(slice_param, sort=True):
        replicates = sub.groupby(other_param).size()
        if replicates.min() < 2:
            raise ValueError(
                f"slice {slice_param}={value} has cells with fewer than 2 replicates"
            )
        var_y = sub[metric].var(ddof=0)
        s1 = np.nan if var_y == 0 else sub[metric].groupby(sub[other_param]).transform("mean").var(ddof=0) / var_y
        rows.append({"slice_value": value, "S_i": float(s1), "runs": len(sub)})
    return pd.DataFrame(rows, columns=["slice_value", "S_i", "runs"])


def run_sensitivity(
    network: InfluenceNetwork,
    config: SimConfig,
    seeds: Optional[SeedActivity],
    space: Optional[ParameterSpace] = None,
    n_base: int = 256,
    seed: int = 0,
    workers: int = 1,
    num_resamples: int = 1000,
    progress: bool = False,
) -> tuple[SaltelliDesign, pd.DataFrame, list[SobolResult]]:
    """
    Simulate every row of a Saltelli design and analyse each output metric.

    Returns:
        (design, one row of outputs per design row, SobolResult per metric)
    """
    space = space or ParameterSpace()
    if space.names != ["m_max", "alpha"]:
        raise ValueError(f"simulation sensitivity expects parameters ['m_max', 'alpha'], got {space.names}")
    design = saltelli_sample(space, n_base, seed=seed)
    jobs = [
        SimJob(job_id=i, m_max=int(row[0]), alpha=float(row[1]), seed=derive_seed(seed, "design", i))
        for i, row in enumerate(design.matrix)
    ]
    outcomes = run_jobs(sensitivity_job, jobs, {"network": network, "config": config, "seeds": seeds},
                        workers=workers, progress=progress)
    failed = [i for i, o in outcomes.items() if o.failed]
    if failed:
        raise RuntimeError(f"{len(failed)} design runs failed, first: {outcomes[failed[0]].error}")

    outputs = design.to_frame()
    values = pd.DataFrame([outcomes[i].value for i in range(len(jobs))])
    outputs = pd.concat([outputs, values], axis=1)

    results = [
        sobol_indices(space, outputs[m].to_numpy(), metric=m, num_resamples=num_resamples, seed=seed)
        for m in OUTPUT_METRICS
    ]
    return design, outputs, results


def factorial_sweep(
    network: InfluenceNetwork,
    grid: GridSpec,
    config: SimConfig,
    seeds: Optional[SeedActivity],
    workers: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Model outputs of every (M_max, alpha, rep) of a factorial grid.

    Returns:
        One row per run: m_max, alpha, rep, the mean cascade metrics,
        responsiveness mean and variance over agents, and an error column
        that is set for failed runs
    """
    jobs = grid.jobs()
    outcomes = run_jobs(sensitivity_job, jobs, {"network": network, "config": config, "seeds": seeds},
                        workers=workers, progress=progress)
    rows = []
    for job in jobs:
        m_max, alpha, rep = job.job_id
        outcome = outcomes[job.job_id]
        rows.append({"m_max": m_max, "alpha": alpha, "rep": rep, **(outcome.value or {}), "error": outcome.error})
    frame = pd.DataFrame(rows)
    failed = int(frame["error"].notna().sum())
    if failed:
        logger.warning("%d of %d sweep runs failed", failed, len(frame))
    return frame
