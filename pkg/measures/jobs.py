"""
Parallel Simulation Jobs

Sweeps and sensitivity designs are lists of independent (params, seed) jobs.
Workers receive the shared inputs (network, base config, seeds) once at start-up;
results are joined by job id, so output never depends on worker count.
"""

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable, Optional

from tqdm import tqdm

from agents.engine import responsiveness, run_simulation
from agents.models import SeedActivity, SimConfig
from sources.influence import InfluenceNetwork

from .cascades import METRICS, cascade_table

logger = logging.getLogger(__name__)

_context: dict = {}


@dataclass(frozen=True)
class SimJob:
    job_id: Hashable
    m_max: int
    alpha: float
    seed: int


@dataclass(frozen=True)
class JobOutcome:
    job_id: Hashable
    value: Any = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _install(context: dict):
    global _context
    _context = context


def _call(fn: Callable, job: SimJob) -> JobOutcome:
    try:
        return JobOutcome(job.job_id, fn(job, **_context))
    except Exception as e:
        logger.warning("Job %s failed: %s", job.job_id, e)
        return JobOutcome(job.job_id, error=f"{type(e).__name__}: {e}")


def run_jobs(
    fn: Callable,
    jobs: Iterable[SimJob],
    context: dict,
    workers: int = 1,
    progress: bool = False,
) -> dict[Hashable, JobOutcome]:
    """
    Execute `fn(job, **context)` for every job.

    Args:
        fn: Module-level worker function (picklable)
        jobs: Jobs with unique ids
        context: Shared keyword inputs, sent once per worker process
        workers: Process count (1 runs in-process)
        progress: Show a tqdm progress bar

    Returns:
        Outcomes keyed by job id; failures carry the error text
    """
    jobs = list(jobs)
    outcomes: dict[Hashable, JobOutcome] = {}
    with tqdm(total=len(jobs), disable=not progress, desc="simulations") as bar:
        if workers <= 1:
            _install(context)
            for job in jobs:
                outcomes[job.job_id] = _call(fn, job)
                bar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=workers, initializer=_install, initargs=(context,)) as executor:
                futures = [executor.submit(_call, fn, job) for job in jobs]
                for future in as_completed(futures):
                    outcome = future.result()
                    outcomes[outcome.job_id] = outcome
                    bar.update(1)
    return outcomes


def simulate_outputs(network: InfluenceNetwork, config: SimConfig, seeds: Optional[SeedActivity]):
    """Run one simulation; return its cascade table and per-agent responsiveness."""
    result = run_simulation(network, config, seeds)
    return cascade_table(result.log), responsiveness(result.ledger), result


def mean_outputs(cascades, agent_responsiveness) -> dict[str, float]:
    """Model outputs of one run: metric means over cascades, responsiveness over agents."""
    outputs = {m: float(cascades[m].mean()) if len(cascades) else float("nan") for m in METRICS}
    values = agent_responsiveness.dropna().to_numpy()
    outputs["responsiveness"] = float(values.mean()) if values.size else float("nan")
    outputs["responsiveness_var"] = float(values.var()) if values.size else float("nan")
    outputs["cascades"] = float(len(cascades))
    return outputs


def sensitivity_job(job: SimJob, network: InfluenceNetwork, config: SimConfig, seeds: Optional[SeedActivity]) -> dict:
    cascades, agent_resp, _ = simulate_outputs(network, config.with_params(job.m_max, job.alpha, job.seed), seeds)
    return mean_outputs(cascades, agent_resp)
