"""
overloadsim command line

Usage:
    overloadsim ingest --input raw.csv --format csv
    overloadsim influence --log outputs/events.jsonl --k 1 --threshold 0.01
    overloadsim simulate --network outputs/network.jsonl --m-max 30 --alpha 0.8
    overloadsim sweep --network outputs/network.jsonl --jobs 8
    overloadsim calibrate --network outputs/network.jsonl --truth holdout.jsonl --jobs 8
    overloadsim measure --truth holdout.jsonl --simulated outputs/simulated.jsonl
    overloadsim sensitivity --network outputs/network.jsonl --n-base 8 --dry-run

Every command accepts --config run.toml; flags override file values and
OVERLOADSIM_* environment variables fill the rest.
"""

import argparse
import json
import logging
import sys
from collections import Counter
from datetime import datetime
from pathlib import Path
from typing import Optional

import pandas as pd
from dotenv import load_dotenv

from agents.engine import LEDGER_COLUMNS, estimate_background_rates, exposure_frame, responsiveness, run_simulation
from agents.models import OverloadParams, SeedActivity, SimConfig
from measures.calibration import (
    GridSpec,
    capacity_distribution,
    cell_frame,
    grid_sweep,
    responsiveness_cells,
    sweep_frame,
    sweep_summary,
)
from measures.cascades import (
    METRICS,
    cascade_table,
    exposure_response_curve,
    js_divergence,
    neighbor_popularity,
    neighborhood_presence,
    overload_exposure_analysis,
    paired_distributions,
)
from measures.sensitivity import (
    ParameterSpace,
    factorial_sweep,
    grid_sobol_indices,
    run_sensitivity,
    saltelli_sample,
    sliced_first_order,
)
from sources.events import EventLog, bucket_series, parse_event_log, validate_references, write_event_log
from sources.influence import InfluenceNetwork, build_influence_network
from sources.synthetic import background_seeds

from .config import Settings, load_settings
from .outputs import artifact_header, read_csv_artifact, read_jsonl_artifact, write_csv, write_json, write_jsonl

logger = logging.getLogger("overloadsim")

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

SWEEP_OUTPUTS = ("volume", "virality", "unique_users", "responsiveness")


def _require(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise ValueError(f"no {what} given")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _load_log(path: Path) -> EventLog:
    fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    return parse_event_log(path, fmt=fmt)


def _load_network(settings: Settings) -> InfluenceNetwork:
    network = InfluenceNetwork.from_jsonl(_require(settings.paths.network, "network file"))
    logger.info("Loaded network: %d users, %d edges", len(network.users), len(network))
    return network


def _seeds(settings: Settings, network: InfluenceNetwork) -> SeedActivity:
    if settings.paths.seeds_log is not None:
        rates = estimate_background_rates(_load_log(_require(settings.paths.seeds_log, "seeds log")))
        return SeedActivity(background_rates=rates)
    return background_seeds(network.users, settings.simulation.background_rate)


def _sim_config(settings: Settings, start: Optional[datetime] = None, horizon: Optional[int] = None) -> SimConfig:
    sim = settings.simulation
    return SimConfig(
        horizon=horizon or sim.horizon,
        seed=settings.seed,
        params=OverloadParams(m_max=sim.m_max, alpha=sim.alpha),
        start=start or sim.start,
        response_selection=sim.response_selection,
    )


def _grid(settings: Settings) -> GridSpec:
    return GridSpec(
        m_max_values=settings.grid.m_max_values,
        alpha_values=settings.grid.alpha_values,
        repetitions=settings.grid.repetitions,
        base_seed=settings.seed,
    )


def _out(settings: Settings) -> Path:
    out = Path(settings.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(settings: Settings, args) -> int:
    log = parse_event_log(_require(settings.paths.input_log, "input log"), fmt=args.format)
    dangling = validate_references(log)
    out = _out(settings)
    header = artifact_header(settings, "ingest")

    write_event_log(log, out / "events.jsonl", header=header)
    rejects = list(log.rejects) + dangling
    write_jsonl([r.to_record() for r in rejects], out / "rejects.jsonl", header)
    report = {
        "events": len(log),
        "users": len(log.users()),
        "start": log.start.isoformat(),
        "end": log.end.isoformat(),
        "rejects": len(log.rejects),
        "dangling_parents": len(dangling),
        "reasons": dict(sorted(Counter(r.reason for r in rejects).items())),
    }
    write_json(report, out / "report.json", header)
    logger.info("Ingested %d events, %d rejects", len(log), len(log.rejects))
    return 0


def cmd_influence(settings: Settings, args) -> int:
    log = _load_log(_require(settings.paths.input_log, "event log"))
    if args.train_end:
        log, _ = log.split(pd.Timestamp(args.train_end, tz="UTC").to_pydatetime())
    te = settings.influence
    network = build_influence_network(
        bucket_series(log),
        k=te.k,
        prune_threshold=te.threshold,
        permutations=te.permutations,
        seed=settings.seed,
        jobs=settings.jobs,
        window=(log.start, log.end),
    )
    out = _out(settings)
    header = artifact_header(settings, "influence")
    network.to_jsonl(out / "network.jsonl", header=header)
    write_csv(network.summary_frame(), out / "network_summary.csv", header)
    logger.info("Influence network: %d users, %d edges", len(network.users), len(network))
    return 0


def cmd_simulate(settings: Settings, args) -> int:
    network = _load_network(settings)
    result = run_simulation(network, _sim_config(settings), _seeds(settings, network))
    out = _out(settings)
    header = artifact_header(settings, "simulate")

    write_event_log(result.log, out / "simulated.jsonl", header=header)
    write_csv(result.traces, out / "traces.csv", header)
    write_jsonl(json.loads(result.ledger.to_frame().to_json(orient="records")), out / "ledger.jsonl", header)
    resp = responsiveness(result.ledger, agents=network.users).reset_index()
    write_csv(resp, out / "responsiveness.csv", header)
    dist, summary = capacity_distribution(result.traces)
    write_json({"capacity": summary, "distribution": dist.to_record()}, out / "capacity.json", header)
    logger.info("Simulated %d events over %d steps", len(result.log), settings.simulation.horizon)
    return 0


def cmd_sweep(settings: Settings, args) -> int:
    network = _load_network(settings)
    grid = _grid(settings)
    runs = factorial_sweep(
        network, grid, _sim_config(settings), _seeds(settings, network),
        workers=settings.jobs, progress=args.progress,
    )
    out = _out(settings)
    header = artifact_header(settings, "sweep")
    write_csv(runs, out / "runs.csv", header)

    ok = runs[runs["error"].isna()]
    rows = []
    for metric in SWEEP_OUTPUTS:
        result = grid_sobol_indices(ok, metric, num_resamples=settings.sensitivity.num_resamples, seed=settings.seed)
        rows.extend(result.to_rows())
    write_csv(pd.DataFrame(rows), out / "indices.csv", header)

    write_csv(responsiveness_cells(ok), out / "cells.csv", header)

    if grid.repetitions >= 2:
        sliced = []
        for slice_param, other in (("alpha", "m_max"), ("m_max", "alpha")):
            curve = sliced_first_order(ok, slice_param=slice_param, other_param=other)
            curve.insert(0, "parameter", other)
            curve.insert(0, "slice_param", slice_param)
            sliced.append(curve)
        write_csv(pd.concat(sliced, ignore_index=True), out / "sliced.csv", header)
    else:
        logger.warning("Sliced indices need at least 2 repetitions per cell; skipped")

    failed = runs[runs["error"].notna()][["m_max", "alpha", "rep", "error"]]
    write_json({"runs": len(runs), "failed_runs": failed.to_dict(orient="records")}, out / "summary.json", header)
    return 0


def cmd_calibrate(settings: Settings, args) -> int:
    truth = _load_log(_require(settings.paths.truth, "ground truth log"))
    network = None if args.identity else _load_network(settings)
    seeds = None if network is None else _seeds(settings, network)
    config = _sim_config(settings, start=truth.start, horizon=truth.n_buckets)
    cells = grid_sweep(
        network, _grid(settings), truth, config, seeds,
        binning=settings.binning, workers=settings.jobs, identity=args.identity, progress=args.progress,
    )
    out = _out(settings)
    header = artifact_header(settings, "calibrate")
    write_csv(sweep_frame(cells), out / "sweep.csv", header)
    write_csv(cell_frame(cells), out / "cells.csv", header)
    summary = sweep_summary(cells)
    write_json(summary, out / "summary.json", header)
    if summary["best"] is not None:
        logger.info("Best cell: M_max=%s alpha=%s", summary["best"]["m_max"], summary["best"]["alpha"])
    return 0


def cmd_measure(settings: Settings, args) -> int:
    truth_log = _load_log(_require(settings.paths.truth, "ground truth log"))
    simulated_log = _load_log(_require(Path(args.simulated), "simulated log")) if args.simulated else truth_log
    truth, simulated = cascade_table(truth_log), cascade_table(simulated_log)
    if truth.empty or simulated.empty:
        raise ValueError("both logs need at least one cascade")

    rows = []
    for metric in METRICS:
        p, q = paired_distributions(truth[metric], simulated[metric], metric, settings.binning)
        rows.append({
            "metric": metric,
            "jsd": js_divergence(p, q),
            "truth_mean": float(truth[metric].mean()),
            "simulated_mean": float(simulated[metric].mean()),
        })
    out = _out(settings)
    header = artifact_header(settings, "measure")
    write_csv(pd.DataFrame(rows), out / "jsd.csv", header)
    write_csv(simulated, out / "cascades.csv", header)

    if args.run_dir:
        run_dir = Path(args.run_dir)
        _, traces = read_csv_artifact(_require(run_dir / "traces.csv", "traces"), dtype={"agent": str})
        _, ledger = read_jsonl_artifact(_require(run_dir / "ledger.jsonl", "ledger"), columns=LEDGER_COLUMNS)
        ledger["delivered_at"] = ledger["delivered_at"].astype("int64")
        for name in ("responded_at", "dropped_at"):
            ledger[name] = ledger[name].astype("Int64")
        ledger["responded"] = ledger["responded"].astype(bool)
        write_csv(overload_exposure_analysis(traces, ledger, simulated_log, simulated),
                  out / "overload_exposure.csv", header)
        write_csv(neighborhood_presence(ledger, simulated), out / "neighborhood_presence.csv", header)
        write_csv(neighbor_popularity(ledger, simulated), out / "neighbor_popularity.csv", header)
        write_csv(exposure_response_curve(exposure_frame(ledger)), out / "exposure_response.csv", header)
        dist, summary = capacity_distribution(traces)
        write_json({"capacity": summary, "distribution": dist.to_record()}, out / "capacity.json", header)
    return 0


def cmd_sensitivity(settings: Settings, args) -> int:
    space = ParameterSpace()
    n_base = settings.sensitivity.n_base
    out = _out(settings)
    header = artifact_header(settings, "sensitivity")

    if args.dry_run:
        design = saltelli_sample(space, n_base, seed=settings.seed)
        write_csv(design.to_frame(), out / "design.csv", header)
        return 0

    network = _load_network(settings)
    design, outputs, results = run_sensitivity(
        network, _sim_config(settings), _seeds(settings, network), space=space, n_base=n_base,
        seed=settings.seed, workers=settings.jobs,
        num_resamples=settings.sensitivity.num_resamples, progress=args.progress,
    )
    write_csv(design.to_frame(), out / "design.csv", header)
    write_csv(outputs, out / "outputs.csv", header)
    rows = [row for result in results for row in result.to_rows()]
    write_csv(pd.DataFrame(rows), out / "indices.csv", header)
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "influence": cmd_influence,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
    "measure": cmd_measure,
    "sensitivity": cmd_sensitivity,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML settings file")
    common.add_argument("--seed", type=int, help="Master seed (fallback: OVERLOADSIM_SEED)")
    common.add_argument("--jobs", type=int, help="Worker processes")
    common.add_argument("--output-dir", type=Path)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--network", type=Path, help="Influence network (JSON lines)")
    sim.add_argument("--seeds-log", type=Path, help="Training log for background initiation rates")
    sim.add_argument("--horizon", type=int)
    sim.add_argument("--m-max", type=int)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--background-rate", type=float)
    sim.add_argument("--progress", action="store_true", help="Show a progress bar")

    parser = argparse.ArgumentParser(prog="overloadsim", description="Information overload conversation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="Validate an event log")
    p.add_argument("--input", type=Path)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")

    p = sub.add_parser("influence", parents=[common], help="Estimate the influence network")
    p.add_argument("--log", type=Path)
    p.add_argument("--k", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--permutations", type=int)
    p.add_argument("--train-end", help="Use only events before this time")

    sub.add_parser("simulate", parents=[common, sim], help="Run one simulation")
    sub.add_parser("sweep", parents=[common, sim], help="Factorial (M_max, alpha) sweep with grid Sobol indices")

    p = sub.add_parser("calibrate", parents=[common, sim], help="Grid calibration against a ground truth log")
    p.add_argument("--truth", type=Path)
    p.add_argument("--identity", action="store_true", help="Compare the ground truth with itself")

    p = sub.add_parser("measure", parents=[common], help="Cascade metrics and JS divergence")
    p.add_argument("--truth", type=Path)
    p.add_argument("--simulated", type=Path)
    p.add_argument("--run-dir", type=Path, help="Directory with traces.csv and ledger.jsonl from simulate")

    p = sub.add_parser("sensitivity", parents=[common, sim], help="Saltelli design Sobol analysis")
    p.add_argument("--n-base", type=int)
    p.add_argument("--dry-run", action="store_true", help="Only write the design")

    for name in ("measure", "ingest", "influence"):
        sub.choices[name].set_defaults(progress=False)
    return parser


def _overrides(args) -> dict:
    """Flag values that were given, shaped like Settings."""
    given = {k: v for k, v in vars(args).items() if v is not None}
    overrides: dict = {}

    def put(section: Optional[str], key: str, flag: str):
        if flag in given:
            target = overrides if section is None else overrides.setdefault(section, {})
            target[key] = given[flag]

    put(None, "seed", "seed")
    put(None, "jobs", "jobs")
    put("paths", "output_dir", "output_dir")
    put("paths", "input_log", "input")
    put("paths", "input_log", "log")
    put("paths", "network", "network")
    put("paths", "truth", "truth")
    put("paths", "seeds_log", "seeds_log")
    put("simulation", "horizon", "horizon")
    put("simulation", "m_max", "m_max")
    put("simulation", "alpha", "alpha")
    put("simulation", "background_rate", "background_rate")
    put("influence", "k", "k")
    put("influence", "threshold", "threshold")
    put("influence", "permutations", "permutations")
    put("sensitivity", "n_base", "n_base")
    overrides["verbosity"] = -1 if args.quiet else args.verbose
    return overrides


def _configure_logging(verbosity: int):
    level = {-1: logging.ERROR, 0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def main(argv: Optional[list[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config, _overrides(args))
        _configure_logging(settings.verbosity)
        return COMMANDS[args.command](settings, args)
    except (FileNotFoundError, ValueError) as e:
        print(f"overloadsim {args.command}: error: {e}", file=sys.stderr)
        return 2


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
