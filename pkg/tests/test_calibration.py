import math

import pandas as pd
import pytest

from agents.models import SimConfig
from measures.calibration import (
    CalibrationCell,
    GridSpec,
    capacity_distribution,
    cell_frame,
    grid_sweep,
    pareto_front,
    select_best,
    sweep_frame,
    sweep_summary,
)
from measures.cascades import METRICS
from sources.synthetic import poisson_event_log, simulate_ground_truth, star_network


def _cell(m_max, alpha, *scores):
    return CalibrationCell(m_max, alpha, jsd={m: [s] for m, s in zip(METRICS, scores)})


@pytest.fixture
def star():
    return star_network(n_spokes=5, q=0.5, horizon=10)


@pytest.fixture
def star_truth(star):
    network, seeds = star
    return simulate_ground_truth(network, seeds, m_max=10, alpha=0.5, horizon=10, seed=3)


def test_default_grid():
    grid = GridSpec()
    assert grid.m_max_values == [5, 10, 15, 20, 25, 30, 35]
    assert grid.alpha_values == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert len(grid.cells()) == 70
    jobs = grid.jobs()
    assert len(jobs) == 700
    assert len({job.seed for job in jobs}) == 700


@pytest.mark.parametrize("kwargs", [
    {"m_max_values": []},
    {"m_max_values": [5, 5]},
    {"m_max_values": [0, 5]},
    {"alpha_values": [0.5, 1.2]},
    {"repetitions": 0},
])
def test_invalid_grids(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


def test_grid_axes_are_sorted():
    assert GridSpec(m_max_values=[30, 5], alpha_values=[0.8, 0.1]).cells() == [(5, 0.1), (5, 0.8), (30, 0.1), (30, 0.8)]


def test_identity_sweep_scores_zero():
    truth = poisson_event_log(n_users=30, horizon=48, rate=0.2, seed=1)
    grid = GridSpec(m_max_values=[5, 30], alpha_values=[0.0, 0.8], repetitions=2)
    cells = grid_sweep(None, grid, truth, identity=True)
    assert [c.params for c in cells] == grid.cells()
    for cell in cells:
        assert not cell.failed
        assert cell.mean_jsd == 0.0
        assert all(len(v) == 2 for v in cell.jsd.values())
    assert select_best(cells).params == (5, 0.0)


def test_sweep_needs_network_unless_identity():
    truth = poisson_event_log(n_users=10, horizon=12, seed=2)
    with pytest.raises(ValueError):
        grid_sweep(None, GridSpec(repetitions=1), truth)


def test_select_best_single_cell():
    cell = _cell(15, 0.3, 0.1, 0.2, 0.3)
    assert select_best([cell]) is cell


def test_select_best_breaks_ties_by_parameters():
    cells = [_cell(30, 0.8, 0.2, 0.2, 0.2), _cell(20, 0.1, 0.2, 0.2, 0.2), _cell(20, 0.5, 0.2, 0.2, 0.2)]
    assert select_best(cells).params == (20, 0.1)


def test_mean_jsd_is_mean_of_metric_means():
    cell = CalibrationCell(10, 0.5, jsd={METRICS[0]: [0.1, 0.3], METRICS[1]: [0.4], METRICS[2]: [0.0, 0.6]})
    assert cell.mean_jsd == pytest.approx((0.2 + 0.4 + 0.3) / 3)


def test_pareto_front():
    a = _cell(10, 0.1, 0.1, 0.2, 0.3)
    dominated = _cell(5, 0.1, 0.2, 0.2, 0.3)
    tradeoff = _cell(30, 0.9, 0.3, 0.1, 0.3)
    twin = _cell(20, 0.5, 0.1, 0.2, 0.3)
    front = pareto_front([tradeoff, dominated, twin, a])
    assert [c.params for c in front] == [(10, 0.1), (20, 0.5), (30, 0.9)]
    assert select_best([tradeoff, dominated, twin, a]) in front


def test_failed_cells_are_skipped():
    ok = _cell(10, 0.1, 0.5, 0.5, 0.5)
    failed = CalibrationCell(5, 0.1, error="boom")
    assert select_best([failed, ok]) is ok
    assert pareto_front([failed, ok]) == [ok]
    record = failed.to_record()
    assert record["mean_jsd"] is None
    assert record["error"] == "boom"


def test_sweep_without_activity_marks_cells_failed(star, star_truth):
    network, _ = star
    grid = GridSpec(m_max_values=[5, 10], alpha_values=[0.5], repetitions=1)
    cells = grid_sweep(network, grid, star_truth, SimConfig(horizon=10), seeds=None)
    assert len(cells) == 2
    assert all(c.failed for c in cells)
    assert "no cascades" in cells[0].error
    with pytest.raises(ValueError):
        select_best(cells)
    summary = sweep_summary(cells)
    assert summary["best"] is None
    assert len(summary["failed_cells"]) == 2


def test_sweep_is_deterministic(star, star_truth):
    network, seeds = star
    grid = GridSpec(m_max_values=[5, 10], alpha_values=[0.0, 0.5], repetitions=2, base_seed=4)
    config = SimConfig(horizon=10)
    first = sweep_frame(grid_sweep(network, grid, star_truth, config, seeds))
    second = sweep_frame(grid_sweep(network, grid, star_truth, config, seeds))
    pd.testing.assert_frame_equal(first, second)
    assert list(first.columns) == ["m_max", "alpha", "rep", "metric", "jsd"]
    assert len(first) == 4 * 2 * len(METRICS)
    assert first["jsd"].between(0, 1).all()


@pytest.mark.slow
def test_sweep_independent_of_workers(star, star_truth):
    network, seeds = star
    grid = GridSpec(m_max_values=[5, 10], alpha_values=[0.0, 0.5], repetitions=2, base_seed=4)
    config = SimConfig(horizon=10)
    serial = sweep_frame(grid_sweep(network, grid, star_truth, config, seeds))
    parallel = sweep_frame(grid_sweep(network, grid, star_truth, config, seeds, workers=2))
    pd.testing.assert_frame_equal(serial, parallel)


def test_cell_frame_has_responsiveness_stats(star, star_truth):
    network, seeds = star
    grid = GridSpec(m_max_values=[10], alpha_values=[0.5], repetitions=3)
    frame = cell_frame(grid_sweep(network, grid, star_truth, SimConfig(horizon=10), seeds))
    assert len(frame) == 1
    row = frame.iloc[0]
    assert 0.0 <= row["responsiveness_mean"] <= 1.0
    assert row["responsiveness_var"] >= 0.0
    assert not math.isnan(row["mean_jsd"])


def test_cell_responsiveness_var_is_the_agent_spread():
    cell = _cell(10, 0.5, 0.1, 0.2, 0.3)
    cell.outputs = [
        {"responsiveness": 0.5, "responsiveness_var": 0.1},
        {"responsiveness": 0.7, "responsiveness_var": 0.3},
    ]
    row = cell_frame([cell]).iloc[0]
    assert row["responsiveness_mean"] == pytest.approx(0.6)
    assert row["responsiveness_var"] == pytest.approx(0.2)


@pytest.mark.parametrize("value", [30, 0])
def test_capacity_point_mass(value):
    dist, summary = capacity_distribution(pd.DataFrame({"capacity": [value] * 4}))
    assert summary == {"max": value, "mode": value, "mean": float(value)}
    assert dist.counts[value] == 4
    assert dist.counts.sum() == 4
    assert len(dist.edges) == value + 2


def test_capacity_distribution_needs_traces():
    with pytest.raises(ValueError):
        capacity_distribution(pd.DataFrame({"capacity": []}))


@pytest.mark.slow
def test_sweep_recovers_the_generating_cell(listening_hub):
    network, seeds = listening_hub
    grid_values = {"m_max_values": [20, 25, 30, 35], "alpha_values": [0.6, 0.7, 0.8, 0.9], "repetitions": 2}
    recovered = 0
    for trial in range(10):
        truth = simulate_ground_truth(network, seeds, m_max=30, alpha=0.8, horizon=24, seed=100 + trial)
        grid = GridSpec(**grid_values, base_seed=trial)
        cells = grid_sweep(network, grid, truth, SimConfig(horizon=24), seeds)
        best = select_best(cells)
        recovered += best.params == (30, 0.8)
    assert recovered >= 8
