"""Run the overload pipeline programmatically on synthetic data

Usage:
    python run.py

This script demonstrates the pipeline outside the overloadsim CLI:
synthetic ground truth -> influence network -> simulation -> calibration.
"""

import logging

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def main():
    """Recover (M_max, alpha) from ground truth simulated at known values."""
    from agents import SeedActivity, SimConfig, estimate_background_rates, responsiveness, run_simulation
    from measures.calibration import GridSpec, capacity_distribution, grid_sweep, pareto_front, select_best
    from sources.events import bucket_series
    from sources.influence import build_influence_network
    from sources.synthetic import background_seeds, random_influence_network, simulate_ground_truth

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    # Ground truth from a hidden network at known parameters
    hidden = random_influence_network(n_users=60, n_dyads=240, q_max=0.3, seed=1)
    seeds = background_seeds(hidden.users, rate=0.05)
    truth = simulate_ground_truth(hidden, seeds, m_max=30, alpha=0.8, horizon=240, seed=11)
    training, holdout = truth.split(truth.start + (truth.end - truth.start) / 2)

    print(f"Ground truth: {len(truth)} events, {len(truth.users())} users\n")
    print("=" * 60)

    # Influence network and seeds from the training half
    network = build_influence_network(bucket_series(training), k=1, prune_threshold=0.01)
    train_seeds = SeedActivity(background_rates=estimate_background_rates(training))
    print(f"Estimated network: {len(network.users)} users, {len(network)} edges")

    # One simulation of the holdout period
    config = SimConfig(horizon=holdout.n_buckets, start=holdout.start, seed=3)
    result = run_simulation(network, config, train_seeds)
    _, capacity = capacity_distribution(result.traces)
    print(f"Simulated {len(result.log)} events; capacity {capacity}")
    print(f"Mean responsiveness: {responsiveness(result.ledger).mean():.3f}\n")

    # Small calibration grid
    grid = GridSpec(m_max_values=[10, 20, 30], alpha_values=[0.2, 0.5, 0.8], repetitions=2, base_seed=5)
    cells = grid_sweep(network, grid, holdout, config, train_seeds, workers=1, progress=True)
    best = select_best(cells)
    print(f"Best cell: M_max={best.m_max} alpha={best.alpha} mean JSD={best.mean_jsd:.3f}")
    print("Pareto front:", [c.params for c in pareto_front(cells)])


if __name__ == "__main__":
    main()
