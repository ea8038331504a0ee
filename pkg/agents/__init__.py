"""Overload-Limited Conversation Agents

Agents hold an actionable information queue bounded by a shrinking capacity
and respond to queued notifications with the influence network's probabilities.

Architecture:
    Influence network (sources.influence)
        │
        ▼
    run_simulation (engine)
        │── advance_queue (overload quantity, capacity loss, FIFO eviction)
        │── Bernoulli trial per queued message, action choice by q
        └── Poisson background initiations
        │
        ▼
    EventLog + traces + ResponseLedger

Usage:
    from agents import SimConfig, run_simulation
    result = run_simulation(network, SimConfig(horizon=720, seed=1), seeds)
"""

from .engine import ResponseLedger, SimulationResult, estimate_background_rates, responsiveness, run_simulation, step
from .models import Message, OverloadParams, QueueState, SeedActivity, SimConfig

__all__ = [
    "Message",
    "OverloadParams",
    "QueueState",
    "ResponseLedger",
    "SeedActivity",
    "SimConfig",
    "SimulationResult",
    "estimate_background_rates",
    "responsiveness",
    "run_simulation",
    "step",
]
