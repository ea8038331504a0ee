"""
Synthetic Data Generators

Stand-ins for platform data:
- Poisson event logs with reply/share structure
- Copy-channel and independent binary activity series (transfer entropy oracles)
- Random directed influence networks and the hub/spoke star network
- Ground truth produced by the simulator itself at known (M_max, alpha)
"""

import logging
from datetime import datetime, timedelta, timezone
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from agents.engine import run_simulation
from agents.models import SeedActivity, SimConfig

from .config import DEFAULT_RESOLUTION
from .events import ACTIONS, ActionType, Event, EventLog
from .influence import InfluenceEdge, InfluenceNetwork

logger = logging.getLogger(__name__)

DEFAULT_START = datetime(2018, 6, 1, tzinfo=timezone.utc)


def user_ids(n: int, prefix: str = "u") -> list[str]:
    width = max(3, len(str(n - 1)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def poisson_event_log(
    n_users: int = 20,
    horizon: int = 48,
    rate: float = 0.2,
    respond_prob: float = 0.5,
    seed: int = 0,
    start: datetime = DEFAULT_START,
    resolution: timedelta = DEFAULT_RESOLUTION,
) -> EventLog:
    """
    Random event log: each user posts Poisson(rate) events per step.

    An event answers a uniformly chosen event of an earlier step with
    probability `respond_prob` (as a Contribute or Share), otherwise it starts
    a new conversation.

    Example:
        log = poisson_event_log(n_users=50, horizon=100, seed=3)
        len(log), log.n_buckets
    """
    if n_users < 1 or horizon < 1:
        raise ValueError(f"need n_users >= 1 and horizon >= 1, got {n_users}, {horizon}")
    if rate < 0 or not 0 <= respond_prob <= 1:
        raise ValueError(f"invalid rate {rate} or respond_prob {respond_prob}")

    rng = np.random.default_rng(seed)
    users = user_ids(n_users)
    earlier: list[Event] = []
    events: list[Event] = []
    seconds = int(resolution.total_seconds())
    for t in range(horizon):
        current = []
        for user in users:
            for _ in range(int(rng.poisson(rate))):
                node_id = f"e{len(events) + len(current)}"
                timestamp = start + t * resolution + timedelta(seconds=int(rng.integers(0, seconds)))
                if earlier and rng.random() < respond_prob:
                    parent = earlier[int(rng.integers(0, len(earlier)))]
                    action = ActionType.CONTRIBUTE if rng.random() < 0.5 else ActionType.SHARE
                    parent_id, root_id = parent.node_id, parent.root_id
                else:
                    action = ActionType.INITIATE
                    parent_id = root_id = node_id
                current.append(Event(
                    user_id=user, node_id=node_id, parent_id=parent_id,
                    root_id=root_id, action=action, timestamp=timestamp,
                ))
        events.extend(current)
        earlier.extend(current)
    return EventLog.from_events(events, start, start + horizon * resolution, resolution)


def copy_channel_series(length: int, p: float = 0.5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(src, dst) with src i.i.d. Bernoulli(p) and dst[t+1] = src[t]."""
    rng = np.random.default_rng(seed)
    src = (rng.random(length) < p).astype(np.int8)
    dst = np.empty_like(src)
    dst[0] = int(rng.random() < p)
    dst[1:] = src[:-1]
    return src, dst


def independent_series(length: int, p: float = 0.5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return (rng.random(length) < p).astype(np.int8), (rng.random(length) < p).astype(np.int8)


def random_influence_network(
    n_users: int = 200,
    n_dyads: int = 1000,
    q_max: float = 0.3,
    action_density: float = 0.5,
    seed: int = 0,
) -> InfluenceNetwork:
    """
    Random directed network (G(n, m)) with random q on the action pairs of each dyad.

    Args:
        n_users: Number of users
        n_dyads: Number of directed user pairs with influence
        q_max: q values are uniform on (0, q_max]
        action_density: Chance each of the 9 action pairs of a dyad carries an edge
        seed: Random seed

    Returns:
        InfluenceNetwork where every user appears, connected or not
    """
    if not 0 < q_max <= 1:
        raise ValueError(f"q_max must be in (0, 1], got {q_max}")
    rng = np.random.default_rng(seed)
    users = user_ids(n_users)
    graph = nx.gnm_random_graph(n_users, n_dyads, seed=int(rng.integers(2**31)), directed=True)
    edges = []
    for i, j in sorted(graph.edges()):
        pairs = [(sa, da) for sa in ACTIONS for da in ACTIONS if rng.random() < action_density]
        if not pairs:
            pairs = [(ACTIONS[int(rng.integers(3))], ACTIONS[int(rng.integers(3))])]
        for sa, da in pairs:
            q = float(q_max * (1.0 - rng.random()))
            edges.append(InfluenceEdge(users[i], users[j], sa, da, q))
    return InfluenceNetwork.from_edges(edges, users=users)


def star_network(
    n_spokes: int = 60,
    q: float = 0.5,
    horizon: int = 1000,
    hub: str = "hub",
) -> tuple[InfluenceNetwork, SeedActivity]:
    """
    Hub with `n_spokes` spokes; each spoke starts one conversation per step.

    Spokes influence the hub and the hub influences every spoke, with
    probability `q` on every action pair. The hub therefore receives
    `n_spokes` messages per step.
    """
    spokes = user_ids(n_spokes, prefix="s")
    edges = []
    for spoke in spokes:
        for sa in ACTIONS:
            for da in (ActionType.CONTRIBUTE, ActionType.SHARE):
                edges.append(InfluenceEdge(spoke, hub, sa, da, q))
                edges.append(InfluenceEdge(hub, spoke, sa, da, q))
    network = InfluenceNetwork.from_edges(edges)
    seeds = SeedActivity(scheduled_initiations=[(t, s) for t in range(horizon) for s in spokes])
    return network, seeds


def hub_overload_network(
    n_spokes: int = 60,
    q: float = 0.5,
    follower_q: float = 0.5,
    hub_rate: float = 0.5,
    horizon: int = 1000,
    hub: str = "hub",
) -> tuple[InfluenceNetwork, SeedActivity]:
    """
    A listening hub that follows every spoke and every spoke's follower.

    Each spoke starts one conversation per step; its own follower answers
    spoke initiations with probability `follower_q`, and the hub answers
    anything from spokes and followers with probability `q`. The hub has no
    followers, so its own initiations (Poisson `hub_rate`) stay single-event
    conversations. The hub receives about 2 * n_spokes messages per step
    while spokes and followers stay lightly loaded.

    Example:
        network, seeds = hub_overload_network(n_spokes=60, horizon=100)
        run_simulation(network, SimConfig(horizon=100).with_params(30, 0.8), seeds)
    """
    if n_spokes < 1:
        raise ValueError(f"need at least one spoke, got {n_spokes}")
    spokes = user_ids(n_spokes, prefix="s")
    followers = user_ids(n_spokes, prefix="f")
    responses = (ActionType.CONTRIBUTE, ActionType.SHARE)
    edges = []
    for spoke, follower in zip(spokes, followers):
        for da in responses:
            edges.append(InfluenceEdge(spoke, follower, ActionType.INITIATE, da, follower_q))
            for sa in ACTIONS:
                edges.append(InfluenceEdge(spoke, hub, sa, da, q))
                edges.append(InfluenceEdge(follower, hub, sa, da, q))
    network = InfluenceNetwork.from_edges(edges)
    seeds = SeedActivity(
        background_rates={hub: hub_rate},
        scheduled_initiations=[(t, s) for t in range(horizon) for s in spokes],
    )
    return network, seeds


def background_seeds(users: Sequence[str], rate: float) -> SeedActivity:
    return SeedActivity(background_rates={u: rate for u in users})


def simulate_ground_truth(
    network: InfluenceNetwork,
    seeds: Optional[SeedActivity],
    m_max: int = 30,
    alpha: float = 0.8,
    horizon: int = 720,
    seed: int = 0,
) -> EventLog:
    """Event log the simulator produces at known parameters, for recovery experiments."""
    config = SimConfig(horizon=horizon, seed=seed).with_params(m_max, alpha)
    log = run_simulation(network, config, seeds).log
    logger.info("Ground truth at M_max=%d alpha=%.2f: %d events", m_max, alpha, len(log))
    return log
