"""
Multi-Action Cascade Model Engine

Runs overload-limited agents over an influence network in synchronous hourly
steps. Each step, every agent:
1. Updates its actionable information queue from last step's inbox
2. Tries every queued message once (oldest first) with probability
   max_X q(sender -> agent, message action -> X), X in {Contribute, Share}
3. Responds with an action drawn in proportion to those q values, consuming
   the message and notifying its out-neighbours for the next step
4. Starts spontaneous conversations (Poisson background rate)

Deliveries are buffered to the next step and every agent draws from its own
random stream, so results do not depend on agent processing order.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from sources.events import ACTIONS, ActionType, Event, EventLog
from sources.influence import InfluenceNetwork

from .models import TRACE_COLUMNS, AgentState, Message, SeedActivity, SimConfig, TraceRecord
from .overload import advance_queue, initial_queue
from .seeding import agent_rng

logger = logging.getLogger(__name__)

LEDGER_COLUMNS = [
    "delivery_id", "recipient", "sender", "conversation_id", "message_action",
    "source_event", "delivered_at", "responded", "response_event", "responded_at", "dropped_at",
]

RESPONSE_MASK = np.array([action is not ActionType.INITIATE for action in ACTIONS])


class ResponseLedger:
    """
    One row per delivered message: who got it, when, and what became of it.

    A message is delivered at the step whose inbox it lands in; it is then
    either responded to, dropped by eviction, or still queued at the end.
    """

    def __init__(self):
        self._cols: dict[str, list] = {name: [] for name in LEDGER_COLUMNS}

    def __len__(self) -> int:
        return len(self._cols["delivery_id"])

    def record_delivery(self, recipient: str, message: Message, delivered_at: int) -> int:
        delivery_id = len(self)
        cols = self._cols
        cols["delivery_id"].append(delivery_id)
        cols["recipient"].append(recipient)
        cols["sender"].append(message.sender)
        cols["conversation_id"].append(message.conversation_id)
        cols["message_action"].append(message.action.value)
        cols["source_event"].append(message.event_node_id)
        cols["delivered_at"].append(delivered_at)
        cols["responded"].append(False)
        cols["response_event"].append(None)
        cols["responded_at"].append(None)
        cols["dropped_at"].append(None)
        return delivery_id

    def mark_response(self, delivery_id: int, event_id: str, t: int):
        self._cols["responded"][delivery_id] = True
        self._cols["response_event"][delivery_id] = event_id
        self._cols["responded_at"][delivery_id] = t

    def mark_dropped(self, messages, t: int):
        for message in messages:
            self._cols["dropped_at"][message.delivery_id] = t

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self._cols, columns=LEDGER_COLUMNS)
        for name in ("responded_at", "dropped_at"):
            frame[name] = frame[name].astype("Int64")
        return frame

    def exposure_frame(self) -> pd.DataFrame:
        """Exposures per (agent, conversation, step) and whether any was answered."""
        return exposure_frame(self.to_frame())


def exposure_frame(ledger: pd.DataFrame) -> pd.DataFrame:
    """Group ledger rows by (recipient, conversation, delivered_at)."""
    if ledger.empty:
        return pd.DataFrame(columns=["recipient", "conversation_id", "delivered_at", "exposures", "responded"])
    grouped = ledger.groupby(["recipient", "conversation_id", "delivered_at"], sort=True)
    return grouped.agg(exposures=("delivery_id", "size"), responded=("responded", "any")).reset_index()


@dataclass
class WorldState:
    """Everything a step reads and writes"""

    config: SimConfig
    order: tuple[str, ...]
    agents: dict[str, AgentState]
    responses: dict[str, dict[tuple[str, ActionType], tuple[float, np.ndarray]]]
    neighbors: dict[str, tuple[str, ...]]
    scheduled: dict[int, list[str]] = field(default_factory=dict)
    ledger: ResponseLedger = field(default_factory=ResponseLedger)
    traces: list[TraceRecord] = field(default_factory=list)


@dataclass
class SimulationResult:
    log: EventLog
    traces: pd.DataFrame
    ledger: ResponseLedger


def build_world(network: InfluenceNetwork, config: SimConfig, seeds: Optional[SeedActivity] = None) -> WorldState:
    """Initial agent states at full capacity with empty queues."""
    seeds = seeds or SeedActivity()
    users = set(network.users) | set(seeds.background_rates)
    users |= {user for _, user in seeds.scheduled_initiations}
    if not users:
        raise ValueError("network has no users")
    order = tuple(sorted(users))

    agents = {}
    for user in order:
        params = config.params_for(user)
        agents[user] = AgentState(
            user_id=user,
            params=params,
            queue=initial_queue(params),
            rng=agent_rng(config.seed, user),
            background_init_rate=seeds.background_rates.get(user, 0.0),
        )

    # Responses join the message's conversation, so only Contribute and Share
    # q values can trigger them
    responses = {user: {} for user in order}
    for user, rows in network.response_table().items():
        for key, q_values in rows.items():
            q_values = np.where(RESPONSE_MASK, q_values, 0.0)
            trigger = float(q_values.max())
            if trigger > 0:
                responses[user][key] = (trigger, q_values)

    neighbors = {user: () for user in order}
    neighbors.update(network.out_neighbors())

    scheduled: dict[int, list[str]] = {}
    for t, user in sorted(seeds.scheduled_initiations):
        scheduled.setdefault(t, []).append(user)

    return WorldState(
        config=config, order=order, agents=agents, responses=responses,
        neighbors=neighbors, scheduled=scheduled,
    )


def _choose_action(q_values: np.ndarray, mode: str, rng: np.random.Generator) -> ActionType:
    nonzero = np.flatnonzero(q_values > 0)
    if len(nonzero) == 1 or mode == "max":
        return ACTIONS[int(np.argmax(q_values))]
    return ACTIONS[int(rng.choice(len(ACTIONS), p=q_values / q_values.sum()))]


def step(world: WorldState, t: int) -> tuple[WorldState, list[Event]]:
    """
    Advance every agent by one timestep.

    The world is updated in place and returned with the events emitted at t.
    Messages whose trial fails stay queued for later steps.
    """
    config = world.config
    timestamp = config.start + t * config.resolution
    deliveries: dict[str, list[Message]] = {user: [] for user in world.order}
    emitted: list[Event] = []
    scheduled = world.scheduled.get(t, [])

    for user in world.order:
        agent = world.agents[user]
        counter = 0

        def emit(action: ActionType, parent: Optional[Message]) -> Event:
            nonlocal counter
            node_id = f"{user}:{t}:{counter}"
            counter += 1
            if parent is None:
                parent_id = root_id = node_id
            else:
                parent_id, root_id = parent.event_node_id, parent.conversation_id
            event = Event(
                user_id=user, node_id=node_id, parent_id=parent_id,
                root_id=root_id, action=action, timestamp=timestamp,
            )
            emitted.append(event)
            if t + 1 < config.horizon:
                for neighbor in world.neighbors[user]:
                    message = Message(user, action, root_id, node_id, t)
                    delivery_id = world.ledger.record_delivery(neighbor, message, t + 1)
                    deliveries[neighbor].append(replace(message, delivery_id=delivery_id))
            return event

        received = agent.inbox
        load = len(agent.queue.queue) + len(received)
        queue, dropped = advance_queue(agent.queue, received, agent.params)
        world.ledger.mark_dropped(dropped, t)

        kept = []
        responded = 0
        table = world.responses[user]
        for message in queue.queue:
            row = table.get((message.sender, message.action))
            if row is None:
                kept.append(message)
                continue
            trigger, q_values = row
            if agent.rng.random() < trigger:
                action = _choose_action(q_values, config.response_selection, agent.rng)
                event = emit(action, message)
                world.ledger.mark_response(message.delivery_id, event.node_id, t)
                responded += 1
            else:
                kept.append(message)
        agent.queue = replace(queue, queue=tuple(kept))

        spontaneous = scheduled.count(user)
        if agent.background_init_rate > 0:
            spontaneous += int(agent.rng.poisson(agent.background_init_rate))
        for _ in range(spontaneous):
            emit(ActionType.INITIATE, None)

        world.traces.append(
            TraceRecord(
                t=t, agent=user, received=len(received), queued=len(kept),
                capacity=queue.capacity, overload=queue.last_overload,
                dropped=len(dropped), responded=responded, load=load,
            )
        )

    for user in world.order:
        world.agents[user].inbox = deliveries[user]
    return world, emitted


def run_simulation(
    network: InfluenceNetwork, config: SimConfig, seeds: Optional[SeedActivity] = None
) -> SimulationResult:
    """
    Simulate `config.horizon` steps.

    Args:
        network: Influence network (q per dyad and action pair)
        config: Horizon, seed and overload parameters
        seeds: Background initiation rates and scheduled initiations

    Returns:
        SimulationResult with the emitted EventLog (canonical schema), per-agent
        per-step traces, and the response ledger

    Example:
        result = run_simulation(network, SimConfig(horizon=720, seed=7), seeds)
        result.traces.groupby("agent")["capacity"].min()
    """
    world = build_world(network, config, seeds)
    events: list[Event] = []
    for t in range(config.horizon):
        _, emitted = step(world, t)
        events.extend(emitted)

    if not events:
        logger.warning("Simulation produced no events over %d steps", config.horizon)

    end = config.start + config.horizon * config.resolution
    log = EventLog(tuple(events), config.start, end, config.resolution)
    traces = pd.DataFrame([
        (r.t, r.agent, r.received, r.queued, r.capacity, r.overload, r.dropped, r.responded, r.load)
        for r in world.traces
    ], columns=TRACE_COLUMNS)
    return SimulationResult(log=log, traces=traces, ledger=world.ledger)


def responsiveness(ledger: ResponseLedger, agents=None) -> pd.Series:
    """
    Responded / delivered messages per agent.

    Agents listed in `agents` with no deliveries get NaN (undefined, not 0).
    """
    frame = ledger.to_frame()
    if frame.empty:
        result = pd.Series(dtype=float, name="responsiveness")
    else:
        result = frame.groupby("recipient")["responded"].mean().astype(float).rename("responsiveness")
    if agents is not None:
        result = result.reindex(sorted(agents))
    result.index.name = "agent"
    return result


def estimate_background_rates(log: EventLog) -> dict[str, float]:
    """Empirical Initiate events per step for each user of a training log."""
    counts: dict[str, int] = {}
    for event in log.events:
        if event.is_initiation:
            counts[event.user_id] = counts.get(event.user_id, 0) + 1
    return {user: n / log.n_buckets for user, n in sorted(counts.items())}
