from datetime import datetime, timedelta, timezone

import pytest

from agents.models import SeedActivity
from sources.events import ActionType, Event, EventLog
from sources.influence import InfluenceEdge, InfluenceNetwork
from sources.synthetic import hub_overload_network

START = datetime(2018, 6, 1, tzinfo=timezone.utc)
HOUR = timedelta(hours=1)

I, C, S = ActionType.INITIATE, ActionType.CONTRIBUTE, ActionType.SHARE


@pytest.fixture
def start():
    return START


@pytest.fixture
def make_event():
    """Event factory; root and parent default to the node itself."""

    def _make(user, node, parent=None, root=None, action=I, hour=0, minute=0):
        parent = parent or node
        root = root or (node if action is I else parent)
        return Event(
            user_id=user, node_id=node, parent_id=parent, root_id=root,
            action=action, timestamp=START + hour * HOUR + timedelta(minutes=minute),
        )

    return _make


@pytest.fixture
def make_log():
    def _make(events, hours=None):
        events = list(events)
        if hours is None:
            last = max(e.timestamp for e in events) if events else START
            hours = int((last - START) // HOUR) + 1
        return EventLog.from_events(events, START, START + hours * HOUR)

    return _make


@pytest.fixture
def conversation_log(make_event, make_log):
    """Two conversations: a root with two replies and a share, and a lone tweet."""
    return make_log([
        make_event("alice", "r1", hour=0),
        make_event("bob", "c1", parent="r1", root="r1", action=C, hour=1),
        make_event("carol", "c2", parent="r1", root="r1", action=C, hour=1, minute=30),
        make_event("bob", "s1", parent="c1", root="r1", action=S, hour=2),
        make_event("dave", "r2", hour=3),
    ])


@pytest.fixture
def pair_network():
    """a -> b with certain Initiate -> Contribute response"""
    return InfluenceNetwork.from_edges([InfluenceEdge("a", "b", I, C, 1.0)])


@pytest.fixture
def single_seed():
    return SeedActivity(scheduled_initiations=[(0, "a")])


@pytest.fixture
def listening_hub():
    """
    20 spokes, their followers and a hub, all answering with certainty.

    The hub gets 20 messages at t=1 and 40 per step after that, so its
    capacity path, and every cascade, is fixed by (M_max, alpha) alone.
    """
    return hub_overload_network(n_spokes=20, q=1.0, follower_q=1.0, hub_rate=0.0, horizon=24)
