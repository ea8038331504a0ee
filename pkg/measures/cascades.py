"""
Cascade Measurement

Rebuilds conversations as rooted trees and computes:
- volume (events including the initiation)
- virality (mean pairwise distance, i.e. the Wiener index over node pairs)
- unique participants
plus binned distributions, JS divergence, and the overload analyses over
simulation traces and response ledgers.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import networkx as nx
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy.special import rel_entr

from sources.events import EventLog

logger = logging.getLogger(__name__)

METRICS = ("volume", "virality", "unique_users")
DEFAULT_LOAD_EDGES = (0, 10, 20, 30, 40, 50, math.inf)


@dataclass(frozen=True, eq=False)
class CascadeTree:
    """A conversation as a tree of events (edges point parent -> child)"""

    root_id: str
    root: str
    graph: nx.DiGraph
    depth: dict[str, int]

    @property
    def users(self) -> set[str]:
        return {data["user"] for _, data in self.graph.nodes(data=True)}


@dataclass(frozen=True)
class CascadeMetrics:
    root_id: str
    volume: int
    virality: float
    unique_users: int


def _tree(root_id: str, events: list) -> CascadeTree:
    ids = {e.node_id for e in events}
    # Missing root event: the earliest event stands in as root
    root = root_id if root_id in ids else events[0].node_id

    graph = nx.DiGraph()
    for event in events:
        graph.add_node(event.node_id, user=event.user_id, action=event.action.value)
    for event in events:
        if event.node_id == root:
            continue
        parent = event.parent_id
        if parent not in ids or parent == event.node_id:
            parent = root  # dangling reference
        graph.add_edge(parent, event.node_id)

    # Parent cycles in malformed logs: re-hang unreachable nodes under the root
    reachable = nx.descendants(graph, root) | {root}
    while len(reachable) < graph.number_of_nodes():
        orphan = min(set(graph.nodes) - reachable)
        graph.remove_edges_from(list(graph.in_edges(orphan)))
        graph.add_edge(root, orphan)
        reachable = nx.descendants(graph, root) | {root}

    depth = nx.single_source_shortest_path_length(graph, root)
    return CascadeTree(root_id=root_id, root=root, graph=graph, depth=dict(depth))


def build_cascades(log: EventLog) -> list[CascadeTree]:
    """
    One tree per root_id; replies to unknown parents hang off the root.

    Returns:
        Trees sorted by root_id; their node counts sum to len(log)
    """
    groups: dict[str, list] = {}
    for event in log.events:
        groups.setdefault(event.root_id, []).append(event)
    return [_tree(root_id, groups[root_id]) for root_id in sorted(groups)]


def volume(tree: CascadeTree) -> int:
    return tree.graph.number_of_nodes()


def wiener_sum(tree: CascadeTree) -> int:
    """Classical Wiener index: sum of distances over unordered node pairs."""
    n = tree.graph.number_of_nodes()
    sizes: dict[str, int] = {}
    total = 0
    for node in nx.dfs_postorder_nodes(tree.graph, tree.root):
        sizes[node] = 1 + sum(sizes[child] for child in tree.graph.successors(node))
        if node != tree.root:
            # every path across this edge: subtree side x rest
            total += sizes[node] * (n - sizes[node])
    return total


def wiener_index(tree: CascadeTree) -> float:
    """
    Structural virality: mean shortest-path distance over node pairs.

    Equals wiener_sum / (n (n - 1) / 2); 0 for single-node trees.
    """
    n = tree.graph.number_of_nodes()
    if n < 2:
        return 0.0
    return wiener_sum(tree) / (n * (n - 1) / 2)


def unique_participants(tree: CascadeTree) -> int:
    return len(tree.users)


def measure(tree: CascadeTree) -> CascadeMetrics:
    return CascadeMetrics(
        root_id=tree.root_id,
        volume=volume(tree),
        virality=wiener_index(tree),
        unique_users=unique_participants(tree),
    )


def measure_cascades(trees: Iterable[CascadeTree]) -> pd.DataFrame:
    """Metric table, one row per cascade."""
    rows = []
    for tree in trees:
        rows.append({
            "root_id": tree.root_id,
            "volume": volume(tree),
            "virality": wiener_index(tree),
            "unique_users": unique_participants(tree),
            "wiener_sum": wiener_sum(tree),
            "depth": max(tree.depth.values()),
        })
    return pd.DataFrame(rows, columns=["root_id", "volume", "virality", "unique_users", "wiener_sum", "depth"])


def cascade_table(log: EventLog) -> pd.DataFrame:
    return measure_cascades(build_cascades(log))


@dataclass(frozen=True, eq=False)
class Distribution:
    """Histogram over shared bin edges"""

    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if len(self.counts) != len(self.edges) - 1:
            raise ValueError(f"{len(self.counts)} counts for {len(self.edges)} edges")

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    def to_record(self) -> dict:
        return {"edges": [float(e) for e in self.edges], "counts": [int(c) for c in self.counts]}


def log2_bin_edges(max_value: float) -> np.ndarray:
    """Integer bins 1 | 2 | 3-4 | 5-8 | 9-16 ... covering max_value."""
    edges = [1, 2]
    while edges[-1] <= max_value:
        edges.append(2 * edges[-1] - 1)
    return np.asarray(edges, dtype=float)


def linear_bin_edges(values: Sequence[float], bins: int = 20) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    lo, hi = (float(values.min()), float(values.max())) if values.size else (0.0, 1.0)
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def histogram(values: Sequence[float], edges: np.ndarray) -> Distribution:
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=edges)
    return Distribution(edges=np.asarray(edges, dtype=float), counts=counts)


class BinningSpec(BaseModel):
    """How each metric is binned before comparing distributions"""

    volume: Literal["log2", "linear"] = "log2"
    virality: Literal["log2", "linear"] = "linear"
    unique_users: Literal["log2", "linear"] = "log2"
    linear_bins: int = Field(20, ge=1)

    def edges(self, metric: str, pooled: Sequence[float]) -> np.ndarray:
        pooled = np.asarray(pooled, dtype=float)
        if getattr(self, metric) == "log2":
            return log2_bin_edges(pooled.max() if pooled.size else 1.0)
        return linear_bin_edges(pooled, self.linear_bins)


def paired_distributions(
    truth: Sequence[float], simulated: Sequence[float], metric: str, binning: BinningSpec
) -> tuple[Distribution, Distribution]:
    """Histograms of two samples over edges fitted to their pooled range."""
    edges = binning.edges(metric, np.concatenate([np.asarray(truth, float), np.asarray(simulated, float)]))
    return histogram(truth, edges), histogram(simulated, edges)


def js_divergence(p: Distribution, q: Distribution) -> float:
    """
    Jensen-Shannon divergence (base 2) of two histograms on identical edges.

    Zero-count bins need no smoothing (0 log 0 = 0). Result is in [0, 1].
    """
    if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
        raise ValueError("distributions must share identical bin edges")
    if p.size == 0 or q.size == 0:
        raise ValueError("distributions must be nonempty")
    pp = p.counts / p.counts.sum()
    qq = q.counts / q.counts.sum()
    mid = (pp + qq) / 2
    value = 0.5 * (rel_entr(pp, mid).sum() + rel_entr(qq, mid).sum()) / math.log(2)
    return float(min(max(value, 0.0), 1.0))


def _load_buckets(load: pd.Series, edges: Sequence[float]) -> pd.Series:
    return pd.cut(load, bins=list(edges), right=True, include_lowest=True)


def overload_exposure_analysis(
    traces: pd.DataFrame,
    ledger: pd.DataFrame,
    log: EventLog,
    cascades: pd.DataFrame,
    load_edges: Sequence[float] = DEFAULT_LOAD_EDGES,
) -> pd.DataFrame:
    """
    Cascades agents receive vs cascades they post to, by incoming load.

    Agent-steps are bucketed by load = |A_{t-1}| + |R_{t-1}|. Incoming samples are
    messages delivered at that step; outgoing samples are events the agent
    emitted at that step. Each sample carries its cascade's global metrics.

    Returns:
        One row per load bucket: agent_steps, incoming_messages, outgoing_events,
        and mean incoming_/outgoing_ volume, virality and unique_users
    """
    columns = ["load_bucket", "load_lo", "load_hi", "agent_steps", "incoming_messages", "outgoing_events"]
    columns += [f"{side}_{m}" for side in ("incoming", "outgoing") for m in METRICS]
    if ledger.empty or traces.empty:
        return pd.DataFrame(columns=columns)

    steps = traces[["t", "agent", "load"]].copy()
    steps["load_bucket"] = _load_buckets(steps["load"], load_edges)
    metrics = cascades.set_index("root_id")[list(METRICS)]

    incoming = ledger[["recipient", "delivered_at", "conversation_id"]].rename(
        columns={"recipient": "agent", "delivered_at": "t"}
    )
    incoming = incoming.merge(steps, on=["agent", "t"], how="inner")
    incoming = incoming.join(metrics, on="conversation_id", how="inner")

    events = pd.DataFrame(
        [(e.user_id, log.bucket_of(e.timestamp), e.root_id) for e in log.events],
        columns=["agent", "t", "root_id"],
    )
    outgoing = events.merge(steps, on=["agent", "t"], how="inner")
    outgoing = outgoing.join(metrics, on="root_id", how="inner")

    rows = []
    for bucket, group in steps.groupby("load_bucket", observed=False):
        inc = incoming[incoming["load_bucket"] == bucket]
        out = outgoing[outgoing["load_bucket"] == bucket]
        row = {
            "load_bucket": str(bucket),
            "load_lo": bucket.left,
            "load_hi": bucket.right,
            "agent_steps": len(group),
            "incoming_messages": len(inc),
            "outgoing_events": len(out),
        }
        for m in METRICS:
            row[f"incoming_{m}"] = float(inc[m].mean()) if len(inc) else math.nan
            row[f"outgoing_{m}"] = float(out[m].mean()) if len(out) else math.nan
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def neighborhood_presence(ledger: pd.DataFrame, cascades: pd.DataFrame) -> pd.DataFrame:
    """
    Fraction of an agent's received messages that mention a conversation,
    averaged over agents, against that conversation's global volume.
    """
    if ledger.empty:
        return pd.DataFrame(columns=["volume", "mean_fraction", "pairs"])
    per_pair = ledger.groupby(["recipient", "conversation_id"]).size().rename("mentions").reset_index()
    per_agent = ledger.groupby("recipient").size().rename("received")
    per_pair = per_pair.join(per_agent, on="recipient")
    per_pair["fraction"] = per_pair["mentions"] / per_pair["received"]
    per_pair = per_pair.join(cascades.set_index("root_id")["volume"], on="conversation_id", how="inner")
    curve = per_pair.groupby("volume").agg(mean_fraction=("fraction", "mean"), pairs=("fraction", "size"))
    return curve.reset_index()


def neighbor_popularity(ledger: pd.DataFrame, cascades: pd.DataFrame) -> pd.DataFrame:
    """
    Fraction of an agent's influencing neighbours that mention a conversation,
    against the conversation's global participant count.
    """
    if ledger.empty:
        return pd.DataFrame(columns=["unique_users", "mean_fraction", "pairs"])
    senders = ledger.groupby("recipient")["sender"].nunique().rename("neighbors")
    per_pair = ledger.groupby(["recipient", "conversation_id"])["sender"].nunique().rename("mentioning").reset_index()
    per_pair = per_pair.join(senders, on="recipient")
    per_pair["fraction"] = per_pair["mentioning"] / per_pair["neighbors"]
    per_pair = per_pair.join(cascades.set_index("root_id")["unique_users"], on="conversation_id", how="inner")
    curve = per_pair.groupby("unique_users").agg(mean_fraction=("fraction", "mean"), pairs=("fraction", "size"))
    return curve.reset_index()


def exposure_response_curve(exposures: pd.DataFrame) -> pd.DataFrame:
    """
    P(response | n exposures to a conversation within one step).

    Args:
        exposures: ResponseLedger.exposure_frame() output

    Returns:
        Columns exposures, p_response, samples
    """
    if exposures.empty:
        return pd.DataFrame(columns=["exposures", "p_response", "samples"])
    curve = exposures.groupby("exposures").agg(
        p_response=("responded", "mean"), samples=("responded", "size")
    )
    curve["p_response"] = curve["p_response"].astype(float)
    return curve.reset_index()
