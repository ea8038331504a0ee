"""
Influence Network Estimation

Estimates the endogenous influence probability q for every directed dyad and
every (influencer action, influenced action) pair:

    q = TE(src -> dst) / H(dst)

on binarized hourly activity series, with a plug-in transfer entropy estimator.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy.stats import entropy as shannon_entropy

from .events import ACTIONS, ActionType, ActivitySeries

logger = logging.getLogger(__name__)

EdgeKey = tuple[str, str, ActionType, ActionType]


class InfluenceMetadata(BaseModel):
    """Estimation settings recorded with a network"""

    window_start: Optional[datetime] = None
    window_end: Optional[datetime] = None
    history: int = Field(1, ge=1)
    prune_threshold: float = Field(0.0, ge=0.0)
    allow_self_loops: bool = False
    permutations: int = Field(0, ge=0)


@dataclass(frozen=True)
class InfluenceEdge:
    src_user: str
    dst_user: str
    src_action: ActionType
    dst_action: ActionType
    q: float

    @property
    def key(self) -> EdgeKey:
        return (self.src_user, self.dst_user, self.src_action, self.dst_action)

    def to_record(self) -> dict:
        return {
            "src": self.src_user,
            "dst": self.dst_user,
            "src_action": self.src_action.value,
            "dst_action": self.dst_action.value,
            "q": self.q,
        }


def _edge_order(edge: InfluenceEdge):
    return (edge.src_user, edge.dst_user, ACTIONS.index(edge.src_action), ACTIONS.index(edge.dst_action))


@dataclass
class InfluenceNetwork:
    """Directed, action-typed network of conditional response probabilities"""

    users: tuple[str, ...]
    edges: dict[EdgeKey, InfluenceEdge] = field(default_factory=dict)
    metadata: InfluenceMetadata = field(default_factory=InfluenceMetadata)

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[InfluenceEdge],
        users: Optional[Iterable[str]] = None,
        metadata: Optional[InfluenceMetadata] = None,
    ) -> "InfluenceNetwork":
        metadata = metadata or InfluenceMetadata()
        table: dict[EdgeKey, InfluenceEdge] = {}
        members = set(users or ())
        for edge in edges:
            if not 0.0 <= edge.q <= 1.0:
                raise ValueError(f"q must be in [0, 1], got {edge.q} for {edge.key}")
            if edge.src_user == edge.dst_user and not metadata.allow_self_loops:
                raise ValueError(f"self-loop {edge.key} not enabled")
            if edge.key in table:
                raise ValueError(f"duplicate edge {edge.key}")
            table[edge.key] = edge
            members.update((edge.src_user, edge.dst_user))
        return cls(users=tuple(sorted(members)), edges=table, metadata=metadata)

    def __len__(self) -> int:
        return len(self.edges)

    def q(self, src: str, dst: str, src_action: ActionType, dst_action: ActionType) -> float:
        edge = self.edges.get((src, dst, src_action, dst_action))
        return edge.q if edge is not None else 0.0

    def sorted_edges(self) -> list[InfluenceEdge]:
        return sorted(self.edges.values(), key=_edge_order)

    def out_neighbors(self) -> dict[str, tuple[str, ...]]:
        """Users with at least one positive edge from each user."""
        neighbors: dict[str, set[str]] = {u: set() for u in self.users}
        for edge in self.edges.values():
            if edge.q > 0:
                neighbors[edge.src_user].add(edge.dst_user)
        return {u: tuple(sorted(v)) for u, v in neighbors.items()}

    def response_table(self) -> dict[str, dict[tuple[str, ActionType], np.ndarray]]:
        """
        Per recipient: (sender, message action) -> q over the three response actions.

        Rows with all-zero q are omitted.
        """
        table: dict[str, dict[tuple[str, ActionType], np.ndarray]] = {u: {} for u in self.users}
        for edge in self.edges.values():
            row = table[edge.dst_user].setdefault((edge.src_user, edge.src_action), np.zeros(len(ACTIONS)))
            row[ACTIONS.index(edge.dst_action)] = edge.q
        return table

    def summary_frame(self) -> pd.DataFrame:
        """One row per dyad with the largest q over action pairs."""
        rows: dict[tuple[str, str], float] = {}
        for edge in self.edges.values():
            dyad = (edge.src_user, edge.dst_user)
            rows[dyad] = max(rows.get(dyad, 0.0), edge.q)
        frame = pd.DataFrame(
            [{"src": s, "dst": d, "max_q": q} for (s, d), q in sorted(rows.items())],
            columns=["src", "dst", "max_q"],
        )
        return frame

    def to_jsonl(self, target: Union[str, Path], header: Optional[dict] = None):
        meta = {"metadata": json.loads(self.metadata.model_dump_json()), "users": list(self.users)}
        if header is not None:
            meta["header"] = header
        lines = [json.dumps(meta, sort_keys=True)]
        lines += [json.dumps(edge.to_record(), sort_keys=True) for edge in self.sorted_edges()]
        Path(target).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, source: Union[str, Path]) -> "InfluenceNetwork":
        lines = [line for line in Path(source).read_text(encoding="utf-8").splitlines() if line.strip()]
        if not lines:
            raise ValueError(f"Network file is empty: {source}")
        meta = json.loads(lines[0])
        if "metadata" not in meta:
            raise ValueError(f"Network file lacks a metadata record: {source}")
        edges = []
        for line in lines[1:]:
            record = json.loads(line)
            edges.append(
                InfluenceEdge(
                    src_user=record["src"],
                    dst_user=record["dst"],
                    src_action=ActionType(record["src_action"]),
                    dst_action=ActionType(record["dst_action"]),
                    q=float(record["q"]),
                )
            )
        return cls.from_edges(edges, users=meta.get("users", ()), metadata=InfluenceMetadata(**meta["metadata"]))


def binarize(counts: np.ndarray) -> np.ndarray:
    """Hourly presence: count > 0 -> 1."""
    return (np.asarray(counts) > 0).astype(np.int64)


def _entropy_of_codes(codes: np.ndarray) -> float:
    counts = np.bincount(codes)
    return float(shannon_entropy(counts[counts > 0], base=2))


def entropy(series: np.ndarray) -> float:
    """
    Plug-in Shannon entropy (bits) of a binarized series.

    Args:
        series: 0/1 vector of length >= 2

    Returns:
        Entropy of the empirical symbol distribution; 0 for constant series
    """
    values = np.asarray(series)
    if values.ndim != 1 or values.shape[0] < 2:
        raise ValueError(f"series must be 1-D with length >= 2, got shape {values.shape}")
    _, counts = np.unique(values, return_counts=True)
    return float(shannon_entropy(counts, base=2))


def _history_codes(dst: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(future, past-k code) aligned for t = k-1 .. n-2."""
    n = dst.shape[0]
    future = dst[k:]
    past = np.zeros(n - k, dtype=np.int64)
    for i in range(k):
        past = (past << 1) | dst[k - 1 - i : n - 1 - i]
    return future, past


def _transfer_entropy_codes(future: np.ndarray, past: np.ndarray, src_now: np.ndarray, k: int) -> float:
    # TE = H(Yf, Yp) + H(Yp, X) - H(Yp) - H(Yf, Yp, X)
    yp = past
    yf_yp = (past << 1) | future
    yp_x = (past << 1) | src_now
    yf_yp_x = (yf_yp << 1) | src_now
    te = (
        _entropy_of_codes(yf_yp)
        + _entropy_of_codes(yp_x)
        - _entropy_of_codes(yp)
        - _entropy_of_codes(yf_yp_x)
    )
    return max(te, 0.0)


def transfer_entropy(src: np.ndarray, dst: np.ndarray, k: int = 1) -> float:
    """
    Plug-in transfer entropy TE(src -> dst) in bits.

    Conditions the next destination symbol on its own last k symbols and the
    current source symbol; negative round-off is clamped to 0.

    Args:
        src: Binarized source series
        dst: Binarized destination series (same length >= k + 2)
        k: Destination history length

    Example:
        # dst copies src with a one-step lag -> about 1 bit
        transfer_entropy(src, np.roll(src, 1), k=1)
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if src.shape != dst.shape:
        raise ValueError(f"series length mismatch: {src.shape} vs {dst.shape}")
    if k < 1:
        raise ValueError(f"history length k must be >= 1, got {k}")
    if src.shape[0] < k + 2:
        raise ValueError(f"series length {src.shape[0]} too short for k={k}")
    future, past = _history_codes(dst, k)
    return _transfer_entropy_codes(future, past, src[k - 1 : -1], k)


def _influence_q(
    src: np.ndarray,
    future: np.ndarray,
    past: np.ndarray,
    h_dst: float,
    k: int,
    permutations: int,
    rng: Optional[np.random.Generator],
) -> float:
    src_now = src[k - 1 : -1]
    te = _transfer_entropy_codes(future, past, src_now, k)
    q = min(max(te / h_dst, 0.0), 1.0)
    if permutations and q > 0:
        null = [
            _transfer_entropy_codes(future, past, rng.permutation(src_now), k) / h_dst
            for _ in range(permutations)
        ]
        if q <= np.percentile(null, 95):
            return 0.0
    return q


def _edges_for_target(job: tuple) -> list[InfluenceEdge]:
    """All incoming edges of one destination user (picklable worker)."""
    dst_user, dst_series, sources, k, threshold, permutations, seed, allow_self = job
    rng = np.random.default_rng(seed) if permutations else None
    edges = []
    for dst_action, dst in dst_series:
        h_dst = entropy(dst)
        if h_dst == 0.0:
            continue
        future, past = _history_codes(dst, k)
        for src_user, src_action, src in sources:
            if src_user == dst_user and not allow_self:
                continue
            q = _influence_q(src, future, past, h_dst, k, permutations, rng)
            if q > threshold:
                edges.append(InfluenceEdge(src_user, dst_user, src_action, dst_action, q))
    return edges


def build_influence_network(
    series: Iterable[ActivitySeries],
    k: int = 1,
    prune_threshold: float = 0.0,
    permutations: int = 0,
    seed: int = 0,
    allow_self_loops: bool = False,
    jobs: int = 1,
    window: tuple[Optional[datetime], Optional[datetime]] = (None, None),
) -> InfluenceNetwork:
    """
    Estimate q for all ordered user pairs and all 3x3 action pairs.

    Args:
        series: Activity series (from bucket_series)
        k: Transfer-entropy history length
        prune_threshold: Edges with q <= threshold are omitted
        permutations: Shuffle-significance permutations (0 disables the filter)
        seed: Seed for the shuffle filter
        allow_self_loops: Keep user -> same-user edges
        jobs: Worker processes (one job per destination user)
        window: Estimation window, recorded in the metadata

    Returns:
        InfluenceNetwork with edges sorted canonically

    Example:
        network = build_influence_network(bucket_series(log), k=1, prune_threshold=0.01)
    """
    series = list(series)
    users = sorted({s.user_id for s in series})
    if len(users) < 2:
        raise ValueError(f"need at least 2 users to estimate influence, got {len(users)}")

    binary = {(s.user_id, s.action): binarize(s.counts) for s in series}
    lengths = {v.shape[0] for v in binary.values()}
    if len(lengths) != 1:
        raise ValueError(f"activity series have different lengths: {sorted(lengths)}")

    sources = [(u, a, v) for (u, a), v in sorted(binary.items(), key=lambda kv: (kv[0][0], ACTIONS.index(kv[0][1])))]
    seeds = np.random.SeedSequence(seed).spawn(len(users))
    tasks = []
    for i, user in enumerate(users):
        dst_series = [(a, v) for (u, a, v) in sources if u == user]
        tasks.append(
            (user, dst_series, sources, k, prune_threshold, permutations,
             int(seeds[i].generate_state(1)[0]), allow_self_loops)
        )

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_edges_for_target, tasks))
    else:
        results = [_edges_for_target(task) for task in tasks]

    metadata = InfluenceMetadata(
        window_start=window[0],
        window_end=window[1],
        history=k,
        prune_threshold=prune_threshold,
        allow_self_loops=allow_self_loops,
        permutations=permutations,
    )
    edges = [edge for chunk in results for edge in chunk]
    logger.info("Estimated %d influence edges among %d users", len(edges), len(users))
    return InfluenceNetwork.from_edges(sorted(edges, key=_edge_order), users=users, metadata=metadata)
