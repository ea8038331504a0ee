"""
Event Log Ingestion

Reads platform event logs (JSON-lines or CSV) into the canonical form used by
influence estimation, simulation seeding and ground-truth measurement:
- Platform label mapping (tweet/reply/quote/retweet -> Initiate/Contribute/Share)
- Row validation with a rejects report instead of silent drops
- Hourly activity series per user and action
"""

import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator

from .config import DEFAULT_RESOLUTION, EVENT_FIELDS, PLATFORM_ACTIONS, SUPPORTED_FORMATS

logger = logging.getLogger(__name__)

Source = Union[str, Path, IO[bytes], IO[str]]


class SchemaError(ValueError):
    """Fatal problem with a log as a whole (header, format, emptiness)"""


class UnknownActionError(ValueError):
    """Platform label with no canonical action"""

    def __init__(self, label: str):
        self.label = label
        super().__init__(f"Unknown action label: {label!r}")


class ActionType(str, Enum):
    """Conversation action (initiate, contribute to, or share a conversation)"""

    INITIATE = "Initiate"
    CONTRIBUTE = "Contribute"
    SHARE = "Share"


ACTIONS: tuple[ActionType, ...] = tuple(ActionType)


class Event(BaseModel):
    """One platform action"""

    model_config = ConfigDict(frozen=True)

    user_id: str
    node_id: str
    parent_id: str
    root_id: str
    action: ActionType
    timestamp: datetime

    @field_validator("timestamp")
    @classmethod
    def _utc_seconds(cls, value: datetime) -> datetime:
        if value.tzinfo is None:
            value = value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc).replace(microsecond=0)

    @property
    def is_initiation(self) -> bool:
        return self.action is ActionType.INITIATE

    def to_record(self) -> dict:
        return {
            "user_id": self.user_id,
            "node_id": self.node_id,
            "parent_id": self.parent_id,
            "root_id": self.root_id,
            "action": self.action.value,
            "timestamp": format_timestamp(self.timestamp),
        }


@dataclass(frozen=True)
class Reject:
    """A row that could not be turned into an Event"""

    row: int
    reason: str
    raw: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"row": self.row, "reason": self.reason, "raw": self.raw}


@dataclass(frozen=True)
class EventLog:
    """Time-ordered events over the half-open interval [start, end)"""

    events: tuple[Event, ...]
    start: datetime
    end: datetime
    resolution: timedelta = DEFAULT_RESOLUTION
    rejects: tuple[Reject, ...] = ()

    def __post_init__(self):
        if self.resolution <= timedelta(0):
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if self.end <= self.start:
            raise ValueError(f"log interval is empty: [{self.start}, {self.end})")
        for prev, curr in zip(self.events, self.events[1:]):
            if curr.timestamp < prev.timestamp:
                raise ValueError(
                    f"events not sorted: {curr.node_id} at {curr.timestamp} "
                    f"follows {prev.node_id} at {prev.timestamp}"
                )
        if self.events and not (self.start <= self.events[0].timestamp and self.events[-1].timestamp < self.end):
            outside = next(e for e in self.events if not self.start <= e.timestamp < self.end)
            raise ValueError(
                f"event {outside.node_id} at {outside.timestamp} outside [{self.start}, {self.end})"
            )
        node_ids = [e.node_id for e in self.events]
        if len(set(node_ids)) != len(node_ids):
            duplicates = sorted({n for n in node_ids if node_ids.count(n) > 1})
            raise ValueError(f"duplicate node_id: {duplicates[:5]}")

    @classmethod
    def from_events(
        cls,
        events: Iterable[Event],
        start: datetime,
        end: datetime,
        resolution: timedelta = DEFAULT_RESOLUTION,
    ) -> "EventLog":
        """Build a log from unsorted events (stable sort by timestamp)."""
        ordered = sorted(events, key=lambda e: e.timestamp)
        return cls(tuple(ordered), start, end, resolution)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    @property
    def n_buckets(self) -> int:
        return math.ceil((self.end - self.start) / self.resolution)

    def bucket_of(self, timestamp: datetime) -> int:
        return int((timestamp - self.start) // self.resolution)

    def users(self) -> list[str]:
        return sorted({e.user_id for e in self.events})

    def split(self, at: datetime) -> tuple["EventLog", "EventLog"]:
        """Split into [start, at) and [at, end), e.g. training and holdout windows."""
        if not self.start < at < self.end:
            raise ValueError(f"split point {at} outside ({self.start}, {self.end})")
        before = tuple(e for e in self.events if e.timestamp < at)
        after = tuple(e for e in self.events if e.timestamp >= at)
        return (
            EventLog(before, self.start, at, self.resolution),
            EventLog(after, at, self.end, self.resolution),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([e.to_record() for e in self.events], columns=list(EVENT_FIELDS))


@dataclass(frozen=True, eq=False)
class ActivitySeries:
    """Event counts of one user and action, one entry per time bucket"""

    user_id: str
    action: ActionType
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def format_timestamp(value: datetime) -> str:
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def map_platform_action(label: str) -> ActionType:
    """
    Map a platform action label to its conversation action.

    Args:
        label: One of tweet, reply, quote, retweet (case-insensitive)

    Returns:
        tweet -> Initiate, reply/quote -> Contribute, retweet -> Share

    Example:
        map_platform_action("TWEET")  # ActionType.INITIATE
    """
    canonical = PLATFORM_ACTIONS.get(str(label).strip().lower())
    if canonical is None:
        raise UnknownActionError(label)
    return ActionType(canonical)


def coerce_action(label: str) -> ActionType:
    """Accept either a platform label or a canonical action name."""
    text = str(label).strip()
    for action in ACTIONS:
        if text.lower() == action.value.lower():
            return action
    return map_platform_action(text)


def _read_text(source: Source) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def _strip_header_lines(text: str) -> tuple[str, Optional[dict]]:
    # Artifact headers are written as leading "# {...}" lines
    lines = text.splitlines(keepends=True)
    header = None
    while lines and lines[0].startswith("#"):
        try:
            parsed = json.loads(lines.pop(0)[1:].strip())
        except json.JSONDecodeError:
            continue
        if header is None and isinstance(parsed, dict):
            header = parsed
    return "".join(lines), header


def _read_rows(text: str, fmt: str) -> tuple[list[tuple[int, dict]], list[Reject], Optional[dict]]:
    rows: list[tuple[int, dict]] = []
    rejects: list[Reject] = []
    header: Optional[dict] = None

    if fmt == "csv":
        bad_lines: list[list[str]] = []

        def _on_bad_line(line: list[str]):
            bad_lines.append(line)
            return None

        body, header = _strip_header_lines(text)
        try:
            frame = pd.read_csv(
                io.StringIO(body),
                dtype=str,
                keep_default_na=False,
                engine="python",
                on_bad_lines=_on_bad_line,
            )
        except pd.errors.EmptyDataError:
            raise SchemaError("Event log is empty")

        missing = [name for name in EVENT_FIELDS if name not in frame.columns]
        if missing:
            raise SchemaError(f"CSV header is missing columns: {missing}")

        for i, record in enumerate(frame[list(EVENT_FIELDS)].to_dict("records")):
            rows.append((i, record))
        for line in bad_lines:
            rejects.append(Reject(row=-1, reason="wrong number of fields", raw={"line": line}))
        return rows, rejects, header

    row = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            rejects.append(Reject(row=row, reason=f"invalid JSON: {e.msg}", raw={"line": line}))
            row += 1
            continue
        if isinstance(record, dict) and set(record) == {"header"}:
            if header is None and isinstance(record["header"], dict):
                header = record["header"]
            continue
        if not isinstance(record, dict):
            rejects.append(Reject(row=row, reason="record is not an object", raw={"line": line}))
        else:
            rows.append((row, record))
        row += 1

    if row == 0:
        raise SchemaError("Event log is empty")
    if rows and not any(all(name in record for name in EVENT_FIELDS) for _, record in rows):
        raise SchemaError(f"No record carries the event fields {list(EVENT_FIELDS)}")
    return rows, rejects, header


def _parse_row(row: int, record: dict) -> Union[Event, Reject]:
    raw = {name: record.get(name) for name in EVENT_FIELDS}
    for name in EVENT_FIELDS:
        value = record.get(name)
        if value is None or str(value).strip() == "":
            return Reject(row=row, reason=f"missing {name}", raw=raw)

    try:
        action = coerce_action(record["action"])
    except UnknownActionError as e:
        return Reject(row=row, reason=f"unknown action label {e.label!r}", raw=raw)

    try:
        stamp = pd.Timestamp(str(record["timestamp"]))
    except (ValueError, TypeError):
        return Reject(row=row, reason="unparseable timestamp", raw=raw)
    if pd.isna(stamp):
        return Reject(row=row, reason="unparseable timestamp", raw=raw)
    stamp = stamp.tz_localize("UTC") if stamp.tzinfo is None else stamp.tz_convert("UTC")

    node_id, parent_id, root_id = (str(record[k]) for k in ("node_id", "parent_id", "root_id"))
    if action is ActionType.INITIATE and not (node_id == parent_id == root_id):
        return Reject(row=row, reason="initiation must be its own parent and root", raw=raw)

    return Event(
        user_id=str(record["user_id"]),
        node_id=node_id,
        parent_id=parent_id,
        root_id=root_id,
        action=action,
        timestamp=stamp.to_pydatetime(),
    )


def _utc(stamp: Optional[datetime]) -> Optional[datetime]:
    if stamp is not None and stamp.tzinfo is None:
        return stamp.replace(tzinfo=timezone.utc)
    return stamp


def interval_header(log: EventLog) -> dict:
    """The log's interval as stored in artifact headers."""
    return {
        "start": log.start.isoformat(),
        "end": log.end.isoformat(),
        "resolution_seconds": int(log.resolution.total_seconds()),
    }


def _interval_from_header(header: Optional[dict]) -> tuple[Optional[datetime], Optional[datetime], Optional[timedelta]]:
    interval = (header or {}).get("interval")
    if not isinstance(interval, dict):
        return None, None, None
    try:
        start = pd.Timestamp(interval["start"]).to_pydatetime() if "start" in interval else None
        end = pd.Timestamp(interval["end"]).to_pydatetime() if "end" in interval else None
        seconds = interval.get("resolution_seconds")
        resolution = timedelta(seconds=float(seconds)) if seconds else None
    except (ValueError, TypeError) as e:
        raise SchemaError(f"Malformed interval in log header: {interval}") from e
    return _utc(start), _utc(end), resolution


def parse_event_log(
    source: Source,
    fmt: str = "jsonl",
    start: Optional[datetime] = None,
    end: Optional[datetime] = None,
    resolution: Optional[timedelta] = None,
) -> EventLog:
    """
    Parse an event log and validate every row.

    Logs written by write_event_log carry their interval in the header; it is
    used for any of start/end/resolution not given explicitly.

    Args:
        source: Path or byte/text stream
        fmt: "jsonl" or "csv" (same six field names in both)
        start: Interval start (default: header, else first event floored to resolution)
        end: Interval end, exclusive (default: header, else last event's bucket end)
        resolution: Bucket width (default: header, else 1 hour)

    Returns:
        EventLog sorted by timestamp; unparseable rows are in `log.rejects`

    Raises:
        SchemaError: Unknown format, malformed header, or no valid events

    Example:
        log = parse_event_log("june.jsonl")
        print(len(log), len(log.rejects))
    """
    if fmt not in SUPPORTED_FORMATS:
        raise SchemaError(f"Unsupported format {fmt!r}; expected one of {SUPPORTED_FORMATS}")

    rows, rejects, header = _read_rows(_read_text(source), fmt)
    header_start, header_end, header_resolution = _interval_from_header(header)

    events: list[Event] = []
    seen: set[str] = set()
    for row, record in rows:
        parsed = _parse_row(row, record)
        if isinstance(parsed, Reject):
            rejects.append(parsed)
        elif parsed.node_id in seen:
            rejects.append(Reject(row=row, reason="duplicate node_id", raw=parsed.to_record()))
        else:
            seen.add(parsed.node_id)
            events.append(parsed)

    start = _utc(start) if start is not None else header_start
    end = _utc(end) if end is not None else header_end
    resolution = resolution or header_resolution or DEFAULT_RESOLUTION

    if start is not None or end is not None:
        kept = []
        for event in events:
            if (start is not None and event.timestamp < start) or (end is not None and event.timestamp >= end):
                rejects.append(Reject(row=-1, reason="timestamp outside interval", raw=event.to_record()))
            else:
                kept.append(event)
        events = kept

    if not events:
        raise SchemaError(f"Event log has no valid events ({len(rejects)} rejected rows)")

    events.sort(key=lambda e: e.timestamp)
    if start is None:
        start = pd.Timestamp(events[0].timestamp).floor(resolution).to_pydatetime()
    if end is None:
        end = pd.Timestamp(events[-1].timestamp).floor(resolution).to_pydatetime() + resolution

    if rejects:
        logger.warning("Rejected %d of %d rows", len(rejects), len(rows) + len(rejects))

    return EventLog(tuple(events), start, end, resolution, tuple(sorted(rejects, key=lambda r: r.row)))


def write_event_log(log: EventLog, target: Union[str, Path, IO[str]], fmt: str = "jsonl", header: Optional[dict] = None):
    """Serialize a log in the canonical schema after a header line carrying its interval."""
    if fmt not in SUPPORTED_FORMATS:
        raise SchemaError(f"Unsupported format {fmt!r}; expected one of {SUPPORTED_FORMATS}")

    header = {**(header or {}), "interval": interval_header(log)}
    buffer = io.StringIO()
    if fmt == "jsonl":
        buffer.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for event in log.events:
            buffer.write(json.dumps(event.to_record()) + "\n")
    else:
        buffer.write("# " + json.dumps(header, sort_keys=True) + "\n")
        log.to_frame().to_csv(buffer, index=False, lineterminator="\n")

    if isinstance(target, (str, Path)):
        Path(target).write_text(buffer.getvalue(), encoding="utf-8")
    else:
        target.write(buffer.getvalue())


def validate_references(log: EventLog) -> list[Reject]:
    """Flag contributions/shares whose parent is not in the log."""
    node_ids = {e.node_id for e in log.events}
    dangling = []
    for i, event in enumerate(log.events):
        if not event.is_initiation and event.parent_id not in node_ids:
            dangling.append(Reject(row=i, reason="dangling parent_id", raw=event.to_record()))
    return dangling


def bucket_series(log: EventLog) -> list[ActivitySeries]:
    """
    Count events per user, action and time bucket.

    Bucket index is floor((t - start) / resolution). Only user/action pairs with
    at least one event get a series.

    Returns:
        ActivitySeries sorted by (user_id, action)

    Example:
        # 1 user, Initiate at hours 0, 0, 5 of a 6-hour log
        bucket_series(log)[0].counts  # array([2, 0, 0, 0, 0, 1])
    """
    n = log.n_buckets
    buckets: dict[tuple[str, ActionType], list[int]] = {}
    for event in log.events:
        buckets.setdefault((event.user_id, event.action), []).append(log.bucket_of(event.timestamp))

    series = []
    for (user_id, action) in sorted(buckets, key=lambda key: (key[0], ACTIONS.index(key[1]))):
        counts = np.bincount(np.asarray(buckets[(user_id, action)], dtype=np.int64), minlength=n)
        series.append(ActivitySeries(user_id=user_id, action=action, counts=counts[:n]))
    return series
