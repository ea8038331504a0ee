import io
import json
from datetime import timedelta

import pytest

from sources.events import (
    ActionType,
    EventLog,
    SchemaError,
    UnknownActionError,
    bucket_series,
    map_platform_action,
    parse_event_log,
    validate_references,
    write_event_log,
)
from sources.synthetic import poisson_event_log

from .conftest import HOUR, I, S, START

VALID_ROW = {
    "user_id": "u1", "node_id": "n1", "parent_id": "n1", "root_id": "n1",
    "action": "tweet", "timestamp": "2018-06-01T00:10:00Z",
}


@pytest.mark.parametrize("label,expected", [
    ("tweet", ActionType.INITIATE),
    ("TWEET", ActionType.INITIATE),
    ("reply", ActionType.CONTRIBUTE),
    ("quote", ActionType.CONTRIBUTE),
    ("retweet", ActionType.SHARE),
])
def test_map_platform_action(label, expected):
    assert map_platform_action(label) is expected


def test_unknown_action_label_is_echoed():
    with pytest.raises(UnknownActionError) as excinfo:
        map_platform_action("like")
    assert excinfo.value.label == "like"


def test_empty_file_is_a_schema_error():
    with pytest.raises(SchemaError):
        parse_event_log(io.StringIO(""), fmt="jsonl")


def test_garbled_timestamp_becomes_reject():
    bad = dict(VALID_ROW, node_id="n2", parent_id="n2", root_id="n2", timestamp="not a time")
    text = "\n".join(json.dumps(r) for r in (VALID_ROW, bad))
    log = parse_event_log(io.StringIO(text), fmt="jsonl")
    assert len(log) == 1
    assert len(log.rejects) == 1
    assert log.rejects[0].reason == "unparseable timestamp"


def test_csv_with_unknown_action_row():
    header = ",".join(VALID_ROW)
    good = ",".join(VALID_ROW.values())
    bad = good.replace("tweet", "like").replace("n1", "n9")
    log = parse_event_log(io.StringIO("\n".join([header, good, bad]) + "\n"), fmt="csv")
    assert len(log) == 1
    assert "like" in log.rejects[0].reason


def test_csv_missing_columns_is_fatal():
    with pytest.raises(SchemaError):
        parse_event_log(io.StringIO("user_id,node_id\nu1,n1\n"), fmt="csv")


def test_unsupported_format():
    with pytest.raises(SchemaError):
        parse_event_log(io.StringIO(json.dumps(VALID_ROW)), fmt="xml")


def test_initiation_must_be_its_own_root():
    row = dict(VALID_ROW, root_id="other")
    other = dict(VALID_ROW, node_id="n2", parent_id="n2", root_id="n2")
    log = parse_event_log(io.StringIO(json.dumps(row) + "\n" + json.dumps(other)), fmt="jsonl")
    assert [e.node_id for e in log] == ["n2"]
    assert log.rejects[0].row == 0


def test_events_at_interval_end_are_excluded():
    late = dict(VALID_ROW, node_id="n2", parent_id="n2", root_id="n2", timestamp="2018-06-01T02:00:00Z")
    text = json.dumps(VALID_ROW) + "\n" + json.dumps(late)
    log = parse_event_log(io.StringIO(text), start=START, end=START + 2 * HOUR)
    assert len(log) == 1
    assert log.rejects[0].reason == "timestamp outside interval"


def test_inferred_interval_covers_events():
    log = parse_event_log(io.StringIO(json.dumps(VALID_ROW)))
    assert log.start == START
    assert log.end == START + HOUR
    assert log.n_buckets == 1


def test_duplicate_node_id_becomes_reject():
    again = dict(VALID_ROW, user_id="u2", timestamp="2018-06-01T00:20:00Z")
    other = dict(VALID_ROW, node_id="n2", parent_id="n2", root_id="n2")
    text = "\n".join(json.dumps(r) for r in (VALID_ROW, again, other))
    log = parse_event_log(io.StringIO(text))
    assert [e.node_id for e in log] == ["n1", "n2"]
    assert log.events[0].user_id == "u1"
    (reject,) = log.rejects
    assert reject.reason == "duplicate node_id"
    assert reject.row == 1


def test_log_refuses_duplicate_node_ids(make_event):
    first, second = make_event("u", "x", hour=0), make_event("v", "x", hour=1)
    with pytest.raises(ValueError, match="duplicate node_id"):
        EventLog((first, second), START, START + 2 * HOUR)


@pytest.mark.parametrize("hour", [-1, 3, 9])
def test_log_refuses_events_outside_interval(make_event, hour):
    inside, outside = make_event("u", "a", hour=0), make_event("u", "b", hour=hour)
    events = (outside, inside) if hour < 0 else (inside, outside)
    with pytest.raises(ValueError, match="outside"):
        EventLog(events, START, START + 3 * HOUR)


def test_unsorted_log_is_rejected(make_event):
    early, late = make_event("u", "a", hour=0), make_event("u", "b", hour=1)
    with pytest.raises(ValueError, match="not sorted"):
        EventLog((late, early), START, START + 2 * HOUR)


def test_bucket_series_counts(make_event, make_log):
    log = make_log([
        make_event("u", "a", hour=0), make_event("u", "b", hour=0, minute=30), make_event("u", "c", hour=5),
    ], hours=6)
    (series,) = bucket_series(log)
    assert series.action is I
    assert series.counts.tolist() == [2, 0, 0, 0, 0, 1]


def test_bucket_series_one_per_user_action(make_event, make_log):
    log = make_log([
        make_event("u", "a"),
        make_event("u", "b", parent="a", root="a", action=S, hour=1),
        make_event("v", "c", hour=1),
        make_event("v", "d", parent="c", root="c", action=S, hour=2),
    ])
    series = bucket_series(log)
    assert [(s.user_id, s.action) for s in series] == [("u", I), ("u", S), ("v", I), ("v", S)]
    assert all(len(s.counts) == log.n_buckets for s in series)


def test_bucket_sums_match_event_counts():
    log = poisson_event_log(n_users=15, horizon=40, rate=0.3, seed=4)
    series = bucket_series(log)
    assert sum(s.total for s in series) == len(log)
    frame = log.to_frame()
    per_user = frame.groupby("user_id").size().to_dict()
    totals = {}
    for s in series:
        totals[s.user_id] = totals.get(s.user_id, 0) + s.total
    assert totals == per_user


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_write_then_parse_preserves_events(tmp_path, conversation_log, fmt):
    path = tmp_path / f"log.{fmt}"
    write_event_log(conversation_log, path, fmt=fmt, header={"seed": 1})
    parsed = parse_event_log(path, fmt=fmt, start=conversation_log.start, end=conversation_log.end)
    assert [e.to_record() for e in parsed] == [e.to_record() for e in conversation_log]
    assert parsed.rejects == ()


def test_validate_references_flags_dangling_parent(make_event, make_log):
    log = make_log([
        make_event("u", "a"),
        make_event("v", "b", parent="missing", root="a", action=S, hour=1),
    ])
    (reject,) = validate_references(log)
    assert reject.raw["node_id"] == "b"


def test_split_partitions_events(conversation_log):
    train, holdout = conversation_log.split(START + 2 * HOUR)
    assert len(train) + len(holdout) == len(conversation_log)
    assert train.end == holdout.start


def test_timestamps_are_normalized_to_utc_seconds():
    row = dict(VALID_ROW, timestamp="2018-06-01T02:10:00.750+02:00")
    (event,) = parse_event_log(io.StringIO(json.dumps(row))).events
    assert event.timestamp == START + timedelta(minutes=10)
    assert event.timestamp.microsecond == 0


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_written_interval_survives_a_late_first_event(tmp_path, make_event, make_log, fmt):
    log = make_log([make_event("u", "a", hour=5), make_event("v", "b", hour=6)], hours=8)
    path = tmp_path / f"log.{fmt}"
    write_event_log(log, path, fmt=fmt, header={"seed": 1})

    parsed = parse_event_log(path, fmt=fmt)
    assert (parsed.start, parsed.end, parsed.resolution) == (START, START + 8 * HOUR, HOUR)
    assert [parsed.bucket_of(e.timestamp) for e in parsed] == [5, 6]
    assert sum(s.total for s in bucket_series(parsed)) == 2


def test_explicit_interval_beats_header(tmp_path, make_event, make_log):
    log = make_log([make_event("u", "a", hour=1), make_event("v", "b", hour=6)], hours=8)
    path = tmp_path / "log.jsonl"
    write_event_log(log, path)

    parsed = parse_event_log(path, start=START + 2 * HOUR)
    assert parsed.start == START + 2 * HOUR
    assert parsed.end == START + 8 * HOUR
    assert [e.node_id for e in parsed] == ["b"]
    assert parsed.rejects[0].reason == "timestamp outside interval"
