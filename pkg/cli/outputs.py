"""
Artifact writers

Every artifact starts with a header naming the package version, the run seed
and the settings hash. Headers carry no timestamps so reruns are byte-identical.
"""

import io
import json
import logging
from pathlib import Path
from typing import Iterable, Optional, Union

import pandas as pd

from . import __version__
from .config import Settings

logger = logging.getLogger(__name__)


def artifact_header(settings: Settings, command: str) -> dict:
    return {
        "version": __version__,
        "seed": settings.seed,
        "config_hash": settings.config_hash(),
        "command": command,
    }


def write_csv(frame: pd.DataFrame, path: Union[str, Path], header: dict):
    """CSV preceded by a `# {header json}` line."""
    buffer = io.StringIO()
    buffer.write("# " + json.dumps(header, sort_keys=True) + "\n")
    frame.to_csv(buffer, index=False, lineterminator="\n")
    Path(path).write_text(buffer.getvalue(), encoding="utf-8")
    logger.info("Wrote %s (%d rows)", path, len(frame))


def write_jsonl(records: Iterable[dict], path: Union[str, Path], header: dict):
    lines = [json.dumps({"header": header}, sort_keys=True)]
    lines += [json.dumps(record, sort_keys=True, default=str) for record in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    logger.info("Wrote %s", path)


def write_json(payload: dict, path: Union[str, Path], header: dict):
    """JSON document with the header under the `header` key."""
    document = {"header": header, **payload}
    Path(path).write_text(json.dumps(document, sort_keys=True, indent=2, default=str) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)


def read_csv_artifact(path: Union[str, Path], **read_kwargs) -> tuple[Optional[dict], pd.DataFrame]:
    """Read a CSV written by write_csv; returns (header or None, frame)."""
    text = Path(path).read_text(encoding="utf-8")
    header = None
    if text.startswith("#"):
        first, _, text = text.partition("\n")
        header = json.loads(first[1:].strip())
    return header, pd.read_csv(io.StringIO(text), **read_kwargs)


def read_jsonl_artifact(path: Union[str, Path], columns: Optional[list[str]] = None) -> tuple[Optional[dict], pd.DataFrame]:
    """Read JSON lines written by write_jsonl; returns (header or None, frame of the records)."""
    header = None
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        if header is None and not records and set(record) == {"header"}:
            header = record["header"]
        else:
            records.append(record)
    return header, pd.DataFrame.from_records(records, columns=columns)
