"""
analysis/reports.py — CSV and JSON writers shared by training and analysis

CSVs start with one "# ..." comment line that states how the numbers were
computed; pandas reads them back with `comment="#"`.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import pandas as pd

from marrprobe.exceptions import ArtifactIOError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"


def write_csv(frame: pd.DataFrame, path, comment: str | None = None) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise ArtifactIOError(path, f"cannot write report ({exc.strerror})") from exc
    logger.debug("wrote %d rows to %s", len(frame), path)
    return path


def read_csv(path) -> pd.DataFrame:
    path = Path(path)
    try:
        return pd.read_csv(path, comment="#")
    except FileNotFoundError as exc:
        raise ArtifactIOError(path, "report not found") from exc
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ArtifactIOError(path, f"unreadable report ({exc})") from exc


def write_json(data, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ArtifactIOError(path, f"cannot write ({exc.strerror})") from exc
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ArtifactIOError(path, "file not found") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactIOError(path, f"unreadable JSON ({exc})") from exc
