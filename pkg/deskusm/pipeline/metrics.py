from __future__ import annotations

import json
import logging
import sys
from datetime import date as _date
from datetime import datetime
from enum import Enum
from pathlib import Path
from threading import Lock
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

from core.config import METRICS_STDOUT

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"


def _json_default(o):
    if isinstance(o, (_date, datetime)):
        return o.isoformat()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Enum):
        return o.value
    if isinstance(o, set):
        return sorted(o)
    return str(o)


def _json_dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False, default=_json_default, allow_nan=True)


class MetricsWriter:
    """Append-only JSONL event stream, optionally echoed to stdout."""

    def __init__(self, run_dir: Union[str, Path], stdout: Optional[bool] = None):
        self.path = Path(run_dir) / METRICS_FILE
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.stdout = METRICS_STDOUT if stdout is None else stdout
        self._lock = Lock()

    def write(self, event: str, **fields: Any) -> dict:
        record = {"event": event, **fields}
        line = _json_dumps(record)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
            if self.stdout:
                sys.stdout.write(line + "\n")
                sys.stdout.flush()
        return record

    def truncate_after(self, step: int) -> None:
        """Drop step/checkpoint records past `step` so a resumed run does not duplicate them."""
        if not self.path.exists():
            return
        kept = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                log.warning("Dropping malformed metrics line in %s", self.path)
                continue
            if rec.get("event") in ("step", "checkpoint") and rec.get("step", -1) > step:
                continue
            kept.append(line)
        self.path.write_text("".join(k + "\n" for k in kept), encoding="utf-8")


def read_metrics(path: Union[str, Path], event: Optional[str] = None) -> pd.DataFrame:
    path = Path(path)
    if path.is_dir():
        path = path / METRICS_FILE
    if not path.exists():
        return pd.DataFrame()
    records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    df = pd.json_normalize(records) if records else pd.DataFrame()
    if event is not None and not df.empty:
        df = df[df["event"] == event].dropna(axis=1, how="all").reset_index(drop=True)
    return df
