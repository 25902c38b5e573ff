"""Newline-delimited JSON metric records."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional, TextIO

from .errors import AQEError


class MetricsParseError(AQEError, ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


@dataclass
class MetricRecord:
    env_steps: int
    eval_return_mean: float
    eval_return_std: float
    critic_loss_mean: Optional[float] = None  # None before learning starts
    actor_objective: Optional[float] = None
    alpha: Optional[float] = None
    bias_mean: Optional[float] = None
    bias_std: Optional[float] = None
    wallclock_s: Optional[float] = None


FIELD_NAMES = [f.name for f in fields(MetricRecord)]
_REQUIRED = ("env_steps", "eval_return_mean", "eval_return_std")


def write_metrics(record: MetricRecord, sink: TextIO) -> None:
    """Append one record as a single JSON line and flush."""
    sink.write(json.dumps(asdict(record)) + "\n")
    sink.flush()


def append_metrics(record: MetricRecord, path) -> None:
    with open(path, "a") as fh:
        write_metrics(record, fh)


def read_metrics(path) -> List[MetricRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MetricsParseError(path, lineno, f"malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise MetricsParseError(path, lineno, "record is not an object")
        unknown = set(obj) - set(FIELD_NAMES)
        missing = [k for k in _REQUIRED if k not in obj]
        if unknown or missing:
            raise MetricsParseError(path, lineno, f"unknown fields {sorted(unknown)} / missing {missing}")
        records.append(MetricRecord(**obj))
    return records


def check_monotone(records: List[MetricRecord], path="<records>") -> None:
    for i in range(1, len(records)):
        if records[i].env_steps <= records[i - 1].env_steps:
            raise MetricsParseError(path, i + 1, "env_steps not strictly increasing")
