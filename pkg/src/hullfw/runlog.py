"""Append-only event log shared by the tree, the baselines and the harness."""

from __future__ import annotations

import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _restore(value):
    if value == "inf":
        return math.inf
    if value == "-inf":
        return -math.inf
    if value == "nan":
        return math.nan
    return value


@dataclass
class RunLog:
    header: dict = field(default_factory=dict)
    events: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    _t0: float = field(default_factory=time.monotonic, repr=False)

    def event(self, kind: str, **data: Any) -> None:
        rec = {"t": time.monotonic() - self._t0, "type": kind}
        rec.update(data)
        self.events.append(rec)

    def of_type(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["type"] == kind]

    def finish(self, **summary: Any) -> None:
        self.summary = dict(summary)
        self.event("finish", **summary)

    def to_dict(self) -> dict:
        return {"header": _plain(self.header), "events": _plain(self.events), "summary": _plain(self.summary)}

    @classmethod
    def from_dict(cls, data: dict) -> "RunLog":
        summary = {k: _restore(v) for k, v in data.get("summary", {}).items()}
        return cls(dict(data.get("header", {})), list(data.get("events", [])), summary)

    def save(self, path: str) -> None:
        """Write atomically: a temp file in the same directory, then rename."""
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(self.to_dict(), fh)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path: str) -> "RunLog":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def relative_gap(primal: float, dual: float) -> float:
    """``(primal - dual) / max(|primal|, 1e-8)``; infinite without a primal value."""
    if primal is None or not math.isfinite(primal):
        return math.inf
    if dual is None or not math.isfinite(dual):
        return math.inf
    return max(primal - dual, 0.0) / max(abs(primal), 1e-8)

