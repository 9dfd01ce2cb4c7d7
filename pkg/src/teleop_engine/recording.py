"""JSONL step recording: one header object, then one object per control tick.

Recording must never take down a running session: IO failures disable the
recorder with a warning and the loop continues. One file is written per
active (Running) interval; follow-up intervals get numbered siblings
(out.jsonl, out.2.jsonl, ...).
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

SCHEMA_VERSION = 1

DEFAULT_FIELDS = [
    "timestamp", "leader", "q_cmd", "q_actual", "gripper_cmd", "gripper_actual",
    "eef_cmd", "eef_actual", "flags", "feedback",
]

logger = logging.getLogger(__name__)


class StepRecorder:
    """Allowlist-filtered JSONL writer with periodic flushing."""

    def __init__(self, path, fields=None, flush_every: int = 50):
        self.base_path = Path(path)
        self.fields = list(fields) if fields is not None else list(DEFAULT_FIELDS)
        unknown = set(self.fields) - set(DEFAULT_FIELDS)
        if unknown:
            raise ValueError(f"unknown record fields in allowlist: {sorted(unknown)}")
        self.flush_every = flush_every
        self.enabled = True
        self.segment_paths: list = []
        self._fh = None
        self._pending = 0
        self._last_timestamp = None

    def segment_path(self, index: int) -> Path:
        if index <= 1:
            return self.base_path
        return self.base_path.with_name(
            f"{self.base_path.stem}.{index}{self.base_path.suffix}")

    def start_segment(self, header: dict) -> None:
        """Open the next file and write its header line."""
        if not self.enabled:
            return
        self.close_segment()
        path = self.segment_path(len(self.segment_paths) + 1)
        header = dict(header)
        header.setdefault("kind", "header")
        header.setdefault("schema_version", SCHEMA_VERSION)
        header["fields"] = self.fields
        try:
            self._fh = path.open("w")
            self._fh.write(json.dumps(header) + "\n")
        except OSError as exc:
            self._disable(exc)
            return
        self.segment_paths.append(path)
        self._pending = 0
        self._last_timestamp = None

    def write(self, record: dict) -> None:
        if not self.enabled or self._fh is None:
            return
        ts = record.get("timestamp")
        if ts is not None and self._last_timestamp is not None and ts <= self._last_timestamp:
            raise ValueError(
                f"record timestamps must be strictly increasing "
                f"({ts} after {self._last_timestamp})")
        if ts is not None:
            self._last_timestamp = ts
        line = {k: record[k] for k in self.fields if k in record}
        try:
            self._fh.write(json.dumps(line) + "\n")
            self._pending += 1
            if self._pending >= self.flush_every:
                self._fh.flush()
                self._pending = 0
        except OSError as exc:
            self._disable(exc)

    def flush(self) -> None:
        if self._fh is not None:
            try:
                self._fh.flush()
                self._pending = 0
            except OSError as exc:
                self._disable(exc)

    def close_segment(self) -> None:
        if self._fh is not None:
            try:
                self._fh.flush()
                self._fh.close()
            except OSError as exc:
                self._disable(exc)
            self._fh = None

    def close(self) -> None:
        self.close_segment()

    def _disable(self, exc: OSError) -> None:
        logger.warning("recording disabled after IO error: %s", exc)
        self.enabled = False
        try:
            if self._fh is not None:
                self._fh.close()
        except OSError:
            pass
        self._fh = None


def read_recording(path) -> tuple:
    """(header, records) from a JSONL recording file."""
    path = Path(path)
    header = None
    records = []
    with path.open() as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if i == 0:
                if obj.get("kind") != "header":
                    raise ValueError(f"{path}: first line is not a recording header")
                header = obj
            else:
                records.append(obj)
    if header is None:
        raise ValueError(f"{path}: empty recording file")
    return header, records
