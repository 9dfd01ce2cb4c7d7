"""Single-slot latest-value mailboxes for cross-thread snapshot sharing.

Teleoperation wants the freshest value, never a backlog: writers overwrite,
readers take the latest. One writer per box, any number of readers.
"""

from __future__ import annotations

import threading


class LatestValueMailbox:
    def __init__(self):
        self._lock = threading.Lock()
        self._value = None
        self._version = 0

    def put(self, value) -> None:
        with self._lock:
            self._value = value
            self._version += 1

    def get(self):
        """Latest value, or None if nothing was ever published."""
        with self._lock:
            return self._value

    def get_versioned(self) -> tuple:
        """(version, value); version increments on every put."""
        with self._lock:
            return self._version, self._value
