from __future__ import annotations

import json
import os
import tempfile
import threading
from pathlib import Path
from typing import Any


class Checkpoint:
    """JSON progress file, rewritten atomically after every update.

    Sections are independent dicts (one per stage).  With ``path=None`` the
    checkpoint lives in memory only.  A stored checkpoint whose
    ``fingerprint`` differs from the one given (inputs changed) is discarded.
    """

    def __init__(self, path: str | Path | None = None, fingerprint: str | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self.data: dict[str, Any] = {}
        if self.path is not None and self.path.exists():
            try:
                self.data = json.loads(self.path.read_text("utf-8"))
            except ValueError:
                self.data = {}
        if self.data.get("fingerprint") != fingerprint:
            self.data = {}
        self.data["fingerprint"] = fingerprint

    def section(self, name: str) -> dict[str, Any]:
        with self._lock:
            return dict(self.data.get(name, {}))

    def put(self, section: str, key: str, value: Any) -> None:
        with self._lock:
            self.data.setdefault(section, {})[key] = value
            self._save()

    def _save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".ckpt-")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(self.data, f, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, self.path)
