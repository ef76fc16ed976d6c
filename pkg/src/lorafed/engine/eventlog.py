"""Append-only simulation event log.

Each record is ``(time, entity, kind, details)``; serialised as one JSON
object per line with sorted keys so logs from identical runs are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterator


class EventLog:
    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.records: list[tuple[float, str, str, dict]] = []

    def add(self, time: float, entity: str, kind: str, **details) -> None:
        if self.enabled:
            self.records.append((time, entity, kind, details))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[tuple[float, str, str, dict]]:
        return iter(self.records)

    def of_kind(self, *kinds: str) -> Iterator[tuple[float, str, str, dict]]:
        wanted = set(kinds)
        return (r for r in self.records if r[2] in wanted)

    def lines(self) -> Iterator[str]:
        for t, entity, kind, details in self.records:
            yield json.dumps({"t": t, "entity": entity, "kind": kind, **details},
                             sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def write(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")


def read_log(path: str | Path) -> EventLog:
    log = EventLog()
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            t = rec.pop("t")
            entity = rec.pop("entity")
            kind = rec.pop("kind")
            log.records.append((t, entity, kind, rec))
    return log
