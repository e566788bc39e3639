"""Captured wire traffic, the raw material for the adversary drills.

A transcript is an append-only list of (direction, endpoint, body) records
with bodies stored verbatim. On disk it is one JSON object per line.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["TranscriptEntry", "Transcript"]


@dataclass(frozen=True)
class TranscriptEntry:
    direction: str  # "send" or "recv"
    endpoint: str
    body: dict


@dataclass
class Transcript:
    entries: list[TranscriptEntry] = field(default_factory=list)

    def append(self, direction: str, endpoint: str, body: dict) -> None:
        if direction not in ("send", "recv"):
            raise ValueError(f"direction must be 'send' or 'recv', got {direction!r}")
        self.entries.append(TranscriptEntry(direction, endpoint, dict(body)))

    def save(self, path: str | os.PathLike[str], *, append: bool = False) -> None:
        mode = "a" if append else "w"
        with open(path, mode, encoding="utf-8") as handle:
            for entry in self.entries:
                handle.write(
                    json.dumps(
                        {
                            "direction": entry.direction,
                            "endpoint": entry.endpoint,
                            "body": entry.body,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> Transcript:
        transcript = cls()
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                transcript.append(obj["direction"], obj["endpoint"], obj["body"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad transcript line: {exc}") from None
        return transcript
