"""Append-only log of every agent exchange."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class AgentRecord:
    role: str
    prompt: str
    images: tuple[dict, ...]     # {"frame": index, "sha256": digest}
    raw_response: str
    parsed: Any                  # validated result, or None on failure
    error: str | None
    wall_time: float


@dataclass
class AgentTranscript:
    records: list[AgentRecord] = field(default_factory=list)
    flagged: bool = False
    flag_reason: str | None = None
    notes: list[str] = field(default_factory=list)

    def append(self, record: AgentRecord) -> None:
        self.records.append(record)

    def flag(self, reason: str) -> None:
        self.flagged = True
        self.flag_reason = reason

    def note(self, text: str) -> None:
        self.notes.append(text)

    def count(self, role: str, parsed_only: bool = False) -> int:
        return sum(1 for r in self.records
                   if r.role == role and (not parsed_only or r.error is None))

    def to_dict(self) -> dict:
        return {
            "flagged": self.flagged,
            "flag_reason": self.flag_reason,
            "notes": list(self.notes),
            "records": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, data: dict) -> "AgentTranscript":
        records = [AgentRecord(**{**r, "images": tuple(r["images"])}) for r in data["records"]]
        return cls(records, data.get("flagged", False), data.get("flag_reason"),
                   list(data.get("notes", [])))

    @classmethod
    def load(cls, path: str | Path) -> "AgentTranscript":
        return cls.from_dict(json.loads(Path(path).read_text()))


def image_ref(frame: int, png: bytes) -> dict:
    return {"frame": int(frame), "sha256": hashlib.sha256(png).hexdigest()}
