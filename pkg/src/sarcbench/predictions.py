"""Per-sentence model outputs shared by the classifier, the LLM harness and metrics."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Label, parse_label


class EntryStatus(str, enum.Enum):
    OK = "ok"
    UNPARSEABLE = "unparseable"
    ERROR = "error"


@dataclass(frozen=True)
class PredictionEntry:
    sentence_id: str
    predicted: Label | None
    score: float | None = None
    status: EntryStatus = EntryStatus.OK

    def __post_init__(self) -> None:
        if self.status is EntryStatus.OK and self.predicted is None:
            raise ValueError(f"entry {self.sentence_id!r}: ok status requires a predicted label")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"entry {self.sentence_id!r}: score {self.score} outside [0, 1]")

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "predicted": self.predicted.value if self.predicted else None,
            "score": self.score,
            "status": self.status.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> PredictionEntry:
        return cls(
            sentence_id=obj["sentence_id"],
            predicted=parse_label(obj["predicted"]) if obj.get("predicted") else None,
            score=obj.get("score"),
            status=EntryStatus(obj.get("status", "ok")),
        )


@dataclass
class PredictionSet:
    model_id: str
    dataset_id: str
    entries: list[PredictionEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.sentence_id for e in self.entries]

    @property
    def has_scores(self) -> bool:
        return bool(self.entries) and all(e.score is not None for e in self.entries)

    def status_counts(self) -> dict[str, int]:
        counts = {s.value: 0 for s in EntryStatus}
        for e in self.entries:
            counts[e.status.value] += 1
        return counts

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "entries": [e.to_json() for e in self.entries],
        }

    @classmethod
    def from_json(cls, obj: dict) -> PredictionSet:
        return cls(obj["model_id"], obj["dataset_id"], [PredictionEntry.from_json(e) for e in obj["entries"]])

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> PredictionSet:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
