"""Dataset records, JSONL loaders, class balancing and split construction.

Datasets are JSONL files with one object per line::

    {"id": "h1", "text": "...", "label": "non-sarcastic", "lang": "en"}

English and Hinglish files are parallel: a Hinglish record carries the same
``id`` as the English record it was translated from.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class CorpusError(ValueError):
    """Raised for malformed dataset files or impossible balancing/split requests."""


class Task(str, enum.Enum):
    SARCASM = "sarcasm"
    SENTIMENT = "sentiment"

    @property
    def labels(self) -> tuple[Label, ...]:
        return TASK_LABELS[self]


class Lang(str, enum.Enum):
    ENGLISH = "en"
    HINGLISH = "hinglish"


class Label(str, enum.Enum):
    SARCASTIC = "sarcastic"
    NON_SARCASTIC = "non-sarcastic"
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"

    @property
    def task(self) -> Task:
        return Task.SARCASM if self in TASK_LABELS[Task.SARCASM] else Task.SENTIMENT

    @property
    def display(self) -> str:
        return _DISPLAY[self]


# Index order doubles as the classifier's output order; Sarcastic is index 1
# so the binary score is the probability of the last class.
TASK_LABELS: dict[Task, tuple[Label, ...]] = {
    Task.SARCASM: (Label.NON_SARCASTIC, Label.SARCASTIC),
    Task.SENTIMENT: (Label.NEGATIVE, Label.NEUTRAL, Label.POSITIVE),
}

_DISPLAY = {
    Label.SARCASTIC: "Sarcastic",
    Label.NON_SARCASTIC: "Non-Sarcastic",
    Label.POSITIVE: "Positive",
    Label.NEGATIVE: "Negative",
    Label.NEUTRAL: "Neutral",
}


class SplitName(str, enum.Enum):
    TRAIN = "train"
    FINETUNE_ENGLISH = "finetune_en"
    FINETUNE_HINGLISH = "finetune_hinglish"
    TEST = "test"


@dataclass(frozen=True)
class LabeledSentence:
    id: str
    text: str
    task: Task
    lang: Lang
    label: Label

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusError(f"record {self.id!r}: text is empty")
        if self.label.task is not self.task:
            raise CorpusError(
                f"record {self.id!r}: label {self.label.value!r} does not belong to task {self.task.value!r}"
            )

    def to_json(self) -> dict:
        return {"id": self.id, "text": self.text, "label": self.label.value, "lang": self.lang.value}


@dataclass(frozen=True)
class DatasetSplit:
    name: SplitName
    records: tuple[LabeledSentence, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        tasks = {r.task for r in self.records}
        if len(tasks) > 1:
            raise CorpusError(f"split {self.name.value!r} mixes tasks: {sorted(t.value for t in tasks)}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def task(self) -> Task | None:
        return self.records[0].task if self.records else None

    @property
    def class_counts(self) -> dict[Label, int]:
        return dict(Counter(r.label for r in self.records))

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def descriptor(self) -> str:
        """Short tag such as ``en-sarcasm`` or ``cm-sentiment`` used in provenance chains."""
        langs = {r.lang for r in self.records}
        if not langs:
            return self.name.value
        if len(langs) > 1:
            lang = "mixed"
        else:
            lang = "en" if langs.pop() is Lang.ENGLISH else "cm"
        return f"{lang}-{self.task.value}"


@dataclass(frozen=True)
class ScriptProfile:
    latin_tokens: int
    devanagari_tokens: int
    other_tokens: int

    @property
    def total(self) -> int:
        return self.latin_tokens + self.devanagari_tokens + self.other_tokens


# ---------------------------------------------------------------------------
# Loading and writing
# ---------------------------------------------------------------------------

_LANGS = {lang.value: lang for lang in Lang}
_LABELS = {label.value: label for label in Label}


def parse_label(value: str) -> Label:
    try:
        return _LABELS[value]
    except KeyError:
        raise CorpusError(f"unknown label value {value!r}") from None


def load_jsonl(path: str | Path, task: Task) -> list[LabeledSentence]:
    """Read a dataset file, validating schema, labels and id uniqueness."""
    records: list[LabeledSentence] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            missing = [k for k in ("id", "text", "label", "lang") if k not in obj]
            if missing:
                raise CorpusError(f"{path}:{lineno}: missing keys {missing}")
            rid = str(obj["id"])
            if rid in seen:
                raise CorpusError(f"{path}: duplicate id {rid!r} on lines {seen[rid]} and {lineno}")
            seen[rid] = lineno
            try:
                label = parse_label(obj["label"])
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if obj["lang"] not in _LANGS:
                raise CorpusError(f"{path}:{lineno}: unknown lang {obj['lang']!r}")
            try:
                rec = LabeledSentence(rid, str(obj["text"]).strip(), task, _LANGS[obj["lang"]], label)
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            records.append(rec)
    return records


def load_sarcasm_headlines(path: str | Path) -> list[LabeledSentence]:
    return load_jsonl(path, Task.SARCASM)


def load_sentiment_tweets(path: str | Path) -> list[LabeledSentence]:
    return load_jsonl(path, Task.SENTIMENT)


def write_jsonl(records: Iterable[LabeledSentence], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def save_split(split: DatasetSplit, path: str | Path) -> None:
    write_jsonl(split.records, path)


def load_split(path: str | Path, name: SplitName, task: Task) -> DatasetSplit:
    return DatasetSplit(name, tuple(load_jsonl(path, task)))


def write_split_manifest(splits: Mapping[str, DatasetSplit], path: str | Path) -> None:
    """Write ``{split: [ids...], "counts": {split: {label: n}}}`` as JSON."""
    manifest: dict = {key: split.ids for key, split in splits.items()}
    manifest["counts"] = {
        key: {label.value: n for label, n in sorted(split.class_counts.items(), key=lambda kv: kv[0].value)}
        for key, split in splits.items()
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_split_manifest(path: str | Path) -> dict[str, list[str]]:
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    manifest.pop("counts", None)
    return manifest


# ---------------------------------------------------------------------------
# Balancing and splits
# ---------------------------------------------------------------------------


def _single_task(records: Sequence[LabeledSentence]) -> Task:
    tasks = {r.task for r in records}
    if len(tasks) != 1:
        raise CorpusError(f"records must share one task, got {sorted(t.value for t in tasks)}")
    return tasks.pop()


def _indices_by_label(records: Sequence[LabeledSentence]) -> dict[Label, list[int]]:
    groups: dict[Label, list[int]] = {}
    for i, rec in enumerate(records):
        groups.setdefault(rec.label, []).append(i)
    return groups


def balanced_undersample(records: Sequence[LabeledSentence], seed: int) -> list[LabeledSentence]:
    """Randomly drop records so every label keeps exactly the minority-class count.

    Kept records stay in their original relative order.
    """
    if not records:
        raise CorpusError("cannot balance an empty record list")
    task = _single_task(records)
    groups = _indices_by_label(records)
    absent = [label.value for label in task.labels if label not in groups]
    if absent:
        raise CorpusError(f"balancing undefined: no records for labels {absent}")
    target = min(len(idx) for idx in groups.values())
    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for label in task.labels:
        idx = groups[label]
        chosen = rng.choice(len(idx), size=target, replace=False)
        keep.extend(idx[j] for j in chosen)
    return [records[i] for i in sorted(keep)]


SARCASM_SPLIT_COUNTS: dict[SplitName, int] = {
    SplitName.TRAIN: 9380,
    SplitName.FINETUNE_ENGLISH: 1171,
    SplitName.TEST: 1172,
}

SENTIMENT_FINETUNE_COUNTS: dict[Label, int] = {
    Label.POSITIVE: 644,
    Label.NEGATIVE: 646,
    Label.NEUTRAL: 645,
}

_SPLIT_ORDER = (SplitName.TRAIN, SplitName.FINETUNE_ENGLISH, SplitName.FINETUNE_HINGLISH, SplitName.TEST)


def make_splits(
    records: Sequence[LabeledSentence],
    targets: Mapping[SplitName, int | Mapping[Label, int]],
    seed: int,
) -> dict[SplitName, DatasetSplit]:
    """Shuffle within each class under ``seed`` and slice in train, fine-tune, test order.

    ``targets`` gives per-class counts for each split, either one integer for every
    label or an explicit ``{label: count}`` mapping. Records inside each split keep
    their corpus order.
    """
    if not records:
        raise CorpusError("cannot split an empty record list")
    task = _single_task(records)
    groups = _indices_by_label(records)
    names = [n for n in _SPLIT_ORDER if n in targets]

    def want(name: SplitName, label: Label) -> int:
        t = targets[name]
        return int(t) if isinstance(t, int) else int(t.get(label, 0))

    shortfall = {}
    for label in task.labels:
        need = sum(want(n, label) for n in names)
        have = len(groups.get(label, []))
        if need > have:
            shortfall[label.value] = need - have
    if shortfall:
        raise CorpusError(f"insufficient records for requested split counts; shortfall per class: {shortfall}")

    rng = np.random.default_rng(seed)
    assigned: dict[SplitName, list[int]] = {n: [] for n in names}
    for label in task.labels:
        idx = list(groups.get(label, []))
        order = rng.permutation(len(idx))
        pos = 0
        for name in names:
            k = want(name, label)
            assigned[name].extend(idx[j] for j in order[pos : pos + k])
            pos += k
    return {n: DatasetSplit(n, tuple(records[i] for i in sorted(assigned[n]))) for n in names}


def make_sarcasm_splits(
    records: Sequence[LabeledSentence],
    seed: int,
    counts: Mapping[SplitName, int | Mapping[Label, int]] | None = None,
) -> dict[SplitName, DatasetSplit]:
    return make_splits(records, counts or SARCASM_SPLIT_COUNTS, seed)


def make_sentiment_finetune_split(
    records: Sequence[LabeledSentence],
    seed: int,
    counts: Mapping[Label, int] | None = None,
) -> DatasetSplit:
    splits = make_splits(records, {SplitName.FINETUNE_ENGLISH: dict(counts or SENTIMENT_FINETUNE_COUNTS)}, seed)
    return splits[SplitName.FINETUNE_ENGLISH]


def parallel_split(
    split: DatasetSplit, counterpart: Iterable[LabeledSentence], name: SplitName | None = None
) -> DatasetSplit:
    """Select the records of ``counterpart`` with the same ids (and order) as ``split``."""
    by_id = {r.id: r for r in counterpart}
    missing = [i for i in split.ids if i not in by_id]
    if missing:
        raise CorpusError(f"{len(missing)} ids have no counterpart record, e.g. {missing[:5]}")
    out = []
    for rec in split.records:
        other = by_id[rec.id]
        if other.label is not rec.label:
            raise CorpusError(f"label mismatch for id {rec.id!r}: {rec.label.value} vs {other.label.value}")
        out.append(other)
    return DatasetSplit(name or split.name, tuple(out))


# ---------------------------------------------------------------------------
# Script detection
# ---------------------------------------------------------------------------


def _is_devanagari(ch: str) -> bool:
    return "ऀ" <= ch <= "ॿ"


def script_profile(text: str) -> ScriptProfile:
    latin = deva = other = 0
    for token in text.split():
        if any(_is_devanagari(ch) for ch in token):
            deva += 1
        elif any(ch.isascii() and ch.isalpha() for ch in token):
            latin += 1
        else:
            other += 1
    return ScriptProfile(latin, deva, other)
