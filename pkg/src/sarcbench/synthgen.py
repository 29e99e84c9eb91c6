"""Synthetic Hinglish generation through a translation LLM, plus the translation audit.

Sentences go out in numbered batches; response lines are matched back by number.
Anything the model declines or drops is marked ``REFUSED`` so a human can supply
the translation with :func:`mark_manual`.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import httpx
import numpy as np

from .corpus import LabeledSentence, Lang, script_profile

log = logging.getLogger(__name__)

TRANSLATION_PROMPT_HEADER = (
    "Translate the following sentences into Hindi-English code-mixed sentences. "
    "Use Hindi/Devanagari script for words written using Devanagari font, if any, in the original text. "
    "Example: ‘Weekend plans got cancelled.’ → ‘Weekend plans cancel हो गए’"
)

DEFAULT_REFUSAL_PHRASES = (
    "i can't",
    "i cannot",
    "i'm unable",
    "i am unable",
    "i'm not able",
    "i won't",
    "cannot assist",
    "can't help with",
    "not able to help",
    "against my guidelines",
)


class TranslationError(RuntimeError):
    pass


class TransportError(RuntimeError):
    """Network or service failure talking to an external model endpoint."""


class TranslationStatus(str, enum.Enum):
    OK = "ok"
    REFUSED = "refused"
    ERROR = "error"
    MANUAL = "manual"


class Verdict(str, enum.Enum):
    SATISFACTORY = "satisfactory"
    UNSATISFACTORY = "unsatisfactory"


@dataclass(frozen=True)
class AuditEntry:
    annotator_a: Verdict | None
    annotator_b: Verdict | None
    adjudicated: Verdict | None = None

    def __post_init__(self) -> None:
        if self.annotator_a and self.annotator_b and self.adjudicated is None:
            if self.annotator_a is not self.annotator_b:
                raise TranslationError("annotators disagree; an adjudicated verdict is required")
            object.__setattr__(self, "adjudicated", self.annotator_a)

    @property
    def complete(self) -> bool:
        return None not in (self.annotator_a, self.annotator_b, self.adjudicated)


@dataclass(frozen=True)
class TranslationRecord:
    source_id: str
    source_text: str
    translated_text: str | None
    status: TranslationStatus
    audit: AuditEntry | None = None

    def __post_init__(self) -> None:
        if self.status in (TranslationStatus.OK, TranslationStatus.MANUAL):
            if not (self.translated_text and self.translated_text.strip()):
                raise TranslationError(f"{self.source_id}: status {self.status.value} needs non-empty translated text")
        elif self.translated_text is not None:
            raise TranslationError(f"{self.source_id}: status {self.status.value} must not carry a translation")

    def to_json(self) -> dict:
        audit = None
        if self.audit:
            audit = {k: (v.value if v else None) for k, v in vars(self.audit).items()}
        return {
            "source_id": self.source_id,
            "source_text": self.source_text,
            "translated_text": self.translated_text,
            "status": self.status.value,
            "audit": audit,
        }

    @classmethod
    def from_json(cls, obj: dict) -> TranslationRecord:
        audit = None
        if obj.get("audit"):
            audit = AuditEntry(**{k: (Verdict(v) if v else None) for k, v in obj["audit"].items()})
        return cls(obj["source_id"], obj["source_text"], obj.get("translated_text"), TranslationStatus(obj["status"]), audit)


@dataclass(frozen=True)
class TranslationBatchRequest:
    sentences: tuple[tuple[str, str], ...]
    prompt_header: str = TRANSLATION_PROMPT_HEADER
    batch_size: int = 20

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(tuple(s) for s in self.sentences))
        if not self.sentences:
            raise TranslationError("translation request has no sentences")
        if self.batch_size < 1:
            raise TranslationError("batch_size must be >= 1")


class TranslationClient(Protocol):
    model: str

    def generate(self, prompt: str) -> str: ...


class HttpTranslationClient:
    """POSTs ``{"model", "prompt"}`` JSON and reads generated text from ``response_key``."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str | None = None,
        response_key: str = "response",
        timeout: float = 120.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self.response_key = response_key
        self.timeout = timeout
        self._headers = {}
        if api_key_env:
            key = os.environ.get(api_key_env)
            if not key:
                raise TranslationError(f"environment variable {api_key_env} is not set")
            self._headers["Authorization"] = f"Bearer {key}"

    def generate(self, prompt: str) -> str:
        try:
            resp = httpx.post(
                self.endpoint,
                json={"model": self.model, "prompt": prompt},
                headers=self._headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            return str(resp.json()[self.response_key])
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise TransportError(f"translation request failed: {exc}") from exc


def build_translation_prompt(
    sentences: Sequence[tuple[str, str]], header: str = TRANSLATION_PROMPT_HEADER
) -> str:
    if not sentences:
        raise TranslationError("cannot build a prompt for zero sentences")
    lines = [f"{i}. {text}" for i, (_, text) in enumerate(sentences, start=1)]
    return header + "\n" + "\n".join(lines)


_NUMBERED = re.compile(r"^\s*(\d+)\s*[.)]\s*(.*?)\s*$")


def parse_numbered_response(text: str) -> dict[int, str]:
    """Map list numbers to line text; the first occurrence of a number wins."""
    out: dict[int, str] = {}
    for line in text.splitlines():
        m = _NUMBERED.match(line)
        if m and int(m.group(1)) not in out:
            out[int(m.group(1))] = m.group(2).strip().strip("\"'‘’“”").strip()
    return out


def _looks_refused(text: str, phrases: Iterable[str]) -> bool:
    low = text.casefold()
    return any(p.casefold() in low for p in phrases)


def _warn_if_not_code_mixed(record: TranslationRecord) -> None:
    if record.status is TranslationStatus.OK and script_profile(record.translated_text).devanagari_tokens == 0:
        log.warning("translation of %s contains no Devanagari tokens: %r", record.source_id, record.translated_text)


def _translate_chunk(
    client: TranslationClient,
    chunk: Sequence[tuple[str, str]],
    header: str,
    refusal_phrases: Sequence[str],
    max_retries: int,
    retry_wait: float,
) -> list[TranslationRecord]:
    prompt = build_translation_prompt(chunk, header)
    response = None
    for attempt in range(max_retries + 1):
        try:
            response = client.generate(prompt)
            break
        except TransportError as exc:
            log.warning("translation attempt %d/%d failed: %s", attempt + 1, max_retries + 1, exc)
            if attempt < max_retries and retry_wait:
                time.sleep(retry_wait * (2**attempt))
    if response is None:
        return [TranslationRecord(sid, text, None, TranslationStatus.ERROR) for sid, text in chunk]

    numbered = parse_numbered_response(response)
    records = []
    for i, (sid, text) in enumerate(chunk, start=1):
        line = numbered.get(i)
        if not line or _looks_refused(line, refusal_phrases):
            rec = TranslationRecord(sid, text, None, TranslationStatus.REFUSED)
        else:
            rec = TranslationRecord(sid, text, line, TranslationStatus.OK)
            _warn_if_not_code_mixed(rec)
        records.append(rec)
    return records


def translate_batch(
    client: TranslationClient,
    request: TranslationBatchRequest,
    refusal_phrases: Sequence[str] = DEFAULT_REFUSAL_PHRASES,
    max_retries: int = 3,
    retry_wait: float = 0.0,
    parallelism: int = 1,
) -> list[TranslationRecord]:
    """Translate every sentence of ``request``; output order always matches input order.

    Transport failures are retried ``max_retries`` times per chunk, after which the
    chunk's records come back with status ``ERROR``. The batch itself never aborts.
    """
    s = request.sentences
    chunks = [s[i : i + request.batch_size] for i in range(0, len(s), request.batch_size)]

    def run(chunk):
        return _translate_chunk(client, chunk, request.prompt_header, refusal_phrases, max_retries, retry_wait)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    return [rec for chunk in results for rec in chunk]


class TranslationCache:
    """Append-only JSONL store of translation records keyed by model, header and source text."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        self._entries[obj["key"]] = obj["record"]

    @staticmethod
    def key(model: str, header: str, source_id: str, source_text: str) -> str:
        digest = hashlib.sha256(f"{model}\x00{header}\x00{source_text}".encode()).hexdigest()
        return f"{source_id}:{digest}"

    def get(self, key: str) -> TranslationRecord | None:
        obj = self._entries.get(key)
        return TranslationRecord.from_json(obj) if obj else None

    def put(self, key: str, record: TranslationRecord) -> None:
        obj = record.to_json()
        with self._lock:
            self._entries[key] = obj
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "record": obj}, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


def translate_corpus(
    client: TranslationClient,
    sentences: Sequence[tuple[str, str]],
    cache: TranslationCache | None = None,
    batch_size: int = 20,
    header: str = TRANSLATION_PROMPT_HEADER,
    refusal_phrases: Sequence[str] = DEFAULT_REFUSAL_PHRASES,
    max_retries: int = 3,
    retry_wait: float = 0.0,
    parallelism: int = 1,
) -> list[TranslationRecord]:
    """Cache-aware wrapper over :func:`translate_batch`.

    Only sentences without a cached record are sent. ``ERROR`` records are never
    cached so a later run retries them.
    """
    model = getattr(client, "model", "")
    keys = [TranslationCache.key(model, header, sid, text) for sid, text in sentences]
    out: list[TranslationRecord | None] = [cache.get(k) if cache else None for k in keys]
    todo = [i for i, rec in enumerate(out) if rec is None]
    if todo:
        request = TranslationBatchRequest(tuple(sentences[i] for i in todo), header, batch_size)
        fresh = translate_batch(client, request, refusal_phrases, max_retries, retry_wait, parallelism)
        for i, rec in zip(todo, fresh):
            out[i] = rec
            if cache is not None and rec.status is not TranslationStatus.ERROR:
                cache.put(keys[i], rec)
    return out  # type: ignore[return-value]


def mark_manual(record: TranslationRecord, text: str) -> TranslationRecord:
    if record.status not in (TranslationStatus.REFUSED, TranslationStatus.ERROR):
        raise TranslationError(f"{record.source_id}: only refused or errored records take manual translations")
    return replace(record, translated_text=text, status=TranslationStatus.MANUAL)


def to_hinglish_records(
    translations: Sequence[TranslationRecord], sources: Sequence[LabeledSentence]
) -> list[LabeledSentence]:
    """Build Hinglish dataset records carrying the labels of their English sources.

    Records without a usable translation are skipped with a warning.
    """
    by_id = {t.source_id: t for t in translations}
    out = []
    for src in sources:
        t = by_id.get(src.id)
        if t is None or t.translated_text is None:
            log.warning("no translation available for %s; needs manual translation", src.id)
            continue
        out.append(LabeledSentence(src.id, t.translated_text.strip(), src.task, Lang.HINGLISH, src.label))
    return out


def save_translations(records: Iterable[TranslationRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def load_translations(path: str | Path) -> list[TranslationRecord]:
    with open(path, encoding="utf-8") as fh:
        return [TranslationRecord.from_json(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditStats:
    n: int
    raw_agreement: float
    unsatisfactory_rate: float


def sample_for_audit(records: Sequence[TranslationRecord], n: int, seed: int) -> list[TranslationRecord]:
    """Uniform sample without replacement among records that have a translation."""
    pool = [r for r in records if r.translated_text is not None]
    if n > len(pool):
        raise TranslationError(f"requested {n} audit samples but only {len(pool)} translated records exist")
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(pool), size=n, replace=False).tolist())
    return [pool[i] for i in chosen]


def sample_with_quotas(
    groups: Mapping[str, Sequence[TranslationRecord]], quotas: Mapping[str, int], seed: int
) -> list[TranslationRecord]:
    """Per-corpus audit sampling, e.g. ``{"sarcasm": 175, "sentiment": 175}``."""
    out = []
    for offset, name in enumerate(sorted(quotas)):
        out.extend(sample_for_audit(groups[name], quotas[name], seed + offset))
    return out


AUDIT_COLUMNS = ("id", "annotator_a", "annotator_b", "adjudicated")


def write_audit_sheet(records: Sequence[TranslationRecord], path: str | Path) -> None:
    """CSV for annotators: the audit columns plus source and translation text for reference."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AUDIT_COLUMNS + ("source_text", "translated_text"))
        for r in records:
            w.writerow([r.source_id, "", "", "", r.source_text, r.translated_text])


def read_audit_csv(path: str | Path) -> dict[str, AuditEntry]:
    def verdict(value: str | None) -> Verdict | None:
        value = (value or "").strip().lower().replace("-", "")
        return Verdict(value) if value else None

    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["id"]] = AuditEntry(verdict(row["annotator_a"]), verdict(row["annotator_b"]), verdict(row["adjudicated"]))
    return out


def attach_audit(records: Sequence[TranslationRecord], entries: Mapping[str, AuditEntry]) -> list[TranslationRecord]:
    return [replace(r, audit=entries[r.source_id]) for r in records if r.source_id in entries]


def audit_statistics(records: Sequence[TranslationRecord]) -> AuditStats:
    bad = [r.source_id for r in records if r.audit is None or not r.audit.complete]
    if bad:
        raise TranslationError(f"records missing annotations: {bad}")
    if not records:
        raise TranslationError("no audited records")
    agree = sum(r.audit.annotator_a is r.audit.annotator_b for r in records)
    unsat = sum(r.audit.adjudicated is Verdict.UNSATISFACTORY for r in records)
    return AuditStats(len(records), agree / len(records), unsat / len(records))
