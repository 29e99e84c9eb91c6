"""Zero- and few-shot sarcasm classification with external LLMs.

Every sentence gets its own request. Responses are cached on disk keyed by
model, the hash of the fully rendered prompt and the sentence id, so a rerun
with the same template costs no calls.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Collection, Protocol

import httpx
import numpy as np

from .corpus import DatasetSplit, Label, Task
from .predictions import EntryStatus, PredictionEntry, PredictionSet
from .synthgen import TransportError

log = logging.getLogger(__name__)

PLACEHOLDER = "{sentence}"

CLASSIFICATION_PROMPT = (
    "You are a sarcasm detection model. You have to detect sarcasm in Hinglish sentences.\n"
    'Sentence: "{sentence}"\n'
    "Don't give any explanation and Respond ONLY with one label:\n"
    "- Sarcastic\n"
    "- Non-Sarcastic"
)


class PromptError(ValueError):
    pass


class Mode(str, enum.Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"


class ParsedLabel(str, enum.Enum):
    SARCASTIC = "sarcastic"
    NON_SARCASTIC = "non-sarcastic"
    UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class PromptTemplate:
    mode: Mode
    body: str = CLASSIFICATION_PROMPT
    exemplars: tuple[tuple[str, Label], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "exemplars", tuple(tuple(e) for e in self.exemplars))
        if self.body.count(PLACEHOLDER) != 1:
            raise PromptError(f"prompt body must contain exactly one {PLACEHOLDER} placeholder")
        if self.mode is Mode.ZERO_SHOT and self.exemplars:
            raise PromptError("zero-shot templates take no exemplars")
        if self.mode is Mode.FEW_SHOT:
            if not self.exemplars:
                raise PromptError("few-shot templates need exemplars")
            counts: dict[Label, int] = {}
            for _, label in self.exemplars:
                counts[label] = counts.get(label, 0) + 1
            if len(counts) < 2 or len(set(counts.values())) != 1:
                raise PromptError(f"few-shot exemplars must be class-balanced, got { {k.value: v for k, v in counts.items()} }")


@dataclass(frozen=True)
class RawLLMResponse:
    model_id: str
    sentence_id: str
    text: str
    latency_ms: int


def render_prompt(template: PromptTemplate, sentence: str) -> str:
    """Substitute ``sentence`` into the template exactly once.

    Few-shot exemplars are inserted as ``Example: <text> → <label>`` lines just
    before the line holding the target sentence.
    """
    head, tail = template.body.split(PLACEHOLDER)
    if template.mode is Mode.FEW_SHOT:
        cut = head.rfind("\n") + 1
        examples = "".join(f"Example: {text} → {label.display}\n" for text, label in template.exemplars)
        head = head[:cut] + examples + head[cut:]
    return head + sentence + tail


_NON_SARCASTIC = re.compile(r"\bnon[\s\-_‐‑–—]*sarcastic\b", re.IGNORECASE)
_SARCASTIC = re.compile(r"\bsarcastic\b", re.IGNORECASE)


def parse_label(raw: str) -> ParsedLabel:
    """Map free-form model output to a label; ambiguous or empty output is UNPARSEABLE.

    The non-sarcastic pattern is matched and removed first because it contains
    "sarcastic" as a substring. Underscores count as separators, not word characters.
    """
    text = str(raw).replace("_", " ")
    has_non = bool(_NON_SARCASTIC.search(text))
    rest = _NON_SARCASTIC.sub(" ", text)
    has_sarc = bool(_SARCASTIC.search(rest))
    if has_non == has_sarc:
        return ParsedLabel.UNPARSEABLE
    return ParsedLabel.NON_SARCASTIC if has_non else ParsedLabel.SARCASTIC


def to_label(parsed: ParsedLabel) -> Label | None:
    return {ParsedLabel.SARCASTIC: Label.SARCASTIC, ParsedLabel.NON_SARCASTIC: Label.NON_SARCASTIC}.get(parsed)


class InferenceClient(Protocol):
    def generate(self, model_id: str, prompt: str) -> str: ...


class HttpInferenceClient:
    """Client for an Ollama-style ``/api/generate`` endpoint."""

    def __init__(
        self,
        endpoint: str = "http://localhost:11434/api/generate",
        response_key: str = "response",
        options: dict | None = None,
        timeout: float = 120.0,
    ):
        self.endpoint = endpoint
        self.response_key = response_key
        self.options = {"temperature": 0} if options is None else options
        self.timeout = timeout
        self._client = httpx.Client(timeout=timeout)

    def generate(self, model_id: str, prompt: str) -> str:
        payload = {"model": model_id, "prompt": prompt, "stream": False}
        if self.options:
            payload["options"] = self.options
        try:
            resp = self._client.post(self.endpoint, json=payload)
            resp.raise_for_status()
            return str(resp.json()[self.response_key])
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise TransportError(f"inference request failed: {exc}") from exc

    def close(self) -> None:
        self._client.close()


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL cache of raw responses; later lines win on reload."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str, str], RawLLMResponse] = {}
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        key = (obj["model_id"], obj["prompt_sha256"], obj["sentence_id"])
                        self._entries[key] = RawLLMResponse(
                            obj["model_id"], obj["sentence_id"], obj["text"], obj["latency_ms"]
                        )

    def get(self, model_id: str, prompt: str, sentence_id: str) -> RawLLMResponse | None:
        return self._entries.get((model_id, prompt_hash(prompt), sentence_id))

    def put(self, prompt: str, response: RawLLMResponse) -> None:
        h = prompt_hash(prompt)
        with self._lock:
            self._entries[(response.model_id, h, response.sentence_id)] = response
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({**asdict(response), "prompt_sha256": h}, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class RunStats:
    calls: int = 0
    cache_hits: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def bump(self, calls: int = 0, hits: int = 0) -> None:
        with self._lock:
            self.calls += calls
            self.cache_hits += hits


def _classify_one(
    client: InferenceClient,
    model_id: str,
    prompt: str,
    sentence_id: str,
    cache: ResponseCache,
    unparseable_retries: int,
    transport_retries: int,
    stats: RunStats,
) -> PredictionEntry:
    cached = cache.get(model_id, prompt, sentence_id)
    if cached is not None:
        stats.bump(hits=1)
        parsed = parse_label(cached.text)
        status = EntryStatus.OK if parsed is not ParsedLabel.UNPARSEABLE else EntryStatus.UNPARSEABLE
        return PredictionEntry(sentence_id, to_label(parsed), None, status)

    response = None
    for _ in range(unparseable_retries + 1):
        text = None
        for attempt in range(transport_retries + 1):
            start = time.perf_counter()
            try:
                stats.bump(calls=1)
                text = client.generate(model_id, prompt)
                break
            except TransportError as exc:
                log.warning("%s/%s attempt %d failed: %s", model_id, sentence_id, attempt + 1, exc)
        if text is None:
            return PredictionEntry(sentence_id, None, None, EntryStatus.ERROR)
        latency = int(round((time.perf_counter() - start) * 1000))
        response = RawLLMResponse(model_id, sentence_id, text, latency)
        if parse_label(text) is not ParsedLabel.UNPARSEABLE:
            break
    cache.put(prompt, response)
    parsed = parse_label(response.text)
    status = EntryStatus.OK if parsed is not ParsedLabel.UNPARSEABLE else EntryStatus.UNPARSEABLE
    return PredictionEntry(sentence_id, to_label(parsed), None, status)


def classify_dataset(
    client: InferenceClient,
    model_id: str,
    template: PromptTemplate,
    split: DatasetSplit,
    cache: ResponseCache | None = None,
    unparseable_retries: int = 2,
    transport_retries: int = 2,
    parallelism: int = 1,
    stats: RunStats | None = None,
) -> PredictionSet:
    """Classify every sentence of ``split``, one request per sentence.

    Sequential unless ``parallelism > 1``; the output order follows the split
    either way. Transport failures become ``ERROR`` entries rather than aborting.
    """
    if split.task not in (Task.SARCASM, None):
        raise PromptError(f"LLM classification expects a sarcasm split, got {split.task.value}")
    cache = cache if cache is not None else ResponseCache()
    stats = stats if stats is not None else RunStats()

    def one(rec):
        prompt = render_prompt(template, rec.text)
        return _classify_one(client, model_id, prompt, rec.id, cache, unparseable_retries, transport_retries, stats)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            entries = list(pool.map(one, split.records))
    else:
        entries = [one(r) for r in split.records]
    return PredictionSet(model_id, f"{split.name.value}:{split.descriptor}:{template.mode.value}", entries)


def build_fewshot_exemplars(
    pool: DatasetSplit,
    k_per_class: int,
    seed: int,
    exclude_ids: Collection[str] = (),
) -> list[tuple[str, Label]]:
    """Draw ``k_per_class`` exemplars per label, interleaved Sarcastic/Non-Sarcastic."""
    overlap = set(pool.ids) & set(exclude_ids)
    if overlap:
        raise PromptError(f"exemplar pool overlaps the test split on {len(overlap)} ids, e.g. {sorted(overlap)[:5]}")
    rng = np.random.default_rng(seed)
    per_label: list[list] = []
    for label in (Label.SARCASTIC, Label.NON_SARCASTIC):
        members = [r for r in pool.records if r.label is label]
        if len(members) < k_per_class:
            raise PromptError(f"pool has {len(members)} {label.value} records, need {k_per_class}")
        chosen = sorted(rng.choice(len(members), size=k_per_class, replace=False).tolist())
        per_label.append([members[i] for i in chosen])
    return [(r.text, r.label) for pair in zip(*per_label) for r in pair]


def run_report(preds: PredictionSet, stats: RunStats | None = None) -> dict:
    counts = preds.status_counts()
    report = {"model_id": preds.model_id, "dataset_id": preds.dataset_id, "total": len(preds), **counts}
    if stats is not None:
        report["calls"] = stats.calls
        report["cache_hits"] = stats.cache_hits
    return report
