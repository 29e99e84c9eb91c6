"""Small offline stand-ins for the external pieces: encoder weights, corpora, an inference server.

Everything here is deterministic and runs on a laptop CPU in seconds. It exists
for tests and walkthroughs, not for reproducing published numbers.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .corpus import Label, Lang, LabeledSentence, Task

SARCASTIC_WORDS = ["wow", "great", "totally", "genius", "shocking", "thrilled", "finally", "clearly"]
PLAIN_WORDS = ["report", "wins", "city", "council", "votes", "plan", "market", "rises"]
SENTIMENT_WORDS = {
    Label.POSITIVE: ["love", "happy", "good"],
    Label.NEGATIVE: ["hate", "sad", "bad"],
    Label.NEUTRAL: ["today", "went", "the"],
}
HINDI_WORDS = ["है", "हो", "गए", "के", "में", "का"]
FILLER = ["news", "man", "local", "area", "after", "new", "year", "people"]

_SPECIAL = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


def toy_vocab() -> list[str]:
    words = SARCASTIC_WORDS + PLAIN_WORDS + FILLER + HINDI_WORDS
    words += [w for ws in SENTIMENT_WORDS.values() for w in ws]
    letters = [chr(c) for c in range(ord("a"), ord("z") + 1)] + [str(d) for d in range(10)]
    return _SPECIAL + sorted(set(words)) + letters + ["##" + ch for ch in letters]


def make_toy_encoder(path: str | Path, dim: int = 16, layers: int = 1, seed: int = 0) -> Path:
    """Write a randomly initialised one-layer DistilBERT plus tokenizer to ``path``."""
    import torch
    from transformers import DistilBertConfig, DistilBertModel, DistilBertTokenizer

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    vocab = toy_vocab()
    tokenizer = DistilBertTokenizer(vocab={w: i for i, w in enumerate(vocab)})
    torch.manual_seed(seed)
    config = DistilBertConfig(
        vocab_size=len(vocab),
        dim=dim,
        hidden_dim=2 * dim,
        n_layers=layers,
        n_heads=2,
        max_position_embeddings=128,
        dropout=0.0,
        attention_dropout=0.0,
    )
    DistilBertModel(config).save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


def make_sarcasm_corpus(
    n_sarcastic: int, n_non: int, lang: Lang = Lang.ENGLISH, seed: int = 0, prefix: str = "h"
) -> list[LabeledSentence]:
    """Separable synthetic headlines; cue words give away the label.

    Each text ends with its index so texts are unique within a corpus.
    """
    rng = np.random.default_rng(seed)
    labels = [Label.SARCASTIC] * n_sarcastic + [Label.NON_SARCASTIC] * n_non
    rng.shuffle(labels)
    out = []
    for i, label in enumerate(labels):
        cues = SARCASTIC_WORDS if label is Label.SARCASTIC else PLAIN_WORDS
        words = list(rng.choice(cues, size=2)) + list(rng.choice(FILLER, size=3))
        if lang is Lang.HINGLISH:
            words += list(rng.choice(HINDI_WORDS, size=2))
        words.append(str(i))
        out.append(LabeledSentence(f"{prefix}{i}", " ".join(words), Task.SARCASM, lang, label))
    return out


def hinglish_counterpart(records: list[LabeledSentence], seed: int = 0) -> list[LabeledSentence]:
    rng = np.random.default_rng(seed)
    return [
        LabeledSentence(r.id, r.text + " " + " ".join(rng.choice(HINDI_WORDS, size=2)), r.task, Lang.HINGLISH, r.label)
        for r in records
    ]


def make_sentiment_corpus(counts: Mapping[Label, int], seed: int = 0, prefix: str = "t") -> list[LabeledSentence]:
    rng = np.random.default_rng(seed)
    labels = [label for label, n in counts.items() for _ in range(n)]
    rng.shuffle(labels)
    out = []
    for i, label in enumerate(labels):
        words = list(rng.choice(SENTIMENT_WORDS[label], size=2)) + list(rng.choice(FILLER, size=3))
        out.append(LabeledSentence(f"{prefix}{i}", " ".join(words), Task.SENTIMENT, Lang.ENGLISH, label))
    return out


# ---------------------------------------------------------------------------
# Canned inference server
# ---------------------------------------------------------------------------

_SENTENCE = re.compile(r'Sentence: "(.*)"\n', re.DOTALL)


def sentence_from_prompt(prompt: str) -> str | None:
    m = _SENTENCE.search(prompt)
    return m.group(1) if m else None


class CannedInferenceServer:
    """Local HTTP server answering ``/api/generate`` requests from a lookup table.

    ``responder(model, prompt)`` returns the generated text. Every request is
    counted in ``calls``. Use as a context manager.
    """

    def __init__(self, responder: Callable[[str, str], str], response_key: str = "response"):
        self.responder = responder
        self.response_key = response_key
        self.calls = 0
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with server._lock:
                    server.calls += 1
                try:
                    text = server.responder(body["model"], body["prompt"])
                    payload = json.dumps({server.response_key: text, "model": body["model"], "done": True}).encode()
                    self.send_response(200)
                except Exception as exc:  # surfaced to the client as HTTP 500
                    payload = json.dumps({"error": str(exc)}).encode()
                    self.send_response(500)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/api/generate"

    def __enter__(self) -> CannedInferenceServer:
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


def confusion_responder(
    gold: Mapping[str, Label], tp: int, fn: int, fp: int, tn: int
) -> dict[str, str]:
    """Canned answers per sentence text that reproduce a given confusion matrix.

    ``gold`` maps sentence text to its label; texts are assigned in sorted order.
    """
    pos = sorted(t for t, lab in gold.items() if lab is Label.SARCASTIC)
    neg = sorted(t for t, lab in gold.items() if lab is Label.NON_SARCASTIC)
    if (tp + fn, fp + tn) != (len(pos), len(neg)):
        raise ValueError("confusion counts do not match the gold class sizes")
    answers = {}
    for i, text in enumerate(pos):
        answers[text] = "Sarcastic" if i < tp else "Non-Sarcastic"
    for i, text in enumerate(neg):
        answers[text] = "Sarcastic" if i < fp else "Non-Sarcastic"
    return answers
