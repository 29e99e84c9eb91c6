from __future__ import annotations

import csv
import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarcbench.corpus import Lang, Task
from sarcbench.synthgen import (
    TRANSLATION_PROMPT_HEADER,
    AuditEntry,
    HttpTranslationClient,
    TranslationBatchRequest,
    TranslationCache,
    TranslationError,
    TranslationRecord,
    TranslationStatus,
    TransportError,
    Verdict,
    attach_audit,
    audit_statistics,
    build_translation_prompt,
    load_translations,
    mark_manual,
    parse_numbered_response,
    read_audit_csv,
    sample_for_audit,
    sample_with_quotas,
    save_translations,
    to_hinglish_records,
    translate_batch,
    translate_corpus,
    write_audit_sheet,
)
from sarcbench.toy import CannedInferenceServer, make_sarcasm_corpus

OK, REFUSED, ERROR, MANUAL = (TranslationStatus.OK, TranslationStatus.REFUSED,
                              TranslationStatus.ERROR, TranslationStatus.MANUAL)
SAT, UNSAT = Verdict.SATISFACTORY, Verdict.UNSATISFACTORY


class ScriptedClient:
    """Returns queued responses (or raises queued exceptions) and counts calls."""

    model = "fake-translator"

    def __init__(self, *responses):
        self.responses = list(responses)
        self.calls = 0
        self.prompts = []

    def generate(self, prompt):
        self.calls += 1
        self.prompts.append(prompt)
        item = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(item, Exception):
            raise item
        return item(prompt) if callable(item) else item


def echo_code_mixed(prompt):
    """Answer every numbered line with '<text> हो गया'."""
    lines = prompt.split("\n")[1:]
    return "\n".join(f"{ln.split('. ', 1)[0]}. {ln.split('. ', 1)[1]} हो गया" for ln in lines)


# ---------------------------------------------------------------------------
# prompt building and parsing
# ---------------------------------------------------------------------------


def test_prompt_header_is_verbatim():
    assert TRANSLATION_PROMPT_HEADER.startswith(
        "Translate the following sentences into Hindi-English code-mixed sentences."
    )
    assert "‘Weekend plans got cancelled.’ → ‘Weekend plans cancel हो गए’" in TRANSLATION_PROMPT_HEADER


def test_prompt_single_sentence():
    assert build_translation_prompt([("a", "hello")]) == TRANSLATION_PROMPT_HEADER + "\n1. hello"


def test_prompt_numbering():
    lines = build_translation_prompt([("a", "x"), ("b", "y"), ("c", "z")]).split("\n")[1:]
    assert lines == ["1. x", "2. y", "3. z"]


def test_prompt_empty_is_an_error():
    with pytest.raises(TranslationError):
        build_translation_prompt([])


def test_parse_numbered_response_variants():
    text = "Here you go:\n1. first\n 2) ‘second’\n\n3.   third  \n2. duplicate"
    assert parse_numbered_response(text) == {1: "first", 2: "second", 3: "third"}


# ---------------------------------------------------------------------------
# translate_batch
# ---------------------------------------------------------------------------


def test_fig2_exemplar_translates_ok():
    client = ScriptedClient("1. Weekend plans cancel हो गए")
    req = TranslationBatchRequest((("w", "Weekend plans got cancelled."),))
    [rec] = translate_batch(client, req)
    assert rec == TranslationRecord("w", "Weekend plans got cancelled.", "Weekend plans cancel हो गए", OK)


def test_missing_line_is_refused():
    client = ScriptedClient("1. ek हो\n2. do हो")
    req = TranslationBatchRequest((("a", "one"), ("b", "two"), ("c", "three")))
    out = translate_batch(client, req)
    assert [r.status for r in out] == [OK, OK, REFUSED]
    assert out[2].translated_text is None


def test_refusal_phrase_is_refused():
    client = ScriptedClient("1. I can't translate this content.\n2. theek है")
    out = translate_batch(client, TranslationBatchRequest((("a", "x"), ("b", "y"))))
    assert [r.status for r in out] == [REFUSED, OK]
    custom = translate_batch(
        ScriptedClient("1. NOPE\n2. theek है"), TranslationBatchRequest((("a", "x"), ("b", "y"))), refusal_phrases=["nope"]
    )
    assert [r.status for r in custom] == [REFUSED, OK]


def test_transport_failure_after_retries_gives_error_records():
    client = ScriptedClient(TransportError("timeout"))
    req = TranslationBatchRequest((("a", "x"), ("b", "y"), ("c", "z")), batch_size=2)
    out = translate_batch(client, req, max_retries=2)
    assert [r.status for r in out] == [ERROR] * 3
    assert client.calls == 2 * 3  # two chunks, three attempts each


def test_retry_recovers():
    client = ScriptedClient(TransportError("flaky"), "1. ok हो")
    [rec] = translate_batch(client, TranslationBatchRequest((("a", "x"),)), max_retries=1)
    assert rec.status is OK and client.calls == 2


def test_warning_when_no_devanagari(caplog):
    with caplog.at_level(logging.WARNING, logger="sarcbench.synthgen"):
        [rec] = translate_batch(ScriptedClient("1. all latin words"), TranslationBatchRequest((("a", "x"),)))
    assert rec.status is OK
    assert "no Devanagari" in caplog.text


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 45), batch=st.integers(1, 10), parallel=st.integers(1, 3))
def test_order_preserved_and_nothing_lost(n, batch, parallel):
    sentences = tuple((f"id{i}", f"sentence {i}") for i in range(n))
    out = translate_batch(ScriptedClient(echo_code_mixed), TranslationBatchRequest(sentences, batch_size=batch),
                          parallelism=parallel)
    assert [r.source_id for r in out] == [s[0] for s in sentences]
    assert all(r.translated_text == f"sentence {i} हो गया" for i, r in enumerate(out))


def test_request_validation():
    with pytest.raises(TranslationError):
        TranslationBatchRequest(())
    with pytest.raises(TranslationError):
        TranslationBatchRequest((("a", "x"),), batch_size=0)


# ---------------------------------------------------------------------------
# cache, manual fill, dataset building
# ---------------------------------------------------------------------------


def test_cache_makes_rerun_free_and_identical(tmp_path):
    sentences = [(f"s{i}", f"line {i}") for i in range(7)]
    cache_path = tmp_path / "cache.jsonl"
    first_client = ScriptedClient(echo_code_mixed)
    first = translate_corpus(first_client, sentences, TranslationCache(cache_path), batch_size=3)
    save_translations(first, tmp_path / "a.jsonl")

    second_client = ScriptedClient(echo_code_mixed)
    second = translate_corpus(second_client, sentences, TranslationCache(cache_path), batch_size=3)
    save_translations(second, tmp_path / "b.jsonl")
    assert first_client.calls == 3 and second_client.calls == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert load_translations(tmp_path / "a.jsonl") == first


def test_error_records_are_not_cached(tmp_path):
    cache = TranslationCache(tmp_path / "c.jsonl")
    translate_corpus(ScriptedClient(TransportError("down")), [("a", "x")], cache, max_retries=0)
    assert len(cache) == 0
    [rec] = translate_corpus(ScriptedClient("1. x हो"), [("a", "x")], cache)
    assert rec.status is OK


def test_http_client_against_local_server(monkeypatch):
    monkeypatch.setenv("TEST_TRANSLATION_KEY", "secret")
    with CannedInferenceServer(lambda model, prompt: f"1. via {model} हो") as server:
        client = HttpTranslationClient(server.endpoint, "m1", api_key_env="TEST_TRANSLATION_KEY")
        [rec] = translate_batch(client, TranslationBatchRequest((("a", "x"),)))
    assert rec.translated_text == "via m1 हो"
    monkeypatch.delenv("TEST_TRANSLATION_KEY")
    with pytest.raises(TranslationError, match="TEST_TRANSLATION_KEY"):
        HttpTranslationClient("http://127.0.0.1:9", "m", api_key_env="TEST_TRANSLATION_KEY")


def test_http_client_transport_error():
    client = HttpTranslationClient("http://127.0.0.1:9/none", "m", timeout=0.5)
    with pytest.raises(TransportError):
        client.generate("hi")


def test_mark_manual():
    refused = TranslationRecord("a", "x", None, REFUSED)
    assert mark_manual(refused, "haath से") == TranslationRecord("a", "x", "haath से", MANUAL)
    with pytest.raises(TranslationError):
        mark_manual(TranslationRecord("a", "x", "y", OK), "z")
    with pytest.raises(TranslationError):
        mark_manual(TranslationRecord("a", "x", None, ERROR), "")


def test_record_invariants():
    with pytest.raises(TranslationError):
        TranslationRecord("a", "x", None, OK)
    with pytest.raises(TranslationError):
        TranslationRecord("a", "x", "y", REFUSED)


def test_to_hinglish_records_carries_labels():
    sources = make_sarcasm_corpus(2, 2)
    translations = [TranslationRecord(s.id, s.text, s.text + " है", OK) for s in sources[:3]]
    translations.append(TranslationRecord(sources[3].id, sources[3].text, None, REFUSED))
    out = to_hinglish_records(translations, sources)
    assert [r.id for r in out] == [s.id for s in sources[:3]]
    assert all(r.lang is Lang.HINGLISH and r.task is Task.SARCASM for r in out)
    assert [r.label for r in out] == [s.label for s in sources[:3]]


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------


def translated(n, prefix="r"):
    return [TranslationRecord(f"{prefix}{i}", f"src {i}", f"tgt {i} है", OK) for i in range(n)]


def test_sample_for_audit():
    pool = translated(1000) + [TranslationRecord("x", "s", None, REFUSED)]
    sample = sample_for_audit(pool, 350, seed=5)
    assert len({r.source_id for r in sample}) == 350
    assert "x" not in {r.source_id for r in sample}
    assert sample_for_audit(pool, 350, seed=5) == sample
    assert sorted(sample_for_audit(pool, 1000, seed=1), key=lambda r: r.source_id) == sorted(
        pool[:1000], key=lambda r: r.source_id
    )
    with pytest.raises(TranslationError):
        sample_for_audit(pool, 1001, seed=0)


def test_sample_with_quotas():
    groups = {"sarcasm": translated(400, "s"), "sentiment": translated(300, "t")}
    sample = sample_with_quotas(groups, {"sarcasm": 175, "sentiment": 175}, seed=2)
    assert len(sample) == 350
    assert sum(r.source_id.startswith("s") for r in sample) == 175


def test_audit_entry_requires_adjudication_on_disagreement():
    assert AuditEntry(SAT, SAT).adjudicated is SAT
    with pytest.raises(TranslationError):
        AuditEntry(SAT, UNSAT)
    assert AuditEntry(SAT, UNSAT, UNSAT).complete


def test_audit_agreement_297_of_350():
    recs = translated(350)
    entries = {}
    for i, r in enumerate(recs):
        if i < 297:
            entries[r.source_id] = AuditEntry(SAT, SAT)
        else:
            entries[r.source_id] = AuditEntry(SAT, UNSAT, SAT if i % 2 else UNSAT)
    stats = audit_statistics(attach_audit(recs, entries))
    assert stats.n == 350
    assert stats.raw_agreement == pytest.approx(297 / 350)
    assert round(stats.raw_agreement, 3) == 0.849


def test_audit_all_satisfactory():
    recs = attach_audit(translated(20), {f"r{i}": AuditEntry(SAT, SAT) for i in range(20)})
    stats = audit_statistics(recs)
    assert (stats.raw_agreement, stats.unsatisfactory_rate) == (1.0, 0.0)


def test_audit_unsatisfactory_rate_fifteen_percent():
    entries = {f"r{i}": AuditEntry(UNSAT, UNSAT) if i < 15 else AuditEntry(SAT, SAT) for i in range(100)}
    stats = audit_statistics(attach_audit(translated(100), entries))
    assert stats.unsatisfactory_rate == 0.15


def test_audit_missing_annotations_lists_ids():
    recs = translated(3)
    recs = attach_audit(recs, {"r0": AuditEntry(SAT, SAT), "r1": AuditEntry(SAT, None), "r2": AuditEntry(SAT, SAT)})
    recs.append(translated(4)[3])
    with pytest.raises(TranslationError, match=r"\['r1', 'r3'\]"):
        audit_statistics(recs)


def test_audit_sheet_round_trip(tmp_path):
    recs = translated(3)
    write_audit_sheet(recs, tmp_path / "sheet.csv")
    rows = list(csv.DictReader(open(tmp_path / "sheet.csv", encoding="utf-8")))
    assert [r["id"] for r in rows] == ["r0", "r1", "r2"]
    rows[0].update(annotator_a="Satisfactory", annotator_b="Satisfactory")
    rows[1].update(annotator_a="Satisfactory", annotator_b="Un-satisfactory", adjudicated="unsatisfactory")
    rows[2].update(annotator_a="unsatisfactory", annotator_b="unsatisfactory")
    with open(tmp_path / "done.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    stats = audit_statistics(attach_audit(recs, read_audit_csv(tmp_path / "done.csv")))
    assert stats.raw_agreement == pytest.approx(2 / 3)
    assert stats.unsatisfactory_rate == pytest.approx(2 / 3)

