from __future__ import annotations

import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarcbench.corpus import (
    CorpusError,
    DatasetSplit,
    Label,
    Lang,
    LabeledSentence,
    SplitName,
    Task,
    balanced_undersample,
    load_jsonl,
    load_split,
    make_sarcasm_splits,
    make_sentiment_finetune_split,
    make_splits,
    parallel_split,
    read_split_manifest,
    save_split,
    script_profile,
    write_split_manifest,
)
from sarcbench.toy import hinglish_counterpart, make_sarcasm_corpus, make_sentiment_corpus

S, N = Label.SARCASTIC, Label.NON_SARCASTIC


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def row(i, label="sarcastic", text=None, lang="en"):
    return json.dumps({"id": i, "text": text if text is not None else f"headline {i}", "label": label, "lang": lang})


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def test_load_jsonl_reads_and_strips(tmp_path):
    p = write_lines(tmp_path / "d.jsonl", [row("a", text="  hello  "), "", row("b", "non-sarcastic")])
    recs = load_jsonl(p, Task.SARCASM)
    assert [r.id for r in recs] == ["a", "b"]
    assert recs[0].text == "hello"
    assert recs[1].label is N


@pytest.mark.parametrize(
    "bad, message",
    [
        ('{"id": "x", "text": ', r":2: malformed JSON"),
        (json.dumps({"id": "x", "text": "t", "lang": "en"}), r":2: missing keys \['label'\]"),
        (row("x", "ironic"), r":2: .*unknown label value 'ironic'"),
        (row("x", lang="fr"), r":2: unknown lang 'fr'"),
        (row("x", text="   "), r":2: .*text is empty"),
        (row("x", "positive"), r":2: .*does not belong to task"),
        (row("a"), r"duplicate id 'a' on lines 1 and 2"),
    ],
)
def test_load_jsonl_errors_name_the_line(tmp_path, bad, message):
    p = write_lines(tmp_path / "d.jsonl", [row("a"), bad])
    with pytest.raises(CorpusError, match=message):
        load_jsonl(p, Task.SARCASM)


def test_split_round_trip(tmp_path):
    recs = make_sarcasm_corpus(4, 4, lang=Lang.HINGLISH)
    split = DatasetSplit(SplitName.TEST, tuple(recs))
    save_split(split, tmp_path / "s.jsonl")
    assert load_split(tmp_path / "s.jsonl", SplitName.TEST, Task.SARCASM) == split


def test_split_rejects_mixed_tasks():
    a = make_sarcasm_corpus(1, 1)
    b = make_sentiment_corpus({Label.POSITIVE: 1})
    with pytest.raises(CorpusError, match="mixes tasks"):
        DatasetSplit(SplitName.TRAIN, tuple(a + b))


def test_descriptor():
    assert DatasetSplit(SplitName.TRAIN, tuple(make_sarcasm_corpus(2, 2))).descriptor == "en-sarcasm"
    cm = make_sentiment_corpus({Label.POSITIVE: 2})
    cm = [LabeledSentence(r.id, r.text, r.task, Lang.HINGLISH, r.label) for r in cm]
    assert DatasetSplit(SplitName.FINETUNE_HINGLISH, tuple(cm)).descriptor == "cm-sentiment"


# ---------------------------------------------------------------------------
# balancing
# ---------------------------------------------------------------------------


def test_undersample_equalises_to_minority():
    recs = make_sarcasm_corpus(30, 70)
    out = balanced_undersample(recs, seed=1)
    assert Counter(r.label for r in out) == {S: 30, N: 30}
    positions = [recs.index(r) for r in out]
    assert positions == sorted(positions)
    assert balanced_undersample(recs, seed=1) == out
    assert balanced_undersample(recs, seed=2) != out


def test_undersample_errors():
    with pytest.raises(CorpusError, match="empty"):
        balanced_undersample([], 0)
    with pytest.raises(CorpusError, match="no records for labels \\['non-sarcastic'\\]"):
        balanced_undersample(make_sarcasm_corpus(3, 0), 0)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


def test_sarcasm_split_counts_full_scale():
    # 9380 + 1171 + 1172 = 11723 per class
    recs = make_sarcasm_corpus(11723, 11723, seed=4)
    parts = make_sarcasm_splits(recs, seed=0)
    for name, n in [(SplitName.TRAIN, 9380), (SplitName.FINETUNE_ENGLISH, 1171), (SplitName.TEST, 1172)]:
        assert parts[name].class_counts == {S: n, N: n}
    ids = [set(p.ids) for p in parts.values()]
    assert sum(map(len, ids)) == len(set().union(*ids)) == 2 * 11723


def test_split_shortfall_is_reported_per_class():
    with pytest.raises(CorpusError, match=r"shortfall per class: \{'non-sarcastic': 1, 'sarcastic': 1\}"):
        make_sarcasm_splits(make_sarcasm_corpus(11722, 11722), seed=0)


def test_sentiment_finetune_counts():
    recs = make_sentiment_corpus({Label.POSITIVE: 900, Label.NEGATIVE: 700, Label.NEUTRAL: 650})
    split = make_sentiment_finetune_split(recs, seed=3)
    assert split.class_counts == {Label.POSITIVE: 644, Label.NEGATIVE: 646, Label.NEUTRAL: 645}


@settings(max_examples=40, deadline=None)
@given(
    n_sarc=st.integers(3, 40),
    n_non=st.integers(3, 40),
    seed=st.integers(0, 2**31),
    take=st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)),
)
def test_splits_are_disjoint_and_exact(n_sarc, n_non, seed, take):
    recs = balanced_undersample(make_sarcasm_corpus(n_sarc, n_non, seed=seed % 100), seed)
    per_class = min(n_sarc, n_non)
    targets = dict(zip((SplitName.TRAIN, SplitName.FINETUNE_ENGLISH, SplitName.TEST), take))
    if sum(take) > per_class:
        with pytest.raises(CorpusError):
            make_splits(recs, targets, seed)
        return
    parts = make_splits(recs, targets, seed)
    seen = set()
    for name, split in parts.items():
        assert all(split.class_counts.get(lab, 0) == targets[name] for lab in (S, N))
        assert not seen & set(split.ids)
        seen |= set(split.ids)
    assert make_splits(recs, targets, seed) == parts


def test_split_manifest_round_trip(tmp_path):
    parts = make_sarcasm_splits(make_sarcasm_corpus(10, 10), 0, {SplitName.TRAIN: 6, SplitName.TEST: 4})
    splits = {"train_en": parts[SplitName.TRAIN], "test_en": parts[SplitName.TEST]}
    write_split_manifest(splits, tmp_path / "manifest.json")
    raw = json.loads((tmp_path / "manifest.json").read_text())
    assert raw["counts"]["train_en"] == {"non-sarcastic": 6, "sarcastic": 6}
    assert read_split_manifest(tmp_path / "manifest.json") == {k: v.ids for k, v in splits.items()}


def test_parallel_split_follows_ids_and_checks_labels():
    en = make_sarcasm_corpus(3, 3)
    cm = hinglish_counterpart(en)
    split = DatasetSplit(SplitName.TEST, tuple(en[:4]))
    par = parallel_split(split, reversed(cm))
    assert par.ids == split.ids
    assert all(r.lang is Lang.HINGLISH for r in par.records)
    wrong = [LabeledSentence(r.id, r.text, r.task, r.lang, N if r.label is S else S) for r in cm]
    with pytest.raises(CorpusError, match="label mismatch"):
        parallel_split(split, wrong)
    with pytest.raises(CorpusError, match="no counterpart"):
        parallel_split(split, cm[:2])


# ---------------------------------------------------------------------------
# script detection
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "text, expected",
    [
        ("Weekend plans cancel हो गए", (3, 2, 0)),
        ("plain english headline", (3, 0, 0)),
        ("सब ठीक है", (0, 3, 0)),
        ("2024 !! ok", (1, 0, 2)),
        ("", (0, 0, 0)),
    ],
)
def test_script_profile(text, expected):
    p = script_profile(text)
    assert (p.latin_tokens, p.devanagari_tokens, p.other_tokens) == expected
    assert p.total == len(text.split())


@given(st.text())
def test_script_profile_total(text):
    assert script_profile(text).total == len(text.split())
