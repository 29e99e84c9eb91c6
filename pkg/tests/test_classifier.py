from __future__ import annotations

import json

import pytest
import torch

from sarcbench.classifier import (
    ClassifierConfig,
    ClassifierError,
    EncoderResolutionError,
    ModelCheckpoint,
    kfold_cross_validate,
    load_model,
    loss_converged,
    predict,
    prepare_fine_tune,
    read_training_log,
    sequential_fine_tune,
    stratified_folds,
    train,
)
from sarcbench.corpus import DatasetSplit, Label, Lang, SplitName, Task
from sarcbench.toy import hinglish_counterpart, make_sarcasm_corpus, make_sentiment_corpus

S, N = Label.SARCASTIC, Label.NON_SARCASTIC


@pytest.fixture(scope="module")
def cfg(toy_encoder):
    return ClassifierConfig(base_encoder_id=str(toy_encoder), batch_size=8, epochs=8, learning_rate=3e-3, seed=3)


@pytest.fixture(scope="module")
def sarcasm_train():
    return DatasetSplit(SplitName.TRAIN, tuple(make_sarcasm_corpus(24, 24, seed=1)))


@pytest.fixture(scope="module")
def sentiment_split():
    counts = {Label.POSITIVE: 8, Label.NEGATIVE: 8, Label.NEUTRAL: 8}
    return DatasetSplit(SplitName.FINETUNE_ENGLISH, tuple(make_sentiment_corpus(counts, seed=2)))


@pytest.fixture(scope="module")
def base(cfg, sarcasm_train, tmp_path_factory):
    return train(cfg, sarcasm_train, tmp_path_factory.mktemp("ckpt") / "base")


@pytest.fixture(scope="module")
def probe():
    return make_sarcasm_corpus(10, 10, seed=99, prefix="p")


def encoder_state(model):
    return {k: v.clone() for k, v in model.encoder.state_dict().items()}


# ---------------------------------------------------------------------------
# config and checkpoints
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [{"num_labels": 1}, {"batch_size": 0}, {"epochs": 0}, {"learning_rate": 0.0}, {"optimizer": "sgd"}, {"loss": "mse"}],
)
def test_config_validation(kwargs):
    with pytest.raises(ClassifierError):
        ClassifierConfig(**kwargs)


def test_config_defaults_and_unknown_keys():
    c = ClassifierConfig()
    assert (c.batch_size, c.learning_rate, c.epochs) == (32, 1e-3, 100)
    with pytest.raises(ClassifierError, match="unknown"):
        ClassifierConfig.from_dict({"batch": 3})


def test_train_writes_checkpoint_layout(base, cfg):
    root = base.root
    assert (root / "encoder").is_dir()
    assert (root / "heads" / "sarcasm.pt").is_file()
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["provenance"] == ["train:en-sarcasm"]
    assert manifest["label_map"] == ["non-sarcastic", "sarcastic"]
    assert base.head_spec == {"num_labels": 2}
    losses = read_training_log(base)
    assert len(losses) == cfg.epochs
    assert loss_converged(losses)


def test_train_learns_the_toy_task(base, probe):
    preds = predict(base, probe)
    gold = {r.id: r.label for r in probe}
    acc = sum(e.predicted is gold[e.sentence_id] for e in preds.entries) / len(probe)
    assert acc >= 0.8


def test_smoke_one_epoch_four_records(cfg):
    split = DatasetSplit(SplitName.TRAIN, tuple(make_sarcasm_corpus(2, 2)))
    ckpt = train(ClassifierConfig(**{**cfg.__dict__, "epochs": 1}), split)
    [loss] = read_training_log(ckpt)
    assert loss == loss and loss < float("inf")


def test_label_cardinality_mismatch(cfg, sentiment_split):
    with pytest.raises(ClassifierError, match="num_labels=2"):
        train(cfg, sentiment_split)


def test_unresolvable_encoder(tmp_path, sarcasm_train):
    with pytest.raises(EncoderResolutionError):
        train(ClassifierConfig(base_encoder_id=str(tmp_path / "nope"), epochs=1), sarcasm_train)


def test_checkpoint_directory_is_not_reused(base, cfg, sarcasm_train):
    with pytest.raises(ClassifierError, match="already in use"):
        train(cfg, sarcasm_train, base.root)


# ---------------------------------------------------------------------------
# sequential fine-tuning
# ---------------------------------------------------------------------------


def test_head_replacement_leaves_encoder_bit_identical(base, sentiment_split):
    source, _ = load_model(base)
    model, _, task, config = prepare_fine_tune(base, sentiment_split)
    assert task is Task.SENTIMENT and config.num_labels == 3
    assert model.head.out_features == 3
    src, new = encoder_state(source), encoder_state(model)
    assert src.keys() == new.keys()
    assert all(torch.equal(src[k], new[k]) for k in src)


def test_matching_cardinality_keeps_head(base):
    ft = DatasetSplit(SplitName.FINETUNE_HINGLISH, tuple(hinglish_counterpart(make_sarcasm_corpus(4, 4, seed=5))))
    source, _ = load_model(base)
    model, _, _, _ = prepare_fine_tune(base, ft)
    assert torch.equal(source.head.weight, model.head.weight)
    assert torch.equal(source.head.bias, model.head.bias)


def test_fine_tune_chain_provenance_and_carried_heads(base, sentiment_split, probe, tmp_path):
    cm = DatasetSplit(SplitName.FINETUNE_HINGLISH, tuple(hinglish_counterpart(make_sarcasm_corpus(6, 6, seed=6))))
    first = sequential_fine_tune(base, sentiment_split, output_dir=tmp_path / "one")
    assert first.provenance == ("train:en-sarcasm", "finetune:en-sentiment")
    assert first.task is Task.SENTIMENT and first.heads == {"sarcasm": 2, "sentiment": 3}
    second = sequential_fine_tune(first, cm, output_dir=tmp_path / "two")
    assert second.provenance == ("train:en-sarcasm", "finetune:en-sentiment", "finetune:cm-sarcasm")
    assert len(second.provenance) == 3
    # a sentiment-stage checkpoint still labels sarcasm with the carried head
    preds = predict(first, probe)
    assert len(preds) == len(probe) and preds.has_scores
    sent = predict(first, sentiment_split.records)
    assert {e.predicted.task for e in sent.entries} == {Task.SENTIMENT}


def test_fine_tune_rejects_empty_split(base):
    with pytest.raises(ClassifierError):
        sequential_fine_tune(base, DatasetSplit(SplitName.FINETUNE_ENGLISH, ()))


def test_checkpoint_invariants(base):
    with pytest.raises(ClassifierError):
        ModelCheckpoint(base.encoder_state_ref, {"num_labels": 2}, (), base.config, Task.SARCASM)
    with pytest.raises(ClassifierError):
        ModelCheckpoint(base.encoder_state_ref, {"num_labels": 3}, ("x",), base.config, Task.SARCASM)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def test_predict_is_deterministic_and_scores_are_consistent(base, probe):
    a = predict(base, probe)
    b = predict(base, probe)
    assert a == b
    for e in a.entries:
        assert 0.0 <= e.score <= 1.0
        assert (e.score >= 0.5) == (e.predicted is S)


def test_predict_empty_and_missing_head(base, sentiment_split):
    assert len(predict(base, [])) == 0
    with pytest.raises(ClassifierError, match="cannot label sentiment"):
        predict(base, sentiment_split.records)


def test_seeded_training_is_reproducible(cfg, sarcasm_train, probe):
    a = train(cfg, sarcasm_train)
    b = train(cfg, sarcasm_train)
    assert predict(a, probe, model_id="x") == predict(b, probe, model_id="x")
    assert read_training_log(a) == read_training_log(b)


def test_freeze_encoder_trains_head_only(cfg, sarcasm_train):
    from transformers import AutoModel

    frozen = train(ClassifierConfig(**{**cfg.__dict__, "freeze_encoder": True, "epochs": 2}), sarcasm_train)
    pristine = AutoModel.from_pretrained(cfg.base_encoder_id).state_dict()
    trained, _ = load_model(frozen)
    assert all(torch.equal(pristine[k], v) for k, v in trained.encoder.state_dict().items())


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


def test_stratified_folds():
    split = DatasetSplit(SplitName.TRAIN, tuple(make_sarcasm_corpus(10, 10)))
    folds = stratified_folds(split, 5, seed=1)
    assert folds == stratified_folds(split, 5, seed=1)
    assert sorted(i for f in folds for i in f) == sorted(split.ids)
    labels = {r.id: r.label for r in split.records}
    assert all(sum(labels[i] is S for i in f) == 2 for f in folds)
    with pytest.raises(ClassifierError):
        stratified_folds(split, 11, seed=1)
    with pytest.raises(ClassifierError):
        stratified_folds(split, 1, seed=1)


def test_kfold_two_folds_on_four_records(cfg):
    split = DatasetSplit(SplitName.TRAIN, tuple(make_sarcasm_corpus(2, 2, lang=Lang.ENGLISH)))
    res = kfold_cross_validate(ClassifierConfig(**{**cfg.__dict__, "epochs": 2}), split, k=2)
    assert len(res.train_accuracies) == len(res.val_accuracies) == 2
    assert all(0.0 <= a <= 1.0 for a in res.train_accuracies + res.val_accuracies)
    assert 0.0 <= res.mean_train_accuracy <= 1.0


def test_loss_converged_helper():
    assert loss_converged([1.0, 0.5])
    assert not loss_converged([0.5, 1.0])
    assert not loss_converged([])
    assert not loss_converged([float("nan"), 0.1])
