"""Pretrained-encoder classifier with sequential transfer fine-tuning.

A checkpoint is a directory::

    encoder/          encoder weights + tokenizer (``save_pretrained`` layout)
    heads/<task>.pt   one linear head per task seen along the provenance chain
    manifest.json     provenance, config, label map, active task
    training_log.csv  epoch,mean_loss

Fine-tuning on a task with a different label count swaps in a fresh head for
that task and leaves the encoder untouched at initialisation. Heads of earlier
tasks are carried along, so a sarcasm model fine-tuned on sentiment data still
predicts sarcasm with the head it was trained with.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .corpus import DatasetSplit, Label, LabeledSentence, Task, TASK_LABELS
from .predictions import PredictionEntry, PredictionSet

log = logging.getLogger(__name__)


class ClassifierError(ValueError):
    pass


class EncoderResolutionError(ClassifierError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    base_encoder_id: str = "distilbert-base-uncased"
    num_labels: int = 2
    batch_size: int = 32
    learning_rate: float = 1e-3
    epochs: int = 100
    optimizer: str = "adamw"
    loss: str = "cross_entropy"
    max_sequence_length: int = 64
    seed: int = 0
    freeze_encoder: bool = False
    deterministic: bool = True
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.num_labels < 2:
            raise ClassifierError("num_labels must be >= 2")
        if self.batch_size < 1 or self.epochs < 1:
            raise ClassifierError("batch_size and epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ClassifierError("learning_rate must be positive")
        if self.optimizer.lower() != "adamw":
            raise ClassifierError(f"unsupported optimizer {self.optimizer!r}")
        if self.loss.lower() != "cross_entropy":
            raise ClassifierError(f"unsupported loss {self.loss!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> ClassifierConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ClassifierError(f"unknown classifier config keys {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class ModelCheckpoint:
    encoder_state_ref: Path
    head_spec: dict
    provenance: tuple[str, ...]
    config: ClassifierConfig
    task: Task
    heads: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.provenance:
            raise ClassifierError("checkpoint provenance is empty")
        if self.head_spec["num_labels"] != self.config.num_labels:
            raise ClassifierError("head cardinality disagrees with config.num_labels")

    @property
    def root(self) -> Path:
        return self.encoder_state_ref.parent

    @property
    def label_map(self) -> list[str]:
        return [label.value for label in TASK_LABELS[self.task]]

    @classmethod
    def load(cls, directory: str | Path) -> ModelCheckpoint:
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        return cls(
            encoder_state_ref=directory / "encoder",
            head_spec={"num_labels": manifest["num_labels"]},
            provenance=tuple(manifest["provenance"]),
            config=ClassifierConfig(**manifest["config"]),
            task=Task(manifest["task"]),
            heads=dict(manifest["heads"]),
        )


class SequenceClassifier(nn.Module):
    """Encoder plus a single linear head on the first-token representation."""

    def __init__(self, encoder: nn.Module, num_labels: int):
        super().__init__()
        self.encoder = encoder
        self.head = nn.Linear(encoder.config.hidden_size, num_labels)

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        hidden = self.encoder(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state
        return self.head(hidden[:, 0])


def _seed_everything(seed: int, deterministic: bool) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)


def _load_encoder(ref: str | Path):
    from transformers import AutoModel, AutoTokenizer

    try:
        encoder = AutoModel.from_pretrained(str(ref))
        tokenizer = AutoTokenizer.from_pretrained(str(ref))
    except (OSError, ValueError) as exc:
        raise EncoderResolutionError(f"cannot resolve encoder artifact {ref!r}: {exc}") from exc
    return encoder, tokenizer


def _task_of(split: DatasetSplit | Sequence[LabeledSentence]) -> Task | None:
    records = split.records if isinstance(split, DatasetSplit) else split
    tasks = {r.task for r in records}
    if len(tasks) > 1:
        raise ClassifierError("records mix tasks")
    return tasks.pop() if tasks else None


def _encode(tokenizer, texts: Sequence[str], max_length: int) -> dict[str, torch.Tensor]:
    return tokenizer(list(texts), padding=True, truncation=True, max_length=max_length, return_tensors="pt")


def _fit(
    model: SequenceClassifier,
    tokenizer,
    split: DatasetSplit,
    task: Task,
    config: ClassifierConfig,
) -> list[float]:
    """Mini-batch AdamW with cross-entropy; returns the mean loss of each epoch."""
    label_index = {label: i for i, label in enumerate(TASK_LABELS[task])}
    texts = [r.text for r in split.records]
    targets = torch.tensor([label_index[r.label] for r in split.records], dtype=torch.long)
    enc = _encode(tokenizer, texts, config.max_sequence_length)

    if config.freeze_encoder:
        for p in model.encoder.parameters():
            p.requires_grad_(False)
    params = [p for p in model.parameters() if p.requires_grad]
    optim = torch.optim.AdamW(params, lr=config.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    gen = torch.Generator().manual_seed(config.seed)
    device = torch.device(config.device)
    model.to(device).train()

    n = len(texts)
    losses = []
    for epoch in range(config.epochs):
        order = torch.randperm(n, generator=gen)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits = model(enc["input_ids"][idx].to(device), enc["attention_mask"][idx].to(device))
            loss = loss_fn(logits, targets[idx].to(device))
            optim.zero_grad()
            loss.backward()
            optim.step()
            total += loss.item() * len(idx)
        losses.append(total / n)
        log.info("epoch %d/%d mean loss %.6f", epoch + 1, config.epochs, losses[-1])
    if len(losses) > 1 and losses[-1] > losses[0]:
        log.warning("final-epoch loss %.4f exceeds first-epoch loss %.4f", losses[-1], losses[0])
    for p in model.parameters():
        p.requires_grad_(True)
    return losses


def _claim_dir(output_dir: str | Path | None) -> Path:
    if output_dir is None:
        return Path(tempfile.mkdtemp(prefix="sarcbench-ckpt-"))
    out = Path(output_dir)
    if (out / "manifest.json").exists():
        raise ClassifierError(f"checkpoint directory {out} is already in use")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _save(
    out: Path,
    model: SequenceClassifier,
    tokenizer,
    task: Task,
    heads: dict[str, int],
    extra_heads: dict[str, dict],
    provenance: tuple[str, ...],
    config: ClassifierConfig,
    losses: list[float],
) -> ModelCheckpoint:
    model.encoder.save_pretrained(out / "encoder")
    tokenizer.save_pretrained(out / "encoder")
    (out / "heads").mkdir(exist_ok=True)
    for name, state in extra_heads.items():
        torch.save(state, out / "heads" / f"{name}.pt")
    torch.save(model.head.state_dict(), out / "heads" / f"{task.value}.pt")
    manifest = {
        "provenance": list(provenance),
        "config": asdict(config),
        "task": task.value,
        "num_labels": config.num_labels,
        "label_map": [label.value for label in TASK_LABELS[task]],
        "heads": heads,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(out / "training_log.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(losses, start=1):
            w.writerow([i, repr(loss)])
    return ModelCheckpoint.load(out)


def train(config: ClassifierConfig, split: DatasetSplit, output_dir: str | Path | None = None) -> ModelCheckpoint:
    """Train encoder and head from the pretrained encoder named in ``config``."""
    task = _task_of(split)
    if task is None:
        raise ClassifierError("cannot train on an empty split")
    if len(TASK_LABELS[task]) != config.num_labels:
        raise ClassifierError(
            f"split task {task.value} has {len(TASK_LABELS[task])} labels but config.num_labels={config.num_labels}"
        )
    _seed_everything(config.seed, config.deterministic)
    encoder, tokenizer = _load_encoder(config.base_encoder_id)
    model = SequenceClassifier(encoder, config.num_labels)
    losses = _fit(model, tokenizer, split, task, config)
    out = _claim_dir(output_dir)
    return _save(
        out, model, tokenizer, task, {task.value: config.num_labels}, {},
        (f"train:{split.descriptor}",), config, losses,
    )


def load_model(checkpoint: ModelCheckpoint, task: Task | None = None) -> tuple[SequenceClassifier, object]:
    """Rebuild the model from disk, using the stored head for ``task`` (default: active task)."""
    task = task or checkpoint.task
    if task.value not in checkpoint.heads:
        raise ClassifierError(f"checkpoint has no head for task {task.value}; heads: {sorted(checkpoint.heads)}")
    encoder, tokenizer = _load_encoder(checkpoint.encoder_state_ref)
    model = SequenceClassifier(encoder, checkpoint.heads[task.value])
    model.head.load_state_dict(torch.load(checkpoint.root / "heads" / f"{task.value}.pt", weights_only=True))
    return model, tokenizer


def prepare_fine_tune(
    checkpoint: ModelCheckpoint, split: DatasetSplit, config: ClassifierConfig | None = None
) -> tuple[SequenceClassifier, object, Task, ClassifierConfig]:
    """Model state right before the first fine-tuning gradient step.

    The encoder comes from the checkpoint as-is. The head for the split's task is
    reused when the checkpoint already has one of matching size, otherwise it is
    freshly initialised under ``config.seed``.
    """
    task = _task_of(split)
    if task is None:
        raise ClassifierError("cannot fine-tune on an empty split")
    n_labels = len(TASK_LABELS[task])
    config = replace(config or checkpoint.config, num_labels=n_labels)
    _seed_everything(config.seed, config.deterministic)
    encoder, tokenizer = _load_encoder(checkpoint.encoder_state_ref)
    model = SequenceClassifier(encoder, n_labels)
    if checkpoint.heads.get(task.value) == n_labels:
        model.head.load_state_dict(torch.load(checkpoint.root / "heads" / f"{task.value}.pt", weights_only=True))
    else:
        log.info("label count %d differs from checkpoint head; initialising a new %s head", n_labels, task.value)
    return model, tokenizer, task, config


def sequential_fine_tune(
    checkpoint: ModelCheckpoint,
    split: DatasetSplit,
    config: ClassifierConfig | None = None,
    output_dir: str | Path | None = None,
) -> ModelCheckpoint:
    """Continue training from ``checkpoint`` on ``split``; appends ``finetune:<split>`` to provenance.

    ``config`` defaults to the checkpoint's own training config; only
    ``num_labels`` follows the split.
    """
    model, tokenizer, task, config = prepare_fine_tune(checkpoint, split, config)
    losses = _fit(model, tokenizer, split, task, config)
    out = _claim_dir(output_dir)
    carried = {
        name: torch.load(checkpoint.root / "heads" / f"{name}.pt", weights_only=True)
        for name in checkpoint.heads
        if name != task.value
    }
    heads = {**checkpoint.heads, task.value: config.num_labels}
    return _save(
        out, model, tokenizer, task, heads, carried,
        checkpoint.provenance + (f"finetune:{split.descriptor}",), config, losses,
    )


@torch.no_grad()
def predict_with_model(
    model: SequenceClassifier,
    tokenizer,
    sentences: Sequence[LabeledSentence],
    task: Task,
    model_id: str,
    dataset_id: str,
    max_length: int = 64,
    batch_size: int = 64,
) -> PredictionSet:
    labels = TASK_LABELS[task]
    if model.head.out_features != len(labels):
        raise ClassifierError(f"head has {model.head.out_features} outputs, task {task.value} needs {len(labels)}")
    model.eval()
    entries = []
    for start in range(0, len(sentences), batch_size):
        batch = sentences[start : start + batch_size]
        enc = _encode(tokenizer, [s.text for s in batch], max_length)
        probs = torch.softmax(model(enc["input_ids"], enc["attention_mask"]).double(), dim=-1)
        for rec, p in zip(batch, probs):
            if task is Task.SARCASM:
                score = min(max(float(p[1]), 0.0), 1.0)
                predicted = Label.SARCASTIC if score >= 0.5 else Label.NON_SARCASTIC
                entries.append(PredictionEntry(rec.id, predicted, score))
            else:
                entries.append(PredictionEntry(rec.id, labels[int(torch.argmax(p))]))
    return PredictionSet(model_id, dataset_id, entries)


def predict(
    checkpoint: ModelCheckpoint,
    sentences: Sequence[LabeledSentence],
    model_id: str | None = None,
    dataset_id: str = "",
) -> PredictionSet:
    """Label every sentence; binary scores are the Sarcastic-class probability.

    The prediction is Sarcastic exactly when the score is at least 0.5.
    """
    sentences = list(sentences)
    model_id = model_id or " > ".join(checkpoint.provenance)
    task = _task_of(sentences)
    if task is None:
        return PredictionSet(model_id, dataset_id, [])
    if task.value not in checkpoint.heads:
        raise ClassifierError(
            f"checkpoint heads {checkpoint.heads} cannot label {task.value} sentences"
        )
    model, tokenizer = load_model(checkpoint, task)
    return predict_with_model(
        model, tokenizer, sentences, task, model_id, dataset_id, checkpoint.config.max_sequence_length
    )


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossValidationResult:
    train_accuracies: tuple[float, ...]
    val_accuracies: tuple[float, ...]

    @property
    def mean_train_accuracy(self) -> float:
        return float(np.mean(self.train_accuracies))

    @property
    def mean_val_accuracy(self) -> float:
        return float(np.mean(self.val_accuracies))


def stratified_folds(split: DatasetSplit, k: int, seed: int) -> list[list[str]]:
    """Deal each class's shuffled ids round-robin into ``k`` folds."""
    if k < 2:
        raise ClassifierError("k must be >= 2")
    counts = split.class_counts
    if not counts or k > min(counts.values()):
        raise ClassifierError(f"k={k} exceeds the smallest class count {min(counts.values(), default=0)}")
    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    offset = 0
    for label in sorted(counts, key=lambda lab: lab.value):
        ids = [r.id for r in split.records if r.label is label]
        for j, i in enumerate(rng.permutation(len(ids))):
            folds[(offset + j) % k].append(ids[i])
        offset += len(ids)
    return folds


def _accuracy(preds: PredictionSet, records: Sequence[LabeledSentence]) -> float:
    gold = {r.id: r.label for r in records}
    return sum(e.predicted is gold[e.sentence_id] for e in preds.entries) / len(records)


def kfold_cross_validate(config: ClassifierConfig, split: DatasetSplit, k: int = 5) -> CrossValidationResult:
    """Train ``k`` models on stratified folds; report train and held-out accuracy per fold."""
    if len(split) < k:
        raise ClassifierError(f"split of {len(split)} records cannot form {k} folds")
    folds = stratified_folds(split, k, config.seed)
    task = _task_of(split)
    train_acc, val_acc = [], []
    for i, held in enumerate(folds):
        held_set = set(held)
        tr = DatasetSplit(split.name, tuple(r for r in split.records if r.id not in held_set))
        va = [r for r in split.records if r.id in held_set]
        _seed_everything(config.seed, config.deterministic)
        encoder, tokenizer = _load_encoder(config.base_encoder_id)
        model = SequenceClassifier(encoder, config.num_labels)
        _fit(model, tokenizer, tr, task, config)
        p_tr = predict_with_model(model, tokenizer, tr.records, task, f"fold{i}", "train", config.max_sequence_length)
        p_va = predict_with_model(model, tokenizer, va, task, f"fold{i}", "val", config.max_sequence_length)
        train_acc.append(_accuracy(p_tr, tr.records))
        val_acc.append(_accuracy(p_va, va))
        log.info("fold %d/%d train acc %.4f val acc %.4f", i + 1, k, train_acc[-1], val_acc[-1])
    return CrossValidationResult(tuple(train_acc), tuple(val_acc))


def read_training_log(checkpoint: ModelCheckpoint) -> list[float]:
    with open(checkpoint.root / "training_log.csv", newline="", encoding="utf-8") as fh:
        return [float(row["mean_loss"]) for row in csv.DictReader(fh)]


def loss_converged(losses: Sequence[float]) -> bool:
    return bool(losses) and all(math.isfinite(x) for x in losses) and losses[-1] <= losses[0]
