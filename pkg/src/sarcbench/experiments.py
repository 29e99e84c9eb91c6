"""Study orchestration: classifier strategies, the LLM grid, training-size ablations and reports.

Every cell writes into its own directory under ``runs/<experiment-id>/``::

    predictions.json   PredictionSet
    gold.jsonl         the test split the predictions were scored against
    metrics.json       accuracy, macro-F1, confusion counts (+ PR curve for scored runs)
    misclassified.csv  sentence_id, text, gold, predicted
    result.json        ExperimentResult

so metrics can always be recomputed offline from the first two files.
"""

from __future__ import annotations

import copy
import csv
import enum
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import metrics as M
from .classifier import ClassifierConfig, ModelCheckpoint, predict, sequential_fine_tune, train
from .corpus import (
    CorpusError,
    DatasetSplit,
    Label,
    SplitName,
    Task,
    TASK_LABELS,
    balanced_undersample,
    load_sarcasm_headlines,
    load_sentiment_tweets,
    load_split,
    make_sarcasm_splits,
    make_sentiment_finetune_split,
    parallel_split,
    save_split,
    write_split_manifest,
)
from .llm_eval import (
    CLASSIFICATION_PROMPT,
    InferenceClient,
    Mode,
    PromptTemplate,
    ResponseCache,
    RunStats,
    build_fewshot_exemplars,
    classify_dataset,
    run_report,
)
from .predictions import EntryStatus, PredictionSet

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

DEFAULT_CONFIG: dict = {
    "experiment_id": "study",
    "output_root": "runs",
    "seed": 13,
    "data": {
        "sarcasm_en": None,
        "sarcasm_hinglish": None,
        "sentiment_en": None,
        "sentiment_hinglish": None,
        "split_dir": None,
        "sarcasm_counts": {"train": 9380, "finetune_en": 1171, "test": 1172},
        "sentiment_counts": {"positive": 644, "negative": 646, "neutral": 645},
    },
    "classifier": {},
    "strategies": ["NO_FT", "FT_EN_SARC", "FT_CM_SARC", "FT_EN_SENT", "FT_CM_SENT"],
    "classifier_seeds": None,
    "llm": {
        "endpoint": "http://localhost:11434/api/generate",
        "response_key": "response",
        "options": {"temperature": 0},
        "models": ["llama3.1", "mistral", "gemma3", "phi4"],
        "modes": ["zero_shot", "few_shot"],
        "languages": ["en", "hinglish"],
        "k_per_class": 2,
        "fewshot_pool": "finetune_hinglish",
        "unparseable_retries": 2,
        "transport_retries": 2,
        "parallelism": 1,
        "cache": None,
        "prompt": None,
    },
    "translation": {
        "endpoint": None,
        "model": "gemini-2.5-pro",
        "api_key_env": "TRANSLATION_API_KEY",
        "response_key": "response",
        "batch_size": 20,
        "max_retries": 3,
        "parallelism": 1,
        "refusal_phrases": None,
        "cache": None,
    },
    "audit": {"quotas": {"sarcasm": 175, "sentiment": 175}},
    "ablation": {"strategy": "FT_CM_SARC", "sizes": [1000, 2000, 5000, 10000, 15000, 18760]},
    "bootstrap": {"n_iterations": 2344, "resample_size": None},
    "invalid_predictions": "incorrect",
}


def _deep_merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_override(config: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = config
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def load_config(path: str | Path | None = None, overrides: Mapping[str, object] | None = None) -> dict:
    """Defaults, then the JSON file, then dotted-key overrides (``llm.parallelism=4``)."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    base_dir = Path(".")
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        config = _deep_merge(config, raw)
        base_dir = Path(path).resolve().parent
    for key, value in (overrides or {}).items():
        apply_override(config, key, value)
    # relative data paths resolve against the config file's directory
    for key in ("sarcasm_en", "sarcasm_hinglish", "sentiment_en", "sentiment_hinglish", "split_dir"):
        p = config["data"].get(key)
        if p and not Path(p).is_absolute():
            config["data"][key] = str(base_dir / p)
    if not Path(config["output_root"]).is_absolute():
        config["output_root"] = str(base_dir / config["output_root"])
    if not config["data"]["split_dir"]:
        config["data"]["split_dir"] = str(Path(config["output_root"]) / config["experiment_id"] / "splits")
    return config


def run_root(config: Mapping) -> Path:
    return Path(config["output_root"]) / config["experiment_id"]


def load_reference_targets() -> dict:
    text = resources.files("sarcbench").joinpath("data/reference_targets.json").read_text(encoding="utf-8")
    return json.loads(text)


def classifier_config(config: Mapping) -> ClassifierConfig:
    return ClassifierConfig.from_dict(dict(config.get("classifier") or {}))


# ---------------------------------------------------------------------------
# Splits on disk
# ---------------------------------------------------------------------------

SPLIT_REFS: dict[str, tuple[SplitName, Task]] = {
    "train_en": (SplitName.TRAIN, Task.SARCASM),
    "finetune_en": (SplitName.FINETUNE_ENGLISH, Task.SARCASM),
    "finetune_hinglish": (SplitName.FINETUNE_HINGLISH, Task.SARCASM),
    "test_en": (SplitName.TEST, Task.SARCASM),
    "test_hinglish": (SplitName.TEST, Task.SARCASM),
    "sentiment_finetune_en": (SplitName.FINETUNE_ENGLISH, Task.SENTIMENT),
    "sentiment_finetune_hinglish": (SplitName.FINETUNE_HINGLISH, Task.SENTIMENT),
}


def _sarcasm_targets(counts: Mapping[str, int]) -> dict[SplitName, int]:
    return {SplitName(k): int(v) for k, v in counts.items()}


def prepare_data(config: Mapping) -> dict[str, DatasetSplit]:
    """Balance and split the English corpora, attach Hinglish counterparts, write everything out.

    The sarcasm corpus is undersampled to equal classes before splitting. The
    sentiment fine-tune split is drawn directly at its per-class target counts.
    Hinglish splits are written only when the Hinglish corpus file is present.
    """
    data = config["data"]
    seed = int(config["seed"])
    if not data.get("sarcasm_en"):
        raise CorpusError("config data.sarcasm_en is not set")
    english = balanced_undersample(load_sarcasm_headlines(data["sarcasm_en"]), seed)
    parts = make_sarcasm_splits(english, seed, _sarcasm_targets(data["sarcasm_counts"]))
    splits: dict[str, DatasetSplit] = {}
    splits["train_en"] = parts[SplitName.TRAIN]
    if SplitName.FINETUNE_ENGLISH in parts:
        splits["finetune_en"] = parts[SplitName.FINETUNE_ENGLISH]
    if SplitName.TEST in parts:
        splits["test_en"] = parts[SplitName.TEST]

    if data.get("sarcasm_hinglish") and Path(data["sarcasm_hinglish"]).exists():
        hinglish = load_sarcasm_headlines(data["sarcasm_hinglish"])
        if "finetune_en" in splits:
            splits["finetune_hinglish"] = parallel_split(splits["finetune_en"], hinglish, SplitName.FINETUNE_HINGLISH)
        if "test_en" in splits:
            splits["test_hinglish"] = parallel_split(splits["test_en"], hinglish, SplitName.TEST)

    if data.get("sentiment_en"):
        counts = {Label(k): int(v) for k, v in data["sentiment_counts"].items()}
        sent = make_sentiment_finetune_split(load_sentiment_tweets(data["sentiment_en"]), seed, counts)
        splits["sentiment_finetune_en"] = sent
        if data.get("sentiment_hinglish") and Path(data["sentiment_hinglish"]).exists():
            splits["sentiment_finetune_hinglish"] = parallel_split(
                sent, load_sentiment_tweets(data["sentiment_hinglish"]), SplitName.FINETUNE_HINGLISH
            )

    write_splits(splits, data["split_dir"])
    return splits


def write_splits(splits: Mapping[str, DatasetSplit], split_dir: str | Path) -> None:
    split_dir = Path(split_dir)
    for ref, split in splits.items():
        save_split(split, split_dir / f"{ref}.jsonl")
    manifest_path = split_dir / "manifest.json"
    existing = {}
    if manifest_path.exists():
        existing = {ref: split for ref, split in load_splits(split_dir).items() if ref not in splits}
    write_split_manifest({**existing, **splits}, manifest_path)


def load_splits(split_dir: str | Path) -> dict[str, DatasetSplit]:
    split_dir = Path(split_dir)
    out = {}
    for ref, (name, task) in SPLIT_REFS.items():
        path = split_dir / f"{ref}.jsonl"
        if path.exists():
            out[ref] = load_split(path, name, task)
    return out


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


class Strategy(str, enum.Enum):
    NO_FT = "NO_FT"
    FT_EN_SARC = "FT_EN_SARC"
    FT_CM_SARC = "FT_CM_SARC"
    FT_EN_SENT = "FT_EN_SENT"
    FT_CM_SENT = "FT_CM_SENT"


STRATEGY_LABELS = {
    Strategy.NO_FT: "No fine-tune",
    Strategy.FT_EN_SARC: "English [Sarcasm]",
    Strategy.FT_CM_SARC: "Code-mixed [Sarcasm]",
    Strategy.FT_EN_SENT: "English [Sentiment]",
    Strategy.FT_CM_SENT: "Code-mixed [Sentiment]",
}


@dataclass(frozen=True)
class StrategySpec:
    id: Strategy
    train_split: str = "train_en"
    finetune_split: str | None = None
    test_split: str = "test_hinglish"
    overrides: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.id is Strategy.NO_FT and self.finetune_split is not None:
            raise ExperimentError("NO_FT takes no fine-tune split")
        if self.id is not Strategy.NO_FT and self.finetune_split is None:
            raise ExperimentError(f"{self.id.value} needs a fine-tune split")
        sentiment = self.id in (Strategy.FT_EN_SENT, Strategy.FT_CM_SENT)
        if sentiment and SPLIT_REFS.get(self.finetune_split, (None, None))[1] is not Task.SENTIMENT:
            raise ExperimentError(f"{self.id.value} must reference a sentiment fine-tune split")


DEFAULT_STRATEGIES: dict[Strategy, StrategySpec] = {
    Strategy.NO_FT: StrategySpec(Strategy.NO_FT),
    Strategy.FT_EN_SARC: StrategySpec(Strategy.FT_EN_SARC, finetune_split="finetune_en"),
    Strategy.FT_CM_SARC: StrategySpec(Strategy.FT_CM_SARC, finetune_split="finetune_hinglish"),
    Strategy.FT_EN_SENT: StrategySpec(Strategy.FT_EN_SENT, finetune_split="sentiment_finetune_en"),
    Strategy.FT_CM_SENT: StrategySpec(Strategy.FT_CM_SENT, finetune_split="sentiment_finetune_hinglish"),
}


@dataclass
class ExperimentResult:
    cell: str
    coordinates: dict
    metrics: dict
    artifacts: dict = field(default_factory=dict)
    seed: int | None = None
    status: str = "ok"
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> ExperimentResult:
        return cls(**obj)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> ExperimentResult:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class AblationPoint:
    train_size: int
    accuracy: float
    macro_f1: float


def _write_misclassified(preds: PredictionSet, gold: DatasetSplit, path: Path) -> int:
    by_id = {e.sentence_id: e for e in preds.entries}
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sentence_id", "text", "gold", "predicted"])
        for rec in gold.records:
            e = by_id[rec.id]
            if e.status is EntryStatus.OK and e.predicted is rec.label:
                continue
            shown = e.predicted.value if e.status is EntryStatus.OK else e.status.value
            w.writerow([rec.id, rec.text, rec.label.value, shown])
            rows += 1
    return rows


def score_cell(
    preds: PredictionSet, gold: DatasetSplit, cell_dir: str | Path, invalid: str = "incorrect"
) -> dict:
    """Persist predictions, gold and metrics for one cell; return the metrics dict."""
    cell_dir = Path(cell_dir)
    cell_dir.mkdir(parents=True, exist_ok=True)
    preds.save(cell_dir / "predictions.json")
    save_split(gold, cell_dir / "gold.jsonl")
    metrics = M.summarize(preds, gold, invalid)
    (cell_dir / "metrics.json").write_text(json.dumps(metrics, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    _write_misclassified(preds, gold, cell_dir / "misclassified.csv")
    return metrics


def load_cell(cell_dir: str | Path) -> tuple[PredictionSet, DatasetSplit]:
    cell_dir = Path(cell_dir)
    preds = PredictionSet.load(cell_dir / "predictions.json")
    gold = load_split(cell_dir / "gold.jsonl", SplitName.TEST, Task.SARCASM)
    return preds, gold


def recompute_metrics(cell_dir: str | Path, invalid: str = "incorrect") -> dict:
    preds, gold = load_cell(cell_dir)
    return M.summarize(preds, gold, invalid)


# ---------------------------------------------------------------------------
# Classifier strategies
# ---------------------------------------------------------------------------


def run_strategy(
    spec: StrategySpec,
    splits: Mapping[str, DatasetSplit],
    config: ClassifierConfig,
    seed: int,
    cell_dir: str | Path,
    base_checkpoint: ModelCheckpoint | None = None,
    invalid: str = "incorrect",
) -> ExperimentResult:
    """Train, optionally fine-tune, predict on the test split and score.

    ``base_checkpoint`` lets several strategies share one trained base model.
    """
    cell_dir = Path(cell_dir)
    missing = [r for r in (spec.train_split, spec.finetune_split, spec.test_split) if r and r not in splits]
    if missing:
        raise ExperimentError(f"{spec.id.value}: splits not available: {missing}")
    cfg = replace(config, seed=seed, **dict(spec.overrides))
    try:
        base = base_checkpoint or train(cfg, splits[spec.train_split], cell_dir / "checkpoint_train")
        ckpt = base
        if spec.finetune_split:
            ckpt = sequential_fine_tune(base, splits[spec.finetune_split], cfg, cell_dir / "checkpoint_finetune")
        test = splits[spec.test_split]
        preds = predict(ckpt, test.records, model_id=spec.id.value, dataset_id=spec.test_split)
        metrics = score_cell(preds, test, cell_dir, invalid)
    except Exception as exc:
        raise ExperimentError(f"strategy {spec.id.value} failed: {exc}") from exc
    result = ExperimentResult(
        cell=cell_dir.name,
        coordinates={"kind": "classifier", "strategy": spec.id.value, "test_split": spec.test_split},
        metrics=metrics,
        artifacts={"checkpoint": str(ckpt.root), "predictions": str(cell_dir / "predictions.json")},
        seed=seed,
    )
    result.save(cell_dir / "result.json")
    return result


def run_strategies(
    specs: Sequence[StrategySpec],
    splits: Mapping[str, DatasetSplit],
    config: ClassifierConfig,
    seeds: Sequence[int],
    root: str | Path,
    invalid: str = "incorrect",
) -> list[ExperimentResult]:
    """Run every strategy for every seed, training each base model once per (train split, seed)."""
    root = Path(root)
    results = []
    for seed in seeds:
        bases: dict[tuple, ModelCheckpoint] = {}
        for spec in specs:
            key = (spec.train_split, tuple(sorted(spec.overrides.items())))
            if key not in bases:
                base_dir = root / f"base-{spec.train_split}-seed{seed}"
                if (base_dir / "manifest.json").exists():
                    bases[key] = ModelCheckpoint.load(base_dir)
                else:
                    cfg = replace(config, seed=seed, **dict(spec.overrides))
                    bases[key] = train(cfg, splits[spec.train_split], base_dir)
            cell = root / f"strategy-{spec.id.value}-seed{seed}"
            results.append(run_strategy(spec, splits, config, seed, cell, bases[key], invalid))
    return results


def mean_auprc_by_strategy(results: Sequence[ExperimentResult]) -> dict[str, float]:
    curves: dict[str, list[M.PRCurve]] = {}
    for r in results:
        if r.ok and r.coordinates.get("kind") == "classifier" and "pr_curve" in r.metrics:
            curves.setdefault(r.coordinates["strategy"], []).append(M.PRCurve.from_json(r.metrics["pr_curve"]))
    return {k: M.mean_auprc(v) for k, v in sorted(curves.items())}


# ---------------------------------------------------------------------------
# LLM grid
# ---------------------------------------------------------------------------


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in name)


def run_llm_grid(
    client: InferenceClient,
    models: Sequence[str],
    modes: Sequence[Mode | str],
    test_splits: Mapping[str, DatasetSplit],
    root: str | Path,
    fewshot_pool: DatasetSplit | None = None,
    k_per_class: int = 2,
    seed: int = 0,
    cache: ResponseCache | None = None,
    body: str = CLASSIFICATION_PROMPT,
    unparseable_retries: int = 2,
    transport_retries: int = 2,
    parallelism: int = 1,
    invalid: str = "incorrect",
) -> list[ExperimentResult]:
    """One result per (model, mode, language) cell; a failing cell never stops the others."""
    root = Path(root)
    modes = [Mode(m) for m in modes]
    cache = cache if cache is not None else ResponseCache()
    templates: dict[Mode, PromptTemplate] = {}
    results = []
    for model in models:
        for mode in modes:
            for lang, split in test_splits.items():
                coords = {"kind": "llm", "model": model, "mode": mode.value, "language": lang}
                cell_dir = root / f"llm-{_safe(model)}-{mode.value}-{_safe(lang)}"
                try:
                    if mode not in templates:
                        exemplars: tuple = ()
                        if mode is Mode.FEW_SHOT:
                            if fewshot_pool is None:
                                raise ExperimentError("few-shot mode needs an exemplar pool")
                            test_ids = {i for s in test_splits.values() for i in s.ids}
                            exemplars = tuple(build_fewshot_exemplars(fewshot_pool, k_per_class, seed, test_ids))
                        templates[mode] = PromptTemplate(mode, body, exemplars)
                    stats = RunStats()
                    preds = classify_dataset(
                        client, model, templates[mode], split, cache,
                        unparseable_retries, transport_retries, parallelism, stats,
                    )
                    metrics = score_cell(preds, split, cell_dir, invalid)
                    report = run_report(preds, stats)
                    (cell_dir / "run_report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
                    result = ExperimentResult(
                        cell_dir.name, coords, metrics,
                        {"predictions": str(cell_dir / "predictions.json")}, seed,
                    )
                except Exception as exc:
                    log.error("LLM cell %s failed: %s", cell_dir.name, exc)
                    cell_dir.mkdir(parents=True, exist_ok=True)
                    result = ExperimentResult(cell_dir.name, coords, {}, {}, seed, "failed", str(exc))
                result.save(cell_dir / "result.json")
                results.append(result)
    return results


# ---------------------------------------------------------------------------
# Training-size ablation
# ---------------------------------------------------------------------------


def ablation_subset(split: DatasetSplit, size: int, seed: int) -> DatasetSplit:
    """Class-balanced subset of ``size`` records.

    Each class is shuffled once under ``seed`` and the first ``size // n_classes``
    records taken, so smaller subsets are always contained in larger ones.
    """
    task = split.task
    labels = TASK_LABELS[task]
    per_class = size // len(labels)
    if size > len(split):
        raise ExperimentError(f"ablation size {size} exceeds training split of {len(split)} records")
    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for label in labels:
        idx = [i for i, r in enumerate(split.records) if r.label is label]
        if per_class > len(idx):
            raise ExperimentError(f"ablation size {size} needs {per_class} {label.value} records, have {len(idx)}")
        order = rng.permutation(len(idx))
        keep.extend(idx[j] for j in order[:per_class])
    return DatasetSplit(split.name, tuple(split.records[i] for i in sorted(keep)))


def run_size_ablation(
    spec: StrategySpec,
    sizes: Sequence[int],
    seed: int,
    splits: Mapping[str, DatasetSplit],
    config: ClassifierConfig,
    root: str | Path,
    invalid: str = "incorrect",
) -> list[AblationPoint]:
    if list(sizes) != sorted(sizes):
        raise ExperimentError("ablation sizes must be sorted ascending")
    full = splits[spec.train_split]
    if sizes and sizes[-1] > len(full):
        raise ExperimentError(f"ablation size {sizes[-1]} exceeds training split of {len(full)} records")
    root = Path(root) / f"ablation-{spec.id.value}-seed{seed}"
    points = []
    for size in sizes:
        subset = ablation_subset(full, size, seed)
        local = {**splits, spec.train_split: subset}
        res = run_strategy(spec, local, config, seed, root / f"size-{size}", invalid=invalid)
        points.append(AblationPoint(len(subset), res.metrics["accuracy"], res.metrics["macro_f1"]))
    root.mkdir(parents=True, exist_ok=True)
    (root / "ablation.json").write_text(
        json.dumps({"strategy": spec.id.value, "seed": seed, "points": [asdict(p) for p in points]}, indent=1) + "\n"
    )
    return points


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

MISSING = "—"
LANG_TITLES = {"en": "English", "hinglish": "Code-mixed"}
MODE_TITLES = {"zero_shot": "Zero-Shot", "few_shot": "Few-Shot"}


def _fmt(value: float | None, digits: int) -> str:
    return MISSING if value is None else f"{value:.{digits}f}"


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def llm_table(results: Sequence[ExperimentResult]) -> str:
    """Models as rows; accuracy (5 dp) and macro-F1 (2 dp) per mode and language."""
    cells = [r for r in results if r.coordinates.get("kind") == "llm"]
    models = list(dict.fromkeys(r.coordinates["model"] for r in cells))
    modes = [m for m in MODE_TITLES if any(r.coordinates["mode"] == m for r in cells)]
    langs = list(dict.fromkeys(r.coordinates["language"] for r in cells))
    index = {(r.coordinates["model"], r.coordinates["mode"], r.coordinates["language"]): r for r in cells}
    header = ["Model"]
    for m in modes:
        for lang in langs:
            title = f"{MODE_TITLES[m]} {LANG_TITLES.get(lang, lang)}"
            header += [f"{title} Acc", f"{title} F1"]
    rows = [header]
    for model in models:
        row = [model]
        for m in modes:
            for lang in langs:
                r = index.get((model, m, lang))
                ok = r is not None and r.ok
                row += [_fmt(r.metrics["accuracy"] if ok else None, 5), _fmt(r.metrics["macro_f1"] if ok else None, 2)]
        rows.append(row)
    return _table(rows)


def classifier_table(results: Sequence[ExperimentResult]) -> str:
    """One row per strategy (first result seen); test split shown as in the study."""
    seen: dict[str, ExperimentResult] = {}
    for r in results:
        if r.coordinates.get("kind") == "classifier":
            seen.setdefault(r.coordinates["strategy"], r)
    rows = [["Fine-tuning data", "Testing data", "Accuracy", "F1 Score"]]
    for sid, r in seen.items():
        test = "Code-mixed [Sarcasm]" if r.coordinates.get("test_split") == "test_hinglish" else "English [Sarcasm]"
        acc = r.metrics.get("accuracy") if r.ok else None
        f1 = r.metrics.get("macro_f1") if r.ok else None
        rows.append([STRATEGY_LABELS.get(Strategy(sid), sid), test, _fmt(acc, 5), _fmt(f1, 2)])
    return _table(rows)


def reference_comparison(results: Sequence[ExperimentResult], reference: Mapping) -> list[dict]:
    rows = []
    for r in results:
        if not r.ok:
            continue
        c = r.coordinates
        target = None
        if c.get("kind") == "classifier":
            target = reference.get("classifier", {}).get(c["strategy"])
        elif c.get("kind") == "llm":
            target = reference.get("llm", {}).get(c["model"], {}).get(c["mode"], {}).get(c["language"])
        if target:
            for metric, published in sorted(target.items()):
                measured = r.metrics[metric]
                rows.append(
                    {"cell": r.cell, "metric": metric, "published": published,
                     "measured": measured, "delta": measured - published}
                )
    return rows


@dataclass
class ReportBundle:
    directory: Path
    files: list[Path]


def _savefig(fig, path: Path) -> None:
    fig.savefig(path, format="png", dpi=100, metadata={"Software": None})


def emit_report(
    results: Sequence[ExperimentResult],
    ablations: Mapping[str, Sequence[AblationPoint]] | None,
    out_dir: str | Path,
    reference: Mapping | None = None,
) -> ReportBundle:
    """Write text tables, JSON metrics, plots and misclassification exports.

    Output depends only on the inputs, so identical results give identical files.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not results:
        raise ExperimentError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    ablations = ablations or {}

    sections = []
    if any(r.coordinates.get("kind") == "llm" for r in results):
        sections.append("LLM sarcasm detection (zero-shot / few-shot)\n\n" + llm_table(results))
    if any(r.coordinates.get("kind") == "classifier" for r in results):
        sections.append("Fine-tuned classifier\n\n" + classifier_table(results))
        means = mean_auprc_by_strategy(results)
        if means:
            rows = [["Strategy", "Runs", "Mean AUPRC"]]
            for sid, value in means.items():
                n = sum(1 for r in results if r.coordinates.get("strategy") == sid and "pr_curve" in r.metrics)
                rows.append([sid, str(n), f"{value:.4f}"])
            sections.append("Average precision over runs\n\n" + _table(rows))
    for name, points in sorted(ablations.items()):
        rows = [["Train size", "Accuracy", "F1 Score"]]
        rows += [[str(p.train_size), _fmt(p.accuracy, 5), _fmt(p.macro_f1, 2)] for p in points]
        sections.append(f"Training-size ablation: {name}\n\n" + _table(rows))
    tables = out / "tables.txt"
    tables.write_text("\n\n\n".join(sections) + "\n", encoding="utf-8")
    files.append(tables)

    payload = {
        "results": {r.cell: r.to_json() for r in sorted(results, key=lambda r: r.cell)},
        "ablations": {k: [asdict(p) for p in v] for k, v in sorted(ablations.items())},
    }
    metrics_path = out / "metrics.json"
    metrics_path.write_text(json.dumps(payload, indent=1, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    files.append(metrics_path)

    if reference is not None:
        ref_path = out / "reference_comparison.json"
        ref_path.write_text(json.dumps(reference_comparison(results, reference), indent=1, sort_keys=True) + "\n")
        files.append(ref_path)

    curves = [(r.cell, r.metrics["pr_curve"]) for r in sorted(results, key=lambda r: r.cell) if r.ok and "pr_curve" in r.metrics]
    if curves:
        fig, ax = plt.subplots(figsize=(6, 5))
        for cell, c in curves:
            ax.step(c["recall"], c["precision"], where="post", label=f"{cell} (AP={c['auprc']:.3f})")
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_ylim(0, 1.02)
        ax.legend(fontsize=7)
        path = out / "pr_curves.png"
        _savefig(fig, path)
        plt.close(fig)
        files.append(path)

    for name, points in sorted(ablations.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        xs = [p.train_size for p in points]
        ax.plot(xs, [p.accuracy for p in points], marker="o", label="Accuracy")
        ax.plot(xs, [p.macro_f1 for p in points], marker="s", label="Macro F1")
        ax.set_xlabel("Training size")
        ax.set_title(name)
        ax.legend()
        path = out / f"ablation_{_safe(name)}.png"
        _savefig(fig, path)
        plt.close(fig)
        files.append(path)

    mis_dir = out / "misclassified"
    for r in sorted(results, key=lambda r: r.cell):
        preds_path = r.artifacts.get("predictions")
        if not (r.ok and preds_path and Path(preds_path).exists()):
            continue
        src = Path(preds_path).parent / "misclassified.csv"
        if src.exists():
            mis_dir.mkdir(exist_ok=True)
            dst = mis_dir / f"{_safe(r.cell)}.csv"
            dst.write_bytes(src.read_bytes())
            files.append(dst)
    return ReportBundle(out, files)


def collect_results(root: str | Path) -> tuple[list[ExperimentResult], dict[str, list[AblationPoint]]]:
    root = Path(root)
    results = [ExperimentResult.load(p) for p in sorted(root.glob("*/result.json"))]
    ablations = {}
    for p in sorted(root.glob("ablation-*/ablation.json")):
        obj = json.loads(p.read_text())
        ablations[p.parent.name] = [AblationPoint(**pt) for pt in obj["points"]]
    return results, ablations
