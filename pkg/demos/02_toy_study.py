"""Walkthrough: the classifier study end to end on toy data.

Builds a tiny random DistilBERT and separable toy corpora, then runs the same
steps as the full study: prepare splits, train, fine-tune under each of the
five strategies, ablate training size and emit the report. Numbers are
meaningless at this scale; the plumbing is the point. About a minute on CPU:

    python3 demos/02_toy_study.py [output-dir]
"""

# %%
import json
import sys
import tempfile
from pathlib import Path

from sarcbench import experiments as X
from sarcbench.corpus import Label, write_jsonl
from sarcbench.toy import hinglish_counterpart, make_sarcasm_corpus, make_sentiment_corpus, make_toy_encoder

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="sarcbench-demo-"))
work.mkdir(parents=True, exist_ok=True)
print("working in", work)

# %% Toy corpora. Hinglish files share ids with the English ones they mirror.
sarcasm = make_sarcasm_corpus(60, 80, seed=1)
sentiment = make_sentiment_corpus({Label.POSITIVE: 12, Label.NEGATIVE: 12, Label.NEUTRAL: 12}, seed=2)
write_jsonl(sarcasm, work / "sarcasm_en.jsonl")
write_jsonl(hinglish_counterpart(sarcasm), work / "sarcasm_hinglish.jsonl")
write_jsonl(sentiment, work / "sentiment_en.jsonl")
write_jsonl(hinglish_counterpart(sentiment), work / "sentiment_hinglish.jsonl")
encoder = make_toy_encoder(work / "encoder")

# %% Config: the full-study defaults with the counts shrunk to fit the toy data.
config = X.load_config(None, {
    "output_root": str(work / "runs"),
    "experiment_id": "toy",
    "data.sarcasm_en": str(work / "sarcasm_en.jsonl"),
    "data.sarcasm_hinglish": str(work / "sarcasm_hinglish.jsonl"),
    "data.sentiment_en": str(work / "sentiment_en.jsonl"),
    "data.sentiment_hinglish": str(work / "sentiment_hinglish.jsonl"),
    "data.sarcasm_counts": {"train": 40, "finetune_en": 10, "test": 10},
    "data.sentiment_counts": {"positive": 10, "negative": 10, "neutral": 10},
    "classifier": {"base_encoder_id": str(encoder), "batch_size": 8, "epochs": 5, "learning_rate": 3e-3},
})
splits = X.prepare_data(config)
for ref, split in splits.items():
    print(f"{ref:30s} {len(split):4d} records  {split.descriptor}")

# %% Five strategies, one shared base model per seed.
root = X.run_root(config)
specs = list(X.DEFAULT_STRATEGIES.values())
results = X.run_strategies(specs, splits, X.classifier_config(config), seeds=[13, 14], root=root)
print(X.classifier_table(results))
print("mean AUPRC per strategy:", X.mean_auprc_by_strategy(results))

# %% Training-size ablation for the code-mixed fine-tuned strategy.
points = X.run_size_ablation(
    X.DEFAULT_STRATEGIES[X.Strategy.FT_CM_SARC], [10, 20, 40], 13, splits, X.classifier_config(config), root
)
for p in points:
    print(p)

# %% Report: tables, metrics JSON, plots and misclassified-sentence exports.
found, ablations = X.collect_results(root)
bundle = X.emit_report(found, ablations, root / "report", X.load_reference_targets())
print((bundle.directory / "tables.txt").read_text())
print(json.dumps([p.name for p in bundle.files], indent=1))
