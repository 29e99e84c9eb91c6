"""Walkthrough: scoring sarcasm predictions.

Recomputes accuracy and macro-F1 from the published confusion matrices, draws
a PR curve from scored predictions, and runs a paired bootstrap between two
systems. Runs in a few seconds:

    python3 demos/01_metrics_walkthrough.py
"""

# %%
import numpy as np

from sarcbench import ConfusionMatrix2x2, accuracy, macro_f1, pr_curve
from sarcbench.corpus import DatasetSplit, Label, Lang, LabeledSentence, SplitName, Task
from sarcbench.experiments import load_reference_targets
from sarcbench.metrics import paired_bootstrap, per_class_scores
from sarcbench.predictions import PredictionEntry, PredictionSet

# %% Published confusion matrices live in a fixtures file next to the package.
ref = load_reference_targets()
for key, counts in ref["confusion"].items():
    cm = ConfusionMatrix2x2.from_json(counts)
    print(f"{key:28s} acc={accuracy(cm):.5f}  macro-F1={macro_f1(cm):.4f}  n={cm.total}")

# %% Per-class view of the best classifier: most errors are missed sarcasm.
best = ConfusionMatrix2x2.from_json(ref["confusion"]["FT_CM_SARC"])
for label, prf in per_class_scores(best).items():
    print(label, {k: round(v, 4) for k, v in prf.items()})

# %% PR curve from scores. Every distinct score is a threshold; ties form one step.
rng = np.random.default_rng(0)
gold = rng.integers(0, 2, size=200).astype(bool)
scores = np.clip(0.35 * gold + rng.normal(0.4, 0.2, size=200), 0, 1).round(2)
curve = pr_curve(list(zip(scores.tolist(), gold.tolist())))
print(f"AUPRC {curve.auprc:.4f} over {len(curve.thresholds)} thresholds")

# %% Paired bootstrap: two systems scored on the same 2344 sentences.
n = 2344
labels = [Label.SARCASTIC if i % 2 else Label.NON_SARCASTIC for i in range(n)]
split = DatasetSplit(
    SplitName.TEST,
    tuple(LabeledSentence(f"s{i}", f"sentence {i}", Task.SARCASM, Lang.HINGLISH, lab) for i, lab in enumerate(labels)),
)
flip = {Label.SARCASTIC: Label.NON_SARCASTIC, Label.NON_SARCASTIC: Label.SARCASTIC}


def system(p_correct, seed):
    r = np.random.default_rng(seed).random(n)
    return PredictionSet(
        f"p={p_correct}", "demo",
        [PredictionEntry(f"s{i}", lab if r[i] < p_correct else flip[lab]) for i, lab in enumerate(labels)],
    )


result = paired_bootstrap(system(0.62, 1), system(0.60, 2), split, seed=0)
print(result)
print("significant" if result.significant else "not significant at the 95% level")
