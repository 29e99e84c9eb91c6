"""Benchmark toolkit for sarcasm detection in code-mixed Hinglish text.

Modules:

- :mod:`sarcbench.corpus`: dataset records, loaders, balancing and splits
- :mod:`sarcbench.synthgen`: LLM translation into Hinglish and the translation audit
- :mod:`sarcbench.classifier`: encoder fine-tuning with sequential transfer
- :mod:`sarcbench.llm_eval`: zero-/few-shot LLM classification harness
- :mod:`sarcbench.metrics`: confusion matrices, F1, PR curves, paired bootstrap
- :mod:`sarcbench.experiments`: strategy runs, LLM grid, ablations, reports
- :mod:`sarcbench.cli`: the ``sarcbench`` command
"""

from .corpus import DatasetSplit, Label, LabeledSentence, Lang, SplitName, Task
from .metrics import ConfusionMatrix2x2, accuracy, macro_f1, paired_bootstrap, pr_curve
from .predictions import EntryStatus, PredictionEntry, PredictionSet

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix2x2",
    "DatasetSplit",
    "EntryStatus",
    "Label",
    "LabeledSentence",
    "Lang",
    "PredictionEntry",
    "PredictionSet",
    "SplitName",
    "Task",
    "accuracy",
    "macro_f1",
    "paired_bootstrap",
    "pr_curve",
]
