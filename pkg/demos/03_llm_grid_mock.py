"""Walkthrough: the zero-/few-shot LLM grid against a local stand-in server.

A canned HTTP server speaks the same request format as a local Ollama
instance. One model replays a published confusion matrix exactly; the others
answer from cue words. The second pass is served entirely from the response
cache. To run against real models, point ``llm.endpoint`` in a config at your
server and use ``sarcbench eval-llm`` instead.

    python3 demos/03_llm_grid_mock.py
"""

# %%
import tempfile
from pathlib import Path

from sarcbench import experiments as X
from sarcbench.corpus import DatasetSplit, SplitName
from sarcbench.llm_eval import HttpInferenceClient, ResponseCache
from sarcbench.toy import (
    SARCASTIC_WORDS,
    CannedInferenceServer,
    confusion_responder,
    hinglish_counterpart,
    make_sarcasm_corpus,
    sentence_from_prompt,
)

work = Path(tempfile.mkdtemp(prefix="sarcbench-grid-"))

# %% A 2344-sentence test set in both languages, plus a pool for few-shot exemplars.
english = make_sarcasm_corpus(1172, 1172, seed=5, prefix="t")
tests = {
    "en": DatasetSplit(SplitName.TEST, tuple(english)),
    "hinglish": DatasetSplit(SplitName.TEST, tuple(hinglish_counterpart(english))),
}
pool = DatasetSplit(SplitName.FINETUNE_HINGLISH, tuple(hinglish_counterpart(make_sarcasm_corpus(10, 10, prefix="f"))))

# %% Responses: "phi4" zero-shot on Hinglish replays the published matrix.
m = X.load_reference_targets()["confusion"]["phi4/zero_shot/hinglish"]
replay = confusion_responder({r.text: r.label for r in tests["hinglish"].records}, m["tp"], m["fn"], m["fp"], m["tn"])


def respond(model, prompt):
    text = sentence_from_prompt(prompt)
    if model == "phi4" and "Example:" not in prompt and text in replay:
        return replay[text]
    return "Sarcastic" if any(w in text.split() for w in SARCASTIC_WORDS) else "Non-Sarcastic"


# %% Run the grid twice; the second run costs no requests.
cache = ResponseCache(work / "llm_cache.jsonl")
with CannedInferenceServer(respond) as server:
    client = HttpInferenceClient(server.endpoint)
    for attempt in (1, 2):
        before = server.calls
        results = X.run_llm_grid(client, ["llama3.1", "phi4"], ["zero_shot", "few_shot"], tests, work / "runs",
                                 fewshot_pool=pool, cache=cache, parallelism=4)
        print(f"pass {attempt}: {server.calls - before} requests")
    client.close()

print(X.llm_table(results))
bundle = X.emit_report(results, {}, work / "report", X.load_reference_targets())
print("report in", bundle.directory)
