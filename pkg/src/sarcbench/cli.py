"""Command-line entry point: ``sarcbench <subcommand> --config study.json [--set key=value ...]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 external-service error.
Logs and the resolved configuration go to stderr; artifacts go to files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import experiments as X
from .classifier import ClassifierError, ModelCheckpoint, predict, sequential_fine_tune, train
from .corpus import CorpusError, write_jsonl
from .llm_eval import HttpInferenceClient, PromptError, ResponseCache
from .metrics import MetricsError, paired_bootstrap
from .synthgen import (
    DEFAULT_REFUSAL_PHRASES,
    HttpTranslationClient,
    TranslationCache,
    TranslationError,
    TranslationStatus,
    TransportError,
    attach_audit,
    audit_statistics,
    load_translations,
    mark_manual,
    read_audit_csv,
    sample_with_quotas,
    save_translations,
    to_hinglish_records,
    translate_corpus,
    write_audit_sheet,
)

log = logging.getLogger("sarcbench")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SERVICE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise UsageError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sarcbench", description="Code-mixed sarcasm detection benchmark toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="experiment config (JSON)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, dotted keys allowed")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    add("prepare-data", "balance and split corpora; write split files and manifest")

    p = add("translate", "translate fine-tune/test splits into Hinglish")
    p.add_argument("--manual", type=Path, help="CSV (id,text) of manual translations for refused records")

    p = add("audit", "sample translations for annotation, or score completed annotations")
    p.add_argument("--annotations", type=Path, help="completed audit CSV (id,annotator_a,annotator_b,adjudicated)")
    p.add_argument("--out", type=Path, help="where to write the annotation sheet")

    p = add("train", "train the base classifier on the English training split")
    p.add_argument("--split", default="train_en")
    p.add_argument("--out", type=Path)

    p = add("finetune", "sequentially fine-tune a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", type=Path)

    p = add("eval-model", "evaluate one checkpoint, or run the classifier strategies")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--split", default="test_hinglish")
    p.add_argument("--strategies", help="comma-separated strategy ids (default: config)")
    p.add_argument("--out", type=Path)

    add("eval-llm", "run the LLM zero-/few-shot grid")

    p = add("compare", "paired bootstrap of accuracy between two evaluated cells")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)

    add("ablate", "training-size ablation")

    p = add("report", "write tables, plots and exports from finished runs")
    p.add_argument("--out", type=Path)
    return parser


def _config(args) -> dict:
    overrides = dict(_parse_override(o) for o in args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = X.load_config(args.config, overrides)
    print(json.dumps({"resolved_config": config, "seed": config["seed"]}, sort_keys=True), file=sys.stderr)
    return config


def _splits(config: dict) -> dict:
    splits = X.load_splits(config["data"]["split_dir"])
    if not splits:
        raise CorpusError(f"no split files in {config['data']['split_dir']}; run prepare-data first")
    return splits


def cmd_prepare_data(args, config) -> None:
    splits = X.prepare_data(config)
    for ref, split in splits.items():
        counts = {k.value: v for k, v in sorted(split.class_counts.items(), key=lambda kv: kv[0].value)}
        log.info("%s: %d records %s", ref, len(split), counts)


def cmd_translate(args, config) -> None:
    tc = config["translation"]
    split_dir = Path(config["data"]["split_dir"])
    splits = _splits(config)
    out_path = split_dir / "translations.jsonl"
    if args.manual:
        records = load_translations(out_path)
        with open(args.manual, encoding="utf-8", newline="") as fh:
            manual = {row["id"]: row["text"] for row in csv.DictReader(fh)}
        records = [mark_manual(r, manual[r.source_id]) if r.source_id in manual else r for r in records]
    else:
        if not tc.get("endpoint"):
            raise TranslationError("config translation.endpoint is not set")
        client = HttpTranslationClient(tc["endpoint"], tc["model"], tc.get("api_key_env"), tc["response_key"])
        cache = TranslationCache(tc["cache"] or split_dir / "translation_cache.jsonl")
        sources = [r for ref in ("finetune_en", "test_en", "sentiment_finetune_en") if ref in splits for r in splits[ref].records]
        records = translate_corpus(
            client, [(r.id, r.text) for r in sources], cache, tc["batch_size"],
            refusal_phrases=tc.get("refusal_phrases") or DEFAULT_REFUSAL_PHRASES,
            max_retries=tc["max_retries"], parallelism=tc["parallelism"],
        )
    save_translations(records, out_path)
    pending = [r.source_id for r in records if r.status in (TranslationStatus.REFUSED, TranslationStatus.ERROR)]
    if pending:
        log.warning("%d records need manual translation (sarcbench translate --manual FILE): %s", len(pending), pending[:10])

    data = config["data"]
    for task_refs, key in ((("finetune_en", "test_en"), "sarcasm_hinglish"), (("sentiment_finetune_en",), "sentiment_hinglish")):
        sources = [r for ref in task_refs if ref in splits for r in splits[ref].records]
        if not sources:
            continue
        target = Path(data.get(key) or split_dir / f"{key}.jsonl")
        write_jsonl(to_hinglish_records(records, sources), target)
        data[key] = str(target)
        log.info("wrote %s", target)
    if not pending:
        X.prepare_data(config)


def cmd_audit(args, config) -> None:
    split_dir = Path(config["data"]["split_dir"])
    records = load_translations(split_dir / "translations.jsonl")
    if args.annotations:
        audited = attach_audit(records, read_audit_csv(args.annotations))
        stats = audit_statistics(audited)
        print(json.dumps({"n": stats.n, "raw_agreement": stats.raw_agreement,
                          "unsatisfactory_rate": stats.unsatisfactory_rate}, sort_keys=True))
        return
    splits = _splits(config)
    groups = {
        "sarcasm": [r for r in records if any(r.source_id in set(splits[k].ids) for k in ("finetune_en", "test_en") if k in splits)],
        "sentiment": [r for r in records if "sentiment_finetune_en" in splits and r.source_id in set(splits["sentiment_finetune_en"].ids)],
    }
    quotas = {k: v for k, v in config["audit"]["quotas"].items() if groups.get(k)}
    sample = sample_with_quotas(groups, quotas, int(config["seed"]))
    out = args.out or split_dir / "audit_sheet.csv"
    write_audit_sheet(sample, out)
    log.info("wrote %d records to %s", len(sample), out)


def cmd_train(args, config) -> None:
    cfg = replace(X.classifier_config(config), seed=int(config["seed"]))
    out = args.out or X.run_root(config) / "checkpoints" / f"base-{args.split}-seed{config['seed']}"
    ckpt = train(cfg, _splits(config)[args.split], out)
    log.info("checkpoint written to %s (%s)", ckpt.root, " > ".join(ckpt.provenance))


def cmd_finetune(args, config) -> None:
    src = ModelCheckpoint.load(args.checkpoint)
    split = _splits(config)[args.split]
    out = args.out or args.checkpoint.parent / f"{args.checkpoint.name}+{args.split}"
    ckpt = sequential_fine_tune(src, split, None, out)
    log.info("checkpoint written to %s (%s)", ckpt.root, " > ".join(ckpt.provenance))


def cmd_eval_model(args, config) -> None:
    splits = _splits(config)
    invalid = config["invalid_predictions"]
    if args.checkpoint:
        ckpt = ModelCheckpoint.load(args.checkpoint)
        split = splits[args.split]
        preds = predict(ckpt, split.records, dataset_id=args.split)
        out = args.out or X.run_root(config) / f"eval-{args.checkpoint.name}-{args.split}"
        m = X.score_cell(preds, split, out, invalid)
        log.info("accuracy %.5f macro-F1 %.2f -> %s", m["accuracy"], m["macro_f1"], out)
        return
    ids = args.strategies.split(",") if args.strategies else config["strategies"]
    specs = [X.DEFAULT_STRATEGIES[X.Strategy(s)] for s in ids]
    seeds = config.get("classifier_seeds") or [int(config["seed"])]
    results = X.run_strategies(specs, splits, X.classifier_config(config), seeds, args.out or X.run_root(config), invalid)
    for r in results:
        log.info("%s: accuracy %.5f macro-F1 %.2f", r.cell, r.metrics["accuracy"], r.metrics["macro_f1"])


def cmd_eval_llm(args, config) -> None:
    lc = config["llm"]
    splits = _splits(config)
    tests = {lang: splits[f"test_{lang}"] for lang in lc["languages"]}
    root = X.run_root(config)
    client = HttpInferenceClient(lc["endpoint"], lc["response_key"], lc["options"])
    cache = ResponseCache(lc["cache"] or root / "llm_cache.jsonl")
    kwargs = {"body": lc["prompt"]} if lc.get("prompt") else {}
    try:
        results = X.run_llm_grid(
            client, lc["models"], lc["modes"], tests, root, splits.get(lc["fewshot_pool"]),
            lc["k_per_class"], int(config["seed"]), cache,
            unparseable_retries=lc["unparseable_retries"], transport_retries=lc["transport_retries"],
            parallelism=lc["parallelism"], invalid=config["invalid_predictions"], **kwargs,
        )
    finally:
        client.close()
    failed = [r for r in results if not r.ok]
    errors = sum(json.loads((root / r.cell / "run_report.json").read_text())["error"] for r in results if r.ok)
    for r in results:
        if r.ok:
            log.info("%s: accuracy %.5f macro-F1 %.2f", r.cell, r.metrics["accuracy"], r.metrics["macro_f1"])
    if failed or errors:
        raise TransportError(f"{len(failed)} failed cells, {errors} errored requests")


def cmd_compare(args, config) -> None:
    pa, gold_a = X.load_cell(args.a)
    pb, gold_b = X.load_cell(args.b)
    la = {r.id: r.label for r in gold_a.records}
    lb = {r.id: r.label for r in gold_b.records}
    if la != lb:
        raise CorpusError("the two cells were scored against different gold labels")
    bc = config["bootstrap"]
    res = paired_bootstrap(pa, pb, gold_a, bc["n_iterations"], int(config["seed"]), bc.get("resample_size"))
    print(json.dumps(res.to_json(), sort_keys=True))


def cmd_ablate(args, config) -> None:
    ac = config["ablation"]
    spec = X.DEFAULT_STRATEGIES[X.Strategy(ac["strategy"])]
    points = X.run_size_ablation(
        spec, ac["sizes"], int(config["seed"]), _splits(config), X.classifier_config(config),
        X.run_root(config), config["invalid_predictions"],
    )
    for p in points:
        log.info("size %d: accuracy %.5f macro-F1 %.2f", p.train_size, p.accuracy, p.macro_f1)


def cmd_report(args, config) -> None:
    root = X.run_root(config)
    results, ablations = X.collect_results(root)
    bundle = X.emit_report(results, ablations, args.out or root / "report", X.load_reference_targets())
    log.info("report written to %s (%d files)", bundle.directory, len(bundle.files))


COMMANDS = {
    "prepare-data": cmd_prepare_data,
    "translate": cmd_translate,
    "audit": cmd_audit,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "eval-model": cmd_eval_model,
    "eval-llm": cmd_eval_llm,
    "compare": cmd_compare,
    "ablate": cmd_ablate,
    "report": cmd_report,
}

DATA_ERRORS = (CorpusError, ClassifierError, MetricsError, PromptError, TranslationError, X.ExperimentError,
               FileNotFoundError, KeyError, ValueError)


def _fail(code: int, exc: BaseException) -> int:
    line = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    print(json.dumps(line), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    log.setLevel(logging.INFO)
    try:
        config = _config(args)
        COMMANDS[args.command](args, config)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except TransportError as exc:
        return _fail(EXIT_SERVICE, exc)
    except X.ExperimentError as exc:
        code = EXIT_SERVICE if isinstance(exc.__cause__, TransportError) else EXIT_DATA
        return _fail(code, exc)
    except DATA_ERRORS as exc:
        return _fail(EXIT_DATA, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
