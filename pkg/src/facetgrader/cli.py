"""Command-line pipeline: generate pairs, train, evaluate, synthesize.

Options resolve in three layers: built-in defaults, then a JSON config file
(``--config``), then explicit flags, which always win. The effective merged
configuration is written as ``config.json`` next to every command's outputs,
and its hash plus the seed are embedded in every JSON artifact.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from .corpus import (
    CorpusFormatError,
    Document,
    load_corpus,
    save_corpus,
)
from .llm import (
    HttpLlmClient,
    LlmError,
    PipelineMockClient,
    ResponseCache,
    TokenBucket,
)
from .metrics import EvalReport, evaluate, spearman, UndefinedMetricError
from .pairs import GenerationConfig, build_contrastive_dataset
from .plots import render_confusion, render_f1_bars, render_loss_curves
from .synth import generate_corpus
from .training import (
    CheckpointError,
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    predict_document,
    save_checkpoint,
    train,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class ConfigurationError(ValueError):
    """Bad flags, paths, or config-file contents."""


def _config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _merge_options(args: argparse.Namespace, defaults: dict) -> dict:
    """Defaults < config file < explicit flags."""
    file_config = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            file_config = json.loads(path.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(file_config, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
        unknown = set(file_config) - set(defaults)
        if unknown:
            raise ConfigurationError(
                f"config file {path} has unknown option(s): {sorted(unknown)}"
            )
    merged = {}
    for name, default in defaults.items():
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            merged[name] = flag_value
        elif name in file_config:
            merged[name] = file_config[name]
        else:
            merged[name] = default
    return merged


def _write_effective_config(out_dir: Path, command: str, merged: dict) -> str:
    payload = {"command": command, **merged}
    digest = _config_hash(payload)
    payload["config_hash"] = digest
    with (out_dir / "config.json").open("w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, ensure_ascii=False)
        handle.write("\n")
    return digest


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(path_str: str, what: str) -> Path:
    path = Path(path_str)
    if not path.exists():
        raise ConfigurationError(f"{what} not found: {path}")
    return path


def _write_json(path: Path, payload: dict) -> None:
    with path.open("w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, ensure_ascii=False)
        handle.write("\n")


def _write_jsonl(path: Path, records) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for rec in records:
            handle.write(json.dumps(rec, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

GENERATE_DEFAULTS = {
    "corpus": None,
    "mock": False,
    "seed": 0,
    "model": "gpt-3.5-turbo",
    "endpoint": None,
    "parallelism": 4,
    "rate_limit": 4.0,
    "max_body_tokens": 3000,
    "max_completion_tokens": 2048,
    "stage_a_temperature": 0.0,
    "stage_b_temperature": 0.7,
}


def cmd_generate(args: argparse.Namespace) -> int:
    merged = _merge_options(args, GENERATE_DEFAULTS)
    if not merged["corpus"]:
        raise ConfigurationError("--corpus is required")
    corpus_path = _require_file(merged["corpus"], "corpus file")
    if not merged["mock"] and not merged["endpoint"]:
        raise ConfigurationError("either --mock or --endpoint must be given")

    out = _out_dir(args)
    digest = _write_effective_config(out, "generate", merged)

    corpus = load_corpus(corpus_path, schema="labeled")
    cache = ResponseCache(out / "llm_cache")
    if merged["mock"]:
        client = PipelineMockClient(cache=cache)
        model = "mock-pipeline"
    else:
        client = HttpLlmClient(
            endpoint=merged["endpoint"],
            cache=cache,
            rate_limit=TokenBucket(merged["rate_limit"], merged["parallelism"]),
        )
        model = merged["model"]

    config = GenerationConfig(
        model=model,
        seed=merged["seed"],
        stage_a_temperature=merged["stage_a_temperature"],
        stage_b_temperature=merged["stage_b_temperature"],
        max_body_tokens=merged["max_body_tokens"],
        max_completion_tokens=merged["max_completion_tokens"],
        parallelism=merged["parallelism"],
        config_hash=digest,
    )
    result = build_contrastive_dataset(corpus, client, config)

    save_corpus(result.pairs, out / "pairs.jsonl")
    _write_jsonl(out / "skips.jsonl", (s.to_record() for s in result.skips))
    _write_json(out / "generation_summary.json", {**result.summary, "config_hash": digest})
    print(
        f"built {result.summary['pairs_built']} pairs "
        f"({result.summary['skipped']} skipped, "
        f"{result.summary['fresh_llm_calls']} fresh LLM calls, "
        f"{result.summary['cached_llm_calls']} cached) -> {out / 'pairs.jsonl'}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "corpus": None,
    "pairs": None,
    "C": 10.0,
    "learning_rate": 0.5,
    "epochs": 30,
    "batch_size": 32,
    "seed": 0,
    "hidden_dim": 32,
    "vocab_size": 4096,
    "momentum": 0.0,
}


def cmd_train(args: argparse.Namespace) -> int:
    merged = _merge_options(args, TRAIN_DEFAULTS)
    if not merged["corpus"]:
        raise ConfigurationError("--corpus is required")
    corpus_path = _require_file(merged["corpus"], "corpus file")

    out = _out_dir(args)
    digest = _write_effective_config(out, "train", merged)

    labeled = load_corpus(corpus_path, schema="labeled")
    pairs = None
    if merged["pairs"]:
        pairs_path = _require_file(merged["pairs"], "pairs file")
        pairs = load_corpus(pairs_path, schema="pairs")

    config = TrainConfig(
        contrast_weight=merged["C"],
        learning_rate=merged["learning_rate"],
        epochs=merged["epochs"],
        batch_size=merged["batch_size"],
        seed=merged["seed"],
        hidden_dim=merged["hidden_dim"],
        vocab_size=merged["vocab_size"],
        momentum=merged["momentum"],
    )
    params, logs = train(labeled, pairs, config)

    save_checkpoint(
        out / "checkpoint.npz",
        params,
        meta={
            "config_hash": digest,
            "seed": config.seed,
            "train_config": config.to_dict(),
            "num_labeled": len(labeled),
            "num_pairs": len(pairs) if pairs else 0,
        },
    )
    _write_jsonl(out / "training_log.jsonl", (log.to_record() for log in logs))
    render_loss_curves(logs, out / "loss_curves.png")
    final = logs[-1]
    print(
        f"trained {config.epochs} epochs; final loss {final.total_loss:.4f} "
        f"(classification {final.cls_loss:.4f}, contrast {final.ctr_loss:.4f}) "
        f"-> {out / 'checkpoint.npz'}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

EVALUATE_DEFAULTS = {
    "checkpoint": None,
    "test": None,
}

_TABLE_COLUMNS = ("rho", "tau", "QWK", "Acc.%", "F1@0", "F1@1", "F1@2", "F1@3", "F1@4", "macroF1")


def _fmt_cell(value: float | None, percent: bool = False) -> str:
    if value is None:
        return "undef"
    return f"{value:.2f}" if percent else f"{value:.3f}"


def format_report_table(rows: dict[str, EvalReport]) -> str:
    """Aligned text table, one row per evaluator."""
    label_width = max(len("evaluator"), *(len(name) for name in rows))
    header = "evaluator".ljust(label_width) + "".join(c.rjust(9) for c in _TABLE_COLUMNS)
    lines = [header, "-" * len(header)]
    for name, report in rows.items():
        cells = [
            _fmt_cell(report.spearman),
            _fmt_cell(report.kendall),
            _fmt_cell(report.qwk),
            _fmt_cell(report.accuracy_percent, percent=True),
            *(_fmt_cell(f) for f in report.f1_per_class),
            _fmt_cell(report.macro_f1),
        ]
        lines.append(name.ljust(label_width) + "".join(c.rjust(9) for c in cells))
    return "\n".join(lines)


def _report_csv_rows(rows: dict[str, EvalReport]) -> list[str]:
    header = "evaluator,spearman,kendall,qwk,accuracy,accuracy_percent," + ",".join(
        f"f1_{g}" for g in range(5)
    ) + ",macro_f1"
    out = [header]
    for name, report in rows.items():
        cells = [
            name,
            *(
                "" if v is None else repr(float(v))
                for v in (report.spearman, report.kendall, report.qwk)
            ),
            repr(float(report.accuracy)),
            repr(float(report.accuracy_percent)),
            *(repr(float(f)) for f in report.f1_per_class),
            repr(float(report.macro_f1)),
        ]
        out.append(",".join(cells))
    return out


def _aux_spearman(test_docs: list[Document], predictions: list[int]) -> dict:
    """Spearman against any optional sub-dimension gold columns."""
    keys = sorted({key for doc in test_docs if doc.aux_grades for key, _ in doc.aux_grades})
    results: dict[str, float | None] = {}
    for key in keys:
        gold, pred = [], []
        for doc, prediction in zip(test_docs, predictions):
            aux = dict(doc.aux_grades) if doc.aux_grades else {}
            if key in aux:
                gold.append(aux[key])
                pred.append(prediction)
        if len(gold) < 2:
            continue
        try:
            results[key] = spearman(gold, pred)
        except UndefinedMetricError:
            results[key] = None
    return results


def cmd_evaluate(args: argparse.Namespace) -> int:
    merged = _merge_options(args, EVALUATE_DEFAULTS)
    checkpoints = merged["checkpoint"]
    if not checkpoints:
        raise ConfigurationError("--checkpoint is required")
    if isinstance(checkpoints, str):
        checkpoints = [checkpoints]
    if not merged["test"]:
        raise ConfigurationError("--test is required")
    test_path = _require_file(merged["test"], "test corpus")
    checkpoint_paths = [_require_file(c, "checkpoint") for c in checkpoints]

    out = _out_dir(args)
    merged_for_hash = {**merged, "checkpoint": [str(c) for c in checkpoint_paths]}
    digest = _write_effective_config(out, "evaluate", merged_for_hash)

    test_docs = load_corpus(test_path, schema="labeled")
    unlabeled = [d.id for d in test_docs if d.grade is None]
    if unlabeled:
        raise ConfigurationError(
            f"test corpus has {len(unlabeled)} unlabeled document(s), "
            f"first: {unlabeled[0]!r}"
        )
    gold = [doc.grade for doc in test_docs]

    rows: dict[str, EvalReport] = {}
    predictions: dict[str, list[int]] = {}
    labels = []
    for path in checkpoint_paths:
        label = path.stem
        if label in rows:
            label = f"{label}:{len(rows)}"
        labels.append(label)
        params, meta = load_checkpoint(path)
        preds = [predict_document(doc, params)[0] for doc in test_docs]
        predictions[label] = preds
        rows[label] = evaluate(gold, preds)
        payload = {
            **rows[label].to_dict(),
            "checkpoint": str(path),
            "checkpoint_config_hash": meta.get("config_hash", ""),
            "test_corpus": str(test_path),
            "num_documents": len(test_docs),
            "config_hash": digest,
            "seed": meta.get("seed"),
        }
        aux = _aux_spearman(test_docs, preds)
        if aux:
            payload["aux_spearman"] = aux
        suffix = "" if len(checkpoint_paths) == 1 else f"_{label}"
        _write_json(out / f"report{suffix}.json", payload)

    (out / "report.csv").write_text("\n".join(_report_csv_rows(rows)) + "\n", "utf-8")
    render_f1_bars(
        {label: (list(r.f1_per_class), r.macro_f1) for label, r in rows.items()},
        out / "f1_by_grade.png",
    )
    for label in labels:
        suffix = "" if len(labels) == 1 else f"_{label}"
        render_confusion(gold, predictions[label], out / f"confusion{suffix}.png")

    print(format_report_table(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

SYNTH_DEFAULTS = {
    "size": None,
    "seed": 0,
}


def cmd_synth(args: argparse.Namespace) -> int:
    merged = _merge_options(args, SYNTH_DEFAULTS)
    if not merged["size"]:
        raise ConfigurationError("--size is required")

    out = _out_dir(args)
    digest = _write_effective_config(out, "synth", merged)

    docs, truths = generate_corpus(merged["size"], merged["seed"])
    save_corpus(docs, out / "corpus.jsonl")
    _write_jsonl(out / "truth.jsonl", (t.to_record() for t in truths))

    histogram = {grade: 0 for grade in range(5)}
    for doc in docs:
        histogram[doc.grade] += 1
    _write_json(
        out / "synth_summary.json",
        {
            "documents": len(docs),
            "grade_histogram": histogram,
            "seed": merged["seed"],
            "config_hash": digest,
        },
    )
    print(f"wrote {len(docs)} synthetic documents -> {out / 'corpus.jsonl'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facetgrader",
        description="Counterfactual pair generation, joint-loss grader training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", required=True, help="output directory (all artifacts land here)")
        p.add_argument("--config", help="JSON config file; explicit flags override it")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    p = sub.add_parser("generate", help="build contrastive pairs from a labeled corpus")
    p.add_argument("--corpus", help="labeled corpus JSONL")
    p.add_argument("--mock", action="store_true", default=None,
                   help="use the offline pipeline mock instead of an HTTP service")
    p.add_argument("--seed", type=int, help="facet assignment seed")
    p.add_argument("--model", help="chat model name")
    p.add_argument("--endpoint", help="chat-completion endpoint URL")
    p.add_argument("--parallelism", type=int, help="max in-flight requests")
    p.add_argument("--rate-limit", dest="rate_limit", type=float,
                   help="requests per second for the HTTP client")
    p.add_argument("--max-body-tokens", dest="max_body_tokens", type=int)
    p.add_argument("--max-completion-tokens", dest="max_completion_tokens", type=int)
    p.add_argument("--stage-a-temperature", dest="stage_a_temperature", type=float)
    p.add_argument("--stage-b-temperature", dest="stage_b_temperature", type=float)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the grader on a labeled corpus (pairs optional)")
    p.add_argument("--corpus", help="labeled corpus JSONL")
    p.add_argument("--pairs", help="contrastive pairs JSONL; omit for supervised-only")
    p.add_argument("--C", dest="C", type=float,
                   help="contrast loss weight (0 disables the pair term)")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--vocab-size", dest="vocab_size", type=int)
    p.add_argument("--momentum", type=float)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score checkpoint(s) against a labeled test corpus")
    p.add_argument("--checkpoint", action="append",
                   help="checkpoint file; repeat to compare evaluators side by side")
    p.add_argument("--test", help="labeled test corpus JSONL")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--size", type=int, help="number of documents")
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (
        ConfigurationError,
        CorpusFormatError,
        CheckpointError,
        LlmError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
