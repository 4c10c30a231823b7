"""Command-line surface: gen, compress, evaluate, train, report.

Exit codes: 0 success, 1 usage error, 2 data or config error. Every run
writes a manifest next to its output recording the effective config, seed,
thread count, and stage timings, so any output can be reproduced from its
manifest alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import resource
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .compress import compress_document
from .core import (
    CompressionResult,
    CorpusFormatError,
    Document,
    PipelineConfig,
    TokpressError,
    validate_document,
)
from .datagen import generate
from .io_jsonl import (
    config_to_obj,
    load_config,
    load_genspec,
    obj_to_result,
    parse_corpus,
    parse_results,
    result_to_obj,
    save_config,
    write_corpus,
    write_manifest,
)
from .metrics import CorpusReport, build_report
from .multimodal import compress_multimodal
from .trainer import train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _peak_memory_mb() -> float:
    # ru_maxrss is KiB on Linux; this is a process-level estimate, not a
    # per-stage measurement.
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Apply precedence: flag > config file > built-in default."""
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides: dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "budget", None) is not None:
        overrides["rho"] = args.budget
    if getattr(args, "target_retention", None) is not None:
        overrides["target_retention"] = args.target_retention
    if getattr(args, "no_propagation", False):
        overrides["alpha"] = 0.0
    if getattr(args, "no_alignment_constraint", False):
        overrides["delta_align"] = 1.0
    return cfg.with_overrides(**overrides) if overrides else cfg


def _remove_outputs(paths: Sequence[Path]) -> None:
    for path in paths:
        path.unlink(missing_ok=True)


def cmd_gen(args: argparse.Namespace) -> int:
    spec = load_genspec(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    t0 = time.perf_counter()
    docs = generate(spec, threads=args.threads)
    t1 = time.perf_counter()
    out = Path(args.output)
    try:
        write_corpus(docs, out)
    except Exception:
        _remove_outputs([out])
        raise
    t2 = time.perf_counter()
    write_manifest(
        out,
        "gen",
        dataclasses.asdict(spec),
        {"spec": str(args.spec)},
        spec.seed,
        args.threads,
        {"generate_ms": (t1 - t0) * 1e3, "write_ms": (t2 - t1) * 1e3},
    )
    return 0


def _compress_one(
    doc: Document, cfg: PipelineConfig, fixed_budget: bool, coverage_repair: bool
) -> CompressionResult:
    if doc.visual_tokens is not None:
        return compress_multimodal(
            doc,
            cfg,
            use_controller=not fixed_budget,
            coverage_repair=coverage_repair,
        )
    return compress_document(
        doc,
        cfg,
        use_controller=not fixed_budget,
        coverage_repair=coverage_repair,
    )


def cmd_compress(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    fixed_budget = args.budget is not None
    coverage_repair = not args.no_coverage

    t0 = time.perf_counter()
    docs = [validate_document(d, cfg) for d in parse_corpus(args.input, cfg.d)]
    t1 = time.perf_counter()
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(
                pool.map(
                    lambda d: _compress_one(d, cfg, fixed_budget, coverage_repair),
                    docs,
                )
            )
    else:
        results = [_compress_one(d, cfg, fixed_budget, coverage_repair) for d in docs]
    t2 = time.perf_counter()

    out = Path(args.output)
    try:
        with open(out, "w", encoding="utf-8") as handle:
            for doc, result in zip(docs, results):
                handle.write(
                    json.dumps(result_to_obj(doc.id, result, args.scores)) + "\n"
                )
    except Exception:
        _remove_outputs([out])
        raise
    t3 = time.perf_counter()
    write_manifest(
        out,
        "compress",
        config_to_obj(cfg),
        {"input": str(args.input), "config": str(args.config or "")},
        cfg.seed,
        args.threads,
        {
            "parse_ms": (t1 - t0) * 1e3,
            "compress_ms": (t2 - t1) * 1e3,
            "write_ms": (t3 - t2) * 1e3,
        },
    )
    return 0


def report_to_obj(report: CorpusReport) -> dict[str, Any]:
    def row_obj(row) -> dict[str, Any]:
        return {
            "tag": row.tag,
            "docs": row.docs,
            "baseline_tokens": row.baseline_tokens,
            "compressed_tokens": row.compressed_tokens,
            "compression_percent": row.compression_percent,
            "mean_retention": row.mean_retention,
            "mean_alignment": row.mean_alignment,
            "semantic_loss": row.semantic_loss_count,
            "syntactic_error": row.syntactic_error_count,
            "task_inconsistency": row.task_inconsistency_count,
        }

    return {
        "tool_version": __version__,
        "dataset_tag": report.dataset_tag,
        "rows": [row_obj(r) for r in report.rows],
        "overall": row_obj(report.overall),
        "retention_curve": [[bucket, mean] for bucket, mean in report.retention_curve],
        "timings_ms": dict(report.timings_ms),
        "peak_memory_mb_estimate": report.peak_memory_mb_estimate,
    }


_ROW_FIELDS = (
    "tag",
    "docs",
    "baseline_tokens",
    "compressed_tokens",
    "compression_percent",
    "mean_retention",
    "mean_alignment",
    "semantic_loss",
    "syntactic_error",
    "task_inconsistency",
)


def render_csv(obj: dict[str, Any]) -> str:
    lines = [",".join(_ROW_FIELDS)]
    for row in list(obj["rows"]) + [obj["overall"]]:
        cells = ["" if row[f] is None else str(row[f]) for f in _ROW_FIELDS]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def render_markdown(obj: dict[str, Any]) -> str:
    def table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> list[str]:
        out = ["| " + " | ".join(headers) + " |"]
        out.append("|" + "|".join(" --- " for _ in headers) + "|")
        for row in rows:
            out.append("| " + " | ".join("-" if c is None else str(c) for c in row) + " |")
        return out

    rows = list(obj["rows"]) + [obj["overall"]]
    lines = [f"# Compression report: {obj['dataset_tag']}", ""]
    lines += ["## Token compression efficiency", ""]
    lines += table(
        ["Dataset", "Docs", "Baseline", "Compressed", "Compression (%)", "Mean retention"],
        [
            [r["tag"], r["docs"], r["baseline_tokens"], r["compressed_tokens"],
             r["compression_percent"], round(r["mean_retention"], 4)]
            for r in rows
        ],
    )
    aligned = [r for r in rows if r["mean_alignment"] is not None]
    if aligned:
        lines += ["", "## Semantic alignment", ""]
        lines += table(
            ["Dataset", "Mean alignment"],
            [[r["tag"], round(r["mean_alignment"], 4)] for r in aligned],
        )
    lines += ["", "## Retention by input length", ""]
    lines += table(
        ["Token-count bucket", "Mean retention"],
        [[bucket, round(mean, 4)] for bucket, mean in obj["retention_curve"]],
    )
    lines += ["", "## Error histogram", ""]
    overall = obj["overall"]
    lines += table(
        ["Error category", "Documents"],
        [
            ["semantic loss", overall["semantic_loss"]],
            ["syntactic error", overall["syntactic_error"]],
            ["task inconsistency", overall["task_inconsistency"]],
        ],
    )
    lines += ["", "## Run measurements (not comparable across machines)", ""]
    measurements = [[stage, round(ms, 2)] for stage, ms in obj["timings_ms"].items()]
    if obj.get("peak_memory_mb_estimate") is not None:
        measurements.append(["peak memory (MB, estimate)", round(obj["peak_memory_mb_estimate"], 1)])
    lines += table(["Stage (ms)", "Value"], measurements)
    return "\n".join(lines) + "\n"


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    t0 = time.perf_counter()
    docs = [validate_document(d, cfg) for d in parse_corpus(args.input, cfg.d)]
    raw_results = parse_results(args.compressed)
    t1 = time.perf_counter()

    by_id: dict[str, dict[str, Any]] = {}
    for obj in raw_results:
        if obj["id"] in by_id:
            raise CorpusFormatError(f"duplicate result for document {obj['id']!r}")
        by_id[obj["id"]] = obj
    doc_ids = [d.id for d in docs]
    missing = [i for i in doc_ids if i not in by_id]
    extra = sorted(set(by_id) - set(doc_ids))
    if missing or extra:
        raise CorpusFormatError(
            f"compressed output does not align with input: "
            f"missing {missing[:3]}, unmatched {extra[:3]}"
        )
    pairs = [
        (doc, obj_to_result(by_id[doc.id], doc.n_tokens, f"result for {doc.id!r}"))
        for doc in docs
    ]
    report = build_report(
        pairs,
        args.dataset_tag,
        {
            "parse_ms": (t1 - t0) * 1e3,
            "report_ms": (time.perf_counter() - t1) * 1e3,
        },
        cfg,
        peak_memory_mb=_peak_memory_mb(),
        bucket_width=args.bucket_width,
    )
    obj = report_to_obj(report)

    out = Path(args.output)
    extra_out: list[Path] = []
    try:
        with open(out, "w", encoding="utf-8") as handle:
            json.dump(obj, handle, indent=2)
            handle.write("\n")
        if args.format == "csv":
            extra_out.append(Path(str(out) + ".csv"))
            extra_out[-1].write_text(render_csv(obj), encoding="utf-8")
        elif args.format == "md":
            extra_out.append(Path(str(out) + ".md"))
            extra_out[-1].write_text(render_markdown(obj), encoding="utf-8")
    except Exception:
        _remove_outputs([out, *extra_out])
        raise
    write_manifest(
        out,
        "evaluate",
        config_to_obj(cfg),
        {
            "input": str(args.input),
            "compressed": str(args.compressed),
            "config": str(args.config or ""),
        },
        cfg.seed,
        1,
        dict(report.timings_ms),
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    t0 = time.perf_counter()
    docs = [validate_document(d, cfg) for d in parse_corpus(args.input, cfg.d)]
    if not docs:
        raise CorpusFormatError(f"{args.input}: training corpus is empty")
    best, history = train(
        docs, cfg, args.steps_per_bucket, n_buckets=args.buckets
    )
    t1 = time.perf_counter()

    out = Path(args.output)
    history_path = Path(str(out) + ".history.jsonl")
    try:
        save_config(best, out)
        with open(history_path, "w", encoding="utf-8") as handle:
            for cp in history:
                handle.write(
                    json.dumps(
                        {
                            "bucket_index": cp.bucket_index,
                            "mean_reward": cp.mean_reward,
                            "accepted_moves": cp.accepted_moves,
                            "config": config_to_obj(cp.config),
                        }
                    )
                    + "\n"
                )
    except Exception:
        _remove_outputs([out, history_path])
        raise
    write_manifest(
        out,
        "train",
        config_to_obj(cfg),
        {"input": str(args.input), "config": str(args.config or "")},
        cfg.seed,
        1,
        {"train_ms": (t1 - t0) * 1e3},
    )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    with open(args.input, "r", encoding="utf-8") as handle:
        try:
            obj = json.load(handle)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"{args.input}: malformed JSON ({exc.msg})") from exc
    rendered = render_csv(obj) if args.format == "csv" else render_markdown(obj)
    Path(args.output).write_text(rendered, encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tokpress", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tokpress {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="pipeline config JSON (flat object)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p_gen = sub.add_parser("gen", help="generate a synthetic corpus")
    p_gen.add_argument("--spec", required=True, help="generation spec JSON")
    p_gen.add_argument("--output", required=True, help="corpus JSONL to write")
    p_gen.add_argument("--seed", type=int, help="override the spec seed")
    p_gen.add_argument("--threads", type=int, default=1, help="worker threads")
    p_gen.set_defaults(func=cmd_gen)

    p_c = sub.add_parser("compress", help="compress a corpus")
    add_shared(p_c)
    p_c.add_argument("--input", required=True, help="corpus JSONL")
    p_c.add_argument("--output", required=True, help="results JSONL to write")
    p_c.add_argument("--threads", type=int, default=1, help="worker threads")
    p_c.add_argument(
        "--budget",
        type=float,
        help="fixed keep ratio; bypasses the retention controller",
    )
    p_c.add_argument(
        "--target-retention", type=float, help="override the retention target"
    )
    p_c.add_argument(
        "--scores", action="store_true", help="include per-token scores in output"
    )
    p_c.add_argument(
        "--no-propagation",
        action="store_true",
        help="ablation: rank by base scores only (propagation strength 0)",
    )
    p_c.add_argument(
        "--no-coverage",
        action="store_true",
        help="ablation: skip the coverage repair pass",
    )
    p_c.add_argument(
        "--no-alignment-constraint",
        action="store_true",
        help="ablation: disable the multimodal alignment floor",
    )
    p_c.set_defaults(func=cmd_compress)

    p_e = sub.add_parser("evaluate", help="build a corpus report from a run")
    add_shared(p_e)
    p_e.add_argument("--input", required=True, help="corpus JSONL")
    p_e.add_argument("--compressed", required=True, help="compression results JSONL")
    p_e.add_argument("--output", required=True, help="report JSON to write")
    p_e.add_argument(
        "--format",
        choices=("json", "csv", "md"),
        default="json",
        help="also render the report as CSV or markdown next to the JSON",
    )
    p_e.add_argument("--dataset-tag", default="corpus", help="label for the overall row")
    p_e.add_argument(
        "--bucket-width", type=int, default=64, help="retention-curve bucket width"
    )
    p_e.set_defaults(func=cmd_evaluate)

    p_t = sub.add_parser("train", help="tune pipeline parameters on a corpus")
    add_shared(p_t)
    p_t.add_argument("--input", required=True, help="corpus JSONL")
    p_t.add_argument("--output", required=True, help="best config JSON to write")
    p_t.add_argument("--steps-per-bucket", type=int, default=20)
    p_t.add_argument("--buckets", type=int, default=4)
    p_t.set_defaults(func=cmd_train)

    p_r = sub.add_parser("report", help="render an existing report JSON")
    p_r.add_argument("--input", required=True, help="report JSON")
    p_r.add_argument("--output", required=True, help="rendered file to write")
    p_r.add_argument("--format", choices=("csv", "md"), required=True)
    p_r.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"tokpress: usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (TokpressError, OSError) as exc:
        print(f"tokpress: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
