"""File formats: JSONL corpora, compression outputs, configs, manifests.

One JSON object per line for corpora and results, a flat JSON object for
configs. Floats serialize through ``repr`` (the shortest round-trip form), so
identical runs produce byte-identical files and golden-file comparison works
at the byte level.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Iterable, Mapping

from . import __version__
from .core import (
    CompressionResult,
    ConfigError,
    CorpusFormatError,
    Document,
    EmbeddedToken,
    ImportanceVector,
    PipelineConfig,
)
from .datagen import GenSpec


def _token_to_obj(tok: EmbeddedToken) -> dict[str, Any]:
    obj: dict[str, Any] = {"t": tok.text, "e": [float(x) for x in tok.embedding]}
    if tok.flags:
        obj["f"] = sorted(tok.flags)
    return obj


def _obj_to_token(obj: Any, position: int, where: str) -> EmbeddedToken:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"{where}: token entry must be an object")
    if "t" not in obj or "e" not in obj:
        raise CorpusFormatError(f"{where}: token missing 't' or 'e' field")
    embedding = obj["e"]
    if not isinstance(embedding, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in embedding
    ):
        raise CorpusFormatError(f"{where}: 'e' must be a list of numbers")
    flags = obj.get("f", [])
    if not isinstance(flags, list) or not all(isinstance(x, str) for x in flags):
        raise CorpusFormatError(f"{where}: 'f' must be a list of strings")
    return EmbeddedToken(str(obj["t"]), embedding, position, frozenset(flags))


def document_to_obj(doc: Document) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "id": doc.id,
        "domain": doc.domain_tag,
        "tokens": [_token_to_obj(t) for t in doc.tokens],
    }
    if doc.visual_tokens is not None:
        obj["visual"] = [_token_to_obj(t) for t in doc.visual_tokens]
    return obj


def obj_to_document(obj: Any, where: str, expected_d: int | None = None) -> Document:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"{where}: document must be a JSON object")
    for field in ("id", "domain", "tokens"):
        if field not in obj:
            raise CorpusFormatError(f"{where}: missing {field!r} field")
    raw_tokens = obj["tokens"]
    if not isinstance(raw_tokens, list) or len(raw_tokens) == 0:
        raise CorpusFormatError(f"{where}: 'tokens' must be a nonempty array")
    tokens = tuple(
        _obj_to_token(t, i, where) for i, t in enumerate(raw_tokens)
    )
    dims = {t.embedding.size for t in tokens}
    visual = None
    if "visual" in obj and obj["visual"] is not None:
        raw_visual = obj["visual"]
        if not isinstance(raw_visual, list) or len(raw_visual) == 0:
            raise CorpusFormatError(f"{where}: 'visual' must be a nonempty array")
        visual = tuple(
            _obj_to_token(t, i, where) for i, t in enumerate(raw_visual)
        )
        dims |= {t.embedding.size for t in visual}
    if len(dims) != 1:
        raise CorpusFormatError(f"{where}: dimension mismatch across tokens {sorted(dims)}")
    if expected_d is not None and dims != {expected_d}:
        raise CorpusFormatError(
            f"{where}: dimension mismatch, tokens have {dims.pop()} "
            f"components, expected {expected_d}"
        )
    return Document(
        id=str(obj["id"]),
        tokens=tokens,
        visual_tokens=visual,
        domain_tag=str(obj["domain"]),
    )


def parse_corpus(path: str | Path, expected_d: int | None = None) -> list[Document]:
    """Read a JSONL corpus; an empty file is a valid empty corpus.

    Any malformed line is fatal and reported with its 1-based line number.
    """
    docs: list[Document] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"{path}, line {line_no}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{where}: malformed JSON ({exc.msg})") from exc
            docs.append(obj_to_document(obj, where, expected_d))
    return docs


def write_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for doc in docs:
            handle.write(json.dumps(document_to_obj(doc)) + "\n")


def result_to_obj(
    doc_id: str, result: CompressionResult, include_scores: bool = False
) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "id": doc_id,
        "kept": list(result.kept),
        "kept_ratio": result.kept_ratio,
        "retention": result.retention,
        "controller_steps": result.controller_steps,
    }
    if result.alignment_before is not None:
        obj["alignment_before"] = result.alignment_before
        obj["alignment_after"] = result.alignment_after
    if include_scores and result.scores is not None:
        obj["scores"] = [float(x) for x in result.scores.scores]
    return obj


def obj_to_result(obj: Any, n_tokens: int, where: str) -> CompressionResult:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"{where}: result must be a JSON object")
    for field in ("id", "kept", "kept_ratio", "retention", "controller_steps"):
        if field not in obj:
            raise CorpusFormatError(f"{where}: missing {field!r} field")
    scores = None
    if "scores" in obj:
        scores = ImportanceVector(obj["scores"])
    try:
        return CompressionResult(
            n=n_tokens,
            kept=tuple(obj["kept"]),
            scores=scores,
            retention=float(obj["retention"]),
            kept_ratio=float(obj["kept_ratio"]),
            controller_steps=int(obj["controller_steps"]),
            alignment_before=obj.get("alignment_before"),
            alignment_after=obj.get("alignment_after"),
        )
    except (TypeError, ValueError) as exc:
        raise CorpusFormatError(f"{where}: invalid result ({exc})") from exc


def parse_results(path: str | Path) -> list[dict[str, Any]]:
    """Read raw result objects from a compression output file."""
    out: list[dict[str, Any]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"{path}, line {line_no}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{where}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "id" not in obj:
                raise CorpusFormatError(f"{where}: missing 'id' field")
            out.append(obj)
    return out


def config_to_obj(cfg: PipelineConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def load_config(path: str | Path) -> PipelineConfig:
    """Load a flat JSON config; unknown keys are rejected by name."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            obj = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_obj(obj)


def config_from_obj(obj: Mapping[str, Any]) -> PipelineConfig:
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigError(f"unknown config field {unknown[0]!r}")
    return PipelineConfig(**obj)


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(config_to_obj(cfg), handle, indent=2)
        handle.write("\n")


def load_genspec(path: str | Path) -> GenSpec:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            obj = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: generation spec must be a JSON object")
    known = {f.name for f in dataclasses.fields(GenSpec)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigError(f"unknown generation field {unknown[0]!r}")
    return GenSpec(**obj)


def write_manifest(
    output_path: str | Path,
    subcommand: str,
    cfg_obj: Mapping[str, Any],
    inputs: Mapping[str, str],
    seed: int,
    threads: int,
    stage_ms: Mapping[str, float],
) -> Path:
    """Write the run manifest next to the output it describes.

    The manifest carries everything needed to reproduce the run: effective
    config, paths, seed, thread count, tool version, plus this run's
    stage timings.
    """
    manifest_path = Path(str(output_path) + ".manifest.json")
    payload = {
        "tool_version": __version__,
        "subcommand": subcommand,
        "config": dict(cfg_obj),
        "inputs": dict(inputs),
        "output": str(output_path),
        "seed": seed,
        "threads": threads,
        "stage_ms": dict(stage_ms),
    }
    with open(manifest_path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    return manifest_path
