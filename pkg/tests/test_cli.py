"""Command-line surface: formats, determinism, ablations, and exit codes."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from tokpress import Document, EmbeddedToken, PipelineConfig
from tokpress.cli import main, render_csv, render_markdown
from tokpress.io_jsonl import (
    load_config,
    parse_corpus,
    save_config,
    write_corpus,
)

DATA_DIR = Path(__file__).parent / "data"


def write_genspec(path: Path, **overrides) -> Path:
    spec = dict(
        n_docs=12, tokens_min=15, tokens_max=40, d=16, seed=42,
        redundancy=0.4, n_topics=6,
    )
    spec.update(overrides)
    path.write_text(json.dumps(spec), encoding="utf-8")
    return path


def run_pipeline(tmp_path: Path, gen_overrides=None, compress_args=()):
    spec = write_genspec(tmp_path / "spec.json", **(gen_overrides or {}))
    corpus = tmp_path / "corpus.jsonl"
    out = tmp_path / "out.jsonl"
    assert main(["gen", "--spec", str(spec), "--output", str(corpus)]) == 0
    code = main(
        ["compress", "--input", str(corpus), "--output", str(out), *compress_args]
    )
    assert code == 0
    return corpus, out


def test_parse_corpus_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert parse_corpus(path) == []


def test_parse_corpus_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "x", "domain": "d"}\n', encoding="utf-8")
    with pytest.raises(Exception, match="line 1.*tokens"):
        parse_corpus(path)
    path.write_text(
        '{"id": "ok", "domain": "d", "tokens": [{"t": "a", "e": [1.0, 0.0]}]}\n'
        "not json\n"
    )
    with pytest.raises(Exception, match="line 2"):
        parse_corpus(path)
    path.write_text('{"id": "nodomain", "tokens": []}\n', encoding="utf-8")
    with pytest.raises(Exception, match="line 1.*domain"):
        parse_corpus(path)


def test_parse_corpus_golden_fixture():
    docs = parse_corpus(DATA_DIR / "golden_corpus_3doc.jsonl", expected_d=4)
    want_alpha = Document(
        "alpha",
        (
            EmbeddedToken("the", np.array([1.0, 0.0, 0.0, 0.0]), 0),
            EmbeddedToken("deadline", np.array([0.0, 1.0, 0.0, 0.0]), 1, frozenset({"critical"})),
        ),
        domain_tag="news",
    )
    want_gamma = Document(
        "gamma",
        (EmbeddedToken("caption", np.array([0.0, 0.0, 1.0, 0.0]), 0),),
        (EmbeddedToken("patch", np.array([0.0, 0.0, 0.0, 1.0]), 0),),
        domain_tag="pairs",
    )
    assert len(docs) == 3
    assert docs[0] == want_alpha
    assert docs[1].id == "beta"
    assert docs[2] == want_gamma


def test_gen_then_parse_round_trip(tmp_path):
    spec = write_genspec(tmp_path / "spec.json", multimodal=True, visual_tokens_per_doc=3)
    corpus = tmp_path / "corpus.jsonl"
    assert main(["gen", "--spec", str(spec), "--output", str(corpus)]) == 0
    docs = parse_corpus(corpus, expected_d=16)
    reread = tmp_path / "again.jsonl"
    write_corpus(docs, reread)
    assert corpus.read_bytes() == reread.read_bytes()
    manifest = json.loads((tmp_path / "corpus.jsonl.manifest.json").read_text())
    assert manifest["subcommand"] == "gen"
    assert manifest["seed"] == 42


def test_compress_empty_corpus(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    out = tmp_path / "out.jsonl"
    assert main(["compress", "--input", str(empty), "--output", str(out)]) == 0
    assert out.read_text() == ""
    assert (tmp_path / "out.jsonl.manifest.json").exists()


def test_outputs_are_thread_invariant(tmp_path):
    spec = write_genspec(tmp_path / "spec.json")
    corpora = []
    outputs = []
    for threads in (1, 8):
        corpus = tmp_path / f"corpus{threads}.jsonl"
        out = tmp_path / f"out{threads}.jsonl"
        assert main(
            ["gen", "--spec", str(spec), "--output", str(corpus),
             "--threads", str(threads)]
        ) == 0
        assert main(
            ["compress", "--input", str(corpus), "--output", str(out),
             "--threads", str(threads)]
        ) == 0
        corpora.append(corpus.read_bytes())
        outputs.append(out.read_bytes())
    assert corpora[0] == corpora[1]
    assert outputs[0] == outputs[1]


def test_compress_scores_flag(tmp_path):
    _, out = run_pipeline(tmp_path, compress_args=("--scores",))
    line = json.loads(out.read_text().splitlines()[0])
    assert "scores" in line
    assert abs(sum(line["scores"]) - 1.0) <= 1e-9


def test_compress_budget_flag_sets_fixed_mode(tmp_path):
    corpus, out = run_pipeline(
        tmp_path, compress_args=("--budget", "0.5", "--no-coverage")
    )
    docs = parse_corpus(corpus)
    for doc, raw in zip(docs, out.read_text().splitlines()):
        line = json.loads(raw)
        assert line["controller_steps"] == 1
        assert len(line["kept"]) == max(1, math.ceil(0.5 * doc.n_tokens))
    manifest = json.loads((tmp_path / "out.jsonl.manifest.json").read_text())
    assert manifest["config"]["rho"] == 0.5


def test_compress_ablation_flags_recorded(tmp_path):
    run_pipeline(
        tmp_path,
        compress_args=("--no-propagation", "--no-alignment-constraint"),
    )
    manifest = json.loads((tmp_path / "out.jsonl.manifest.json").read_text())
    assert manifest["config"]["alpha"] == 0.0
    assert manifest["config"]["delta_align"] == 1.0


def test_config_precedence_flag_over_file(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    save_config(PipelineConfig(seed=7, target_retention=0.8), cfg_path)
    corpus, out = run_pipeline(tmp_path)
    assert main(
        ["compress", "--input", str(corpus), "--output", str(out),
         "--config", str(cfg_path), "--seed", "99", "--target-retention", "0.95"]
    ) == 0
    manifest = json.loads((tmp_path / "out.jsonl.manifest.json").read_text())
    assert manifest["seed"] == 99
    assert manifest["config"]["target_retention"] == 0.95
    assert manifest["config"]["rho"] == 0.55  # untouched default


def test_evaluate_identity_run(tmp_path):
    corpus, out = run_pipeline(tmp_path, compress_args=("--target-retention", "1.0"))
    report_path = tmp_path / "report.json"
    assert main(
        ["evaluate", "--input", str(corpus), "--compressed", str(out),
         "--output", str(report_path)]
    ) == 0
    report = json.loads(report_path.read_text())
    assert report["overall"]["compression_percent"] == 0.0
    assert report["overall"]["mean_retention"] == 1.0
    for row in report["rows"]:
        assert row["compression_percent"] == 0.0


def test_evaluate_hand_built_two_docs(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    lines = [
        {
            "id": "a",
            "domain": "news",
            "tokens": [
                {"t": f"t{i}", "e": [1.0, 0.0, 0.0, 0.0]} for i in range(4)
            ],
        },
        {
            "id": "b",
            "domain": "news",
            "tokens": [
                {"t": f"t{i}", "e": [0.0, 1.0, 0.0, 0.0]} for i in range(6)
            ],
        },
    ]
    corpus.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    compressed = tmp_path / "out.jsonl"
    results = [
        {"id": "a", "kept": [0, 1], "kept_ratio": 0.5, "retention": 1.0, "controller_steps": 1},
        {"id": "b", "kept": [0, 1, 2], "kept_ratio": 0.5, "retention": 0.8, "controller_steps": 2},
    ]
    compressed.write_text("\n".join(json.dumps(r) for r in results) + "\n")
    cfg_path = tmp_path / "cfg.json"
    save_config(PipelineConfig(d=4), cfg_path)
    report_path = tmp_path / "report.json"
    assert main(
        ["evaluate", "--input", str(corpus), "--compressed", str(compressed),
         "--output", str(report_path), "--config", str(cfg_path)]
    ) == 0
    report = json.loads(report_path.read_text())
    overall = report["overall"]
    # Hand arithmetic: 10 baseline, 5 kept -> 50.0%; retentions (1.0 + 0.8)/2.
    assert overall["baseline_tokens"] == 10
    assert overall["compressed_tokens"] == 5
    assert overall["compression_percent"] == 50.0
    assert overall["mean_retention"] == pytest.approx(0.9, abs=1e-12)
    # Doc b drops a run of 3 (g_max=3 not exceeded) but retention 0.8 < 0.85.
    assert overall["semantic_loss"] == 1
    assert overall["syntactic_error"] == 0


def test_evaluate_csv_and_json_agree(tmp_path):
    corpus, out = run_pipeline(tmp_path)
    report_path = tmp_path / "report.json"
    assert main(
        ["evaluate", "--input", str(corpus), "--compressed", str(out),
         "--output", str(report_path), "--format", "csv"]
    ) == 0
    report = json.loads(report_path.read_text())
    csv_lines = (tmp_path / "report.json.csv").read_text().strip().splitlines()
    header = csv_lines[0].split(",")
    parsed_rows = [dict(zip(header, line.split(","))) for line in csv_lines[1:]]
    json_rows = report["rows"] + [report["overall"]]
    assert len(parsed_rows) == len(json_rows)
    for got, want in zip(parsed_rows, json_rows):
        for field in header:
            want_val = want[field]
            if want_val is None:
                assert got[field] == ""
            else:
                assert got[field] == str(want_val)


def test_evaluate_rejects_misaligned_results(tmp_path):
    corpus, out = run_pipeline(tmp_path)
    truncated = tmp_path / "short.jsonl"
    truncated.write_text("".join(out.read_text().splitlines(True)[:-1]))
    code = main(
        ["evaluate", "--input", str(corpus), "--compressed", str(truncated),
         "--output", str(tmp_path / "r.json")]
    )
    assert code == 2


def test_report_renders_existing_json(tmp_path):
    corpus, out = run_pipeline(tmp_path)
    report_path = tmp_path / "report.json"
    main(["evaluate", "--input", str(corpus), "--compressed", str(out),
          "--output", str(report_path)])
    md_path = tmp_path / "tables.md"
    assert main(["report", "--input", str(report_path), "--format", "md",
                 "--output", str(md_path)]) == 0
    text = md_path.read_text()
    assert "Token compression efficiency" in text
    assert "Error histogram" in text
    obj = json.loads(report_path.read_text())
    assert render_markdown(obj) == text
    assert render_csv(obj).startswith("tag,docs,baseline_tokens")


def test_train_emits_parseable_config_and_history(tmp_path):
    spec = write_genspec(tmp_path / "spec.json", n_docs=10, tokens_min=8, tokens_max=20)
    corpus = tmp_path / "corpus.jsonl"
    main(["gen", "--spec", str(spec), "--output", str(corpus)])
    best_path = tmp_path / "best.json"
    assert main(
        ["train", "--input", str(corpus), "--output", str(best_path),
         "--steps-per-bucket", "3", "--seed", "5"]
    ) == 0
    best = load_config(best_path)
    assert best.seed == 5
    history_lines = (tmp_path / "best.json.history.jsonl").read_text().splitlines()
    assert len(history_lines) == 4
    for line in history_lines:
        record = json.loads(line)
        assert {"bucket_index", "mean_reward", "accepted_moves", "config"} <= set(record)


def test_exit_codes():
    assert main(["compress", "--input", "x"]) == 1  # missing --output
    assert main(["nonsense"]) == 1
    assert main(["compress", "--input", "/nonexistent/in.jsonl",
                 "--output", "/tmp/tokpress-test-never.jsonl"]) == 2


def test_exit_code_bad_config(tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text('{"alpha": 1.0}', encoding="utf-8")
    corpus = tmp_path / "c.jsonl"
    corpus.write_text("")
    code = main(["compress", "--input", str(corpus),
                 "--output", str(tmp_path / "o.jsonl"), "--config", str(cfg_path)])
    assert code == 2
    unknown = tmp_path / "unknown.json"
    unknown.write_text('{"wat": 3}', encoding="utf-8")
    assert main(["compress", "--input", str(corpus),
                 "--output", str(tmp_path / "o2.jsonl"), "--config", str(unknown)]) == 2


def test_malformed_corpus_is_data_error(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{broken\n", encoding="utf-8")
    out = tmp_path / "out.jsonl"
    assert main(["compress", "--input", str(bad), "--output", str(out)]) == 2
    assert not out.exists()


def test_full_pipeline_reproduces_golden_report(tmp_path):
    # gen -> train -> compress -> evaluate, frozen after the first run.
    spec = write_genspec(tmp_path / "spec.json")
    corpus = tmp_path / "corpus.jsonl"
    best = tmp_path / "best.json"
    out = tmp_path / "out.jsonl"
    report = tmp_path / "report.json"
    assert main(["gen", "--spec", str(spec), "--output", str(corpus)]) == 0
    assert main(["train", "--input", str(corpus), "--output", str(best),
                 "--steps-per-bucket", "4"]) == 0
    assert main(["compress", "--input", str(corpus), "--config", str(best),
                 "--output", str(out)]) == 0
    assert main(["evaluate", "--input", str(corpus), "--compressed", str(out),
                 "--config", str(best), "--output", str(report)]) == 0
    obj = json.loads(report.read_text())
    obj.pop("timings_ms", None)
    obj.pop("peak_memory_mb_estimate", None)
    golden = json.loads(
        (Path(__file__).parent / "golden" / "pipeline_seed42_report.json").read_text()
    )
    assert obj == golden


def test_run_is_reconstructible_from_manifest(tmp_path):
    corpus, out = run_pipeline(tmp_path, compress_args=("--seed", "9"))
    manifest = json.loads((tmp_path / "out.jsonl.manifest.json").read_text())
    cfg_path = tmp_path / "replay_cfg.json"
    cfg_path.write_text(json.dumps(manifest["config"]), encoding="utf-8")
    replay = tmp_path / "replay.jsonl"
    assert main(["compress", "--input", manifest["inputs"]["input"],
                 "--output", str(replay), "--config", str(cfg_path)]) == 0
    assert replay.read_bytes() == out.read_bytes()


def test_commands_write_only_declared_outputs(tmp_path):
    spec = write_genspec(tmp_path / "spec.json")
    corpus = tmp_path / "corpus.jsonl"
    out = tmp_path / "out.jsonl"
    main(["gen", "--spec", str(spec), "--output", str(corpus)])
    main(["compress", "--input", str(corpus), "--output", str(out)])
    created = {p.name for p in tmp_path.iterdir()}
    assert created == {
        "spec.json",
        "corpus.jsonl",
        "corpus.jsonl.manifest.json",
        "out.jsonl",
        "out.jsonl.manifest.json",
    }


def test_help_exits_zero():
    assert main(["--help"]) == 0
