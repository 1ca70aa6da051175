"""Command-line surface: index management, batch classification, evaluation.

Exit codes are uniform across commands: 0 success, 1 environment or I/O
trouble, 2 validation or usage errors. Batch commands write a
``<output>.manifest.json`` next to their output recording the config
digest, inputs, and counts; rerunning a command on identical inputs
produces byte-identical outputs (the manifest timestamp aside).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import click
import httpx

import rcgauge
from rcgauge import constraints, metrics, pipeline
from rcgauge.core import ConfigError, PipelineConfig, RcgaugeError, load_config
from rcgauge.datasets import DATASET_KINDS, BenchmarkRecord, DatasetError, load_dataset
from rcgauge.evaluator import (
    HttpLlmClient,
    LlmBackendError,
    LlmParseError,
    ScorerBackendError,
    llm_baseline_classify,
)
from rcgauge.retrieval import (
    CorpusError,
    DenseBackendError,
    HttpEmbeddingClient,
    IndexFormatError,
    build_index,
    load_index,
    read_corpus,
    retrieve_bm25,
    retrieve_hybrid,
    save_index,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ENVIRONMENT = 1
EXIT_VALIDATION = 2

_VALIDATION_ERRORS = (ConfigError, CorpusError, DatasetError, IndexFormatError, ValueError)
_ENVIRONMENT_ERRORS = (
    ScorerBackendError,
    LlmBackendError,
    DenseBackendError,
    OSError,
    httpx.HTTPError,
)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(body):
    """Run a command body, mapping exceptions to the documented exit codes."""
    try:
        body()
    except _ENVIRONMENT_ERRORS as exc:
        _fail(EXIT_ENVIRONMENT, str(exc))
    except _VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except RcgaugeError as exc:
        _fail(EXIT_VALIDATION, str(exc))


@dataclasses.dataclass
class RunManifest:
    """Provenance record emitted next to every batch output."""

    command: str
    config_digest: str
    inputs: dict[str, str]
    counts: dict[str, int]
    version: str = rcgauge.__version__
    timestamp: str = ""

    def write(self, output_path: str | Path) -> Path:
        manifest_path = Path(str(output_path) + ".manifest.json")
        payload = dataclasses.asdict(self)
        payload["timestamp"] = datetime.now(timezone.utc).isoformat()
        manifest_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return manifest_path


def _effective_config(ctx: click.Context) -> PipelineConfig:
    options = ctx.obj
    config = load_config(options.get("config"), env=os.environ)
    if options.get("top_k") is not None:
        config = dataclasses.replace(config, top_k=options["top_k"])
    return config


def _threads(ctx: click.Context) -> int:
    return ctx.obj.get("threads") or 1


def _load_records(path: str, dataset_kind: str, **knobs) -> list[BenchmarkRecord]:
    result = load_dataset(path, dataset_kind, **knobs)
    for lineno, reason in result.skipped:
        logger.warning("skipped line %d: %s", lineno, reason)
    if result.skipped:
        click.echo(f"skipped {len(result.skipped)} malformed line(s)", err=True)
    return result.records


def _nine_digits(value: float) -> float:
    return float(f"{value:.9g}")


@click.group()
@click.version_option(version=rcgauge.__version__)
@click.option("--config", type=click.Path(), default=None, help="Pipeline config file.")
@click.option("--threads", type=int, default=1, show_default=True, help="Worker threads.")
@click.option("--top-k", type=int, default=None, help="Override retrieval depth.")
@click.pass_context
def main(ctx: click.Context, config: str | None, threads: int, top_k: int | None) -> None:
    """Gauge the retrieval complexity of questions against a document corpus."""
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    if threads < 1:
        raise click.UsageError("--threads must be >= 1")
    if config is not None and not Path(config).exists():
        _fail(EXIT_ENVIRONMENT, f"config file not found: {config}")
    ctx.obj = {"config": config, "threads": threads, "top_k": top_k}


@main.command("index")
@click.argument("corpus_path", type=click.Path())
@click.argument("index_path", type=click.Path())
@click.pass_context
def cmd_index(ctx: click.Context, corpus_path: str, index_path: str) -> None:
    """Build a BM25 index from a JSONL corpus and persist it."""

    def body() -> None:
        config = _effective_config(ctx)
        index = build_index(read_corpus(corpus_path))
        save_index(index, index_path)
        RunManifest(
            command="index",
            config_digest=config.digest(),
            inputs={"corpus": corpus_path},
            counts={"documents": index.doc_count, "terms": len(index.postings)},
        ).write(index_path)
        click.echo(f"indexed {index.doc_count} documents -> {index_path}")

    _guarded(body)


def _dense_client(dense_url: str | None) -> HttpEmbeddingClient | None:
    return HttpEmbeddingClient(dense_url) if dense_url else None


@main.command("retrieve")
@click.argument("records_path", type=click.Path())
@click.argument("index_path", type=click.Path(), required=False)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Output JSONL.")
@click.option("--dataset-kind", type=click.Choice(DATASET_KINDS), default="custom")
@click.option("--dense-url", default=None, help="Dense reranking endpoint for hybrid retrieval.")
@click.option("--server", default=None, help="Delegate to a running rcgauge service.")
@click.pass_context
def cmd_retrieve(
    ctx: click.Context,
    records_path: str,
    index_path: str | None,
    out_path: str,
    dataset_kind: str,
    dense_url: str | None,
    server: str | None,
) -> None:
    """Write the ranked retrieval batch for each question."""

    def body() -> None:
        config = _effective_config(ctx)
        records = _load_records(records_path, dataset_kind)
        if server is None and index_path is None:
            raise click.UsageError("provide INDEX_PATH or --server")

        if server is not None:
            rows = _retrieve_via_server(server, records, config)
        else:
            index = load_index(index_path)  # type: ignore[arg-type]
            dense = _dense_client(dense_url)
            rows = []
            for record in records:
                if config.retriever == "hybrid" and dense is not None:
                    batch = retrieve_hybrid(
                        index, dense, record.question, config.top_k, config.fusion_k
                    )
                else:
                    batch = retrieve_bm25(index, record.question, config.top_k)
                rows.append(
                    {
                        "question_id": batch.question_id,
                        "entries": [
                            {"doc_id": doc.doc_id, "score": _nine_digits(score)}
                            for doc, score in batch.entries
                        ],
                        "degraded": batch.degraded,
                    }
                )

        with open(out_path, "w", encoding="utf-8") as handle:
            for row in rows:
                handle.write(json.dumps(row, separators=(",", ":")) + "\n")
        RunManifest(
            command="retrieve",
            config_digest=config.digest(),
            inputs={"records": records_path, "index": index_path or server or ""},
            counts={
                "questions": len(rows),
                "degraded": sum(1 for r in rows if r["degraded"]),
            },
        ).write(out_path)
        click.echo(f"retrieved for {len(rows)} question(s) -> {out_path}")

    _guarded(body)


def _retrieve_via_server(server: str, records, config: PipelineConfig) -> list[dict]:
    rows = []
    with httpx.Client(base_url=server.rstrip("/"), timeout=30.0) as client:
        for record in records:
            response = client.post(
                "/retrieve",
                json={"question": record.question.raw_text, "top_k": config.top_k},
            )
            response.raise_for_status()
            body = response.json()
            rows.append(
                {
                    "question_id": record.id,
                    "entries": [
                        {"doc_id": e["doc_id"], "score": _nine_digits(e["score"])}
                        for e in body["entries"]
                    ],
                    "degraded": body["degraded"],
                }
            )
    return rows


@main.command("classify")
@click.argument("records_path", type=click.Path())
@click.argument("index_path", type=click.Path(), required=False)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Verdicts JSONL.")
@click.option("--dataset-kind", type=click.Choice(DATASET_KINDS), default="custom")
@click.option("--no-answerability", is_flag=True, help="Decide from completeness alone.")
@click.option("--no-completeness", is_flag=True, help="Decide from answerability alone.")
@click.option("--dense-url", default=None, help="Dense reranking endpoint for hybrid retrieval.")
@click.option("--server", default=None, help="Delegate to a running rcgauge service.")
@click.pass_context
def cmd_classify(
    ctx: click.Context,
    records_path: str,
    index_path: str | None,
    out_path: str,
    dataset_kind: str,
    no_answerability: bool,
    no_completeness: bool,
    dense_url: str | None,
    server: str | None,
) -> None:
    """Classify each question and write one verdict JSON line per record."""
    if no_answerability and no_completeness:
        raise click.UsageError("cannot disable both constraints")
    rule = constraints.RULE_BOTH
    if no_completeness:
        rule = constraints.RULE_ANSWERABILITY_ONLY
    elif no_answerability:
        rule = constraints.RULE_COMPLETENESS_ONLY

    def body() -> None:
        config = _effective_config(ctx)
        records = _load_records(records_path, dataset_kind)
        if server is None and index_path is None:
            raise click.UsageError("provide INDEX_PATH or --server")

        if server is not None:
            verdicts, stats = _classify_via_server(server, records, rule)
        else:
            index = load_index(index_path)  # type: ignore[arg-type]
            verdicts, stats = pipeline.classify_records(
                records,
                index,
                config,
                dense_client=_dense_client(dense_url),
                rule=rule,
                threads=_threads(ctx),
            )

        with open(out_path, "w", encoding="utf-8") as handle:
            for verdict in verdicts:
                handle.write(constraints.verdict_to_json(verdict) + "\n")
        RunManifest(
            command="classify",
            config_digest=config.digest(),
            inputs={"records": records_path, "index": index_path or server or ""},
            counts={"questions": stats.questions, "degraded": stats.degraded},
        ).write(out_path)
        click.echo(f"classified {stats.questions} question(s) -> {out_path}")

    _guarded(body)


def _classify_via_server(server: str, records, rule: str):
    stats = pipeline.BatchStats()
    verdicts = []
    with httpx.Client(base_url=server.rstrip("/"), timeout=60.0) as client:
        for record in records:
            response = client.post(
                "/classify",
                json={
                    "id": record.id,
                    "question": record.question.raw_text,
                    "references": list(record.references.references),
                    "rule": rule,
                },
            )
            response.raise_for_status()
            body = response.json()
            verdicts.append(
                constraints.RcVerdict(
                    question_id=body["question_id"],
                    label=body["label"],
                    ans_bit=body["ans_bit"],
                    com_bit=body["com_bit"],
                    max_correctness=body["max_correctness"],
                    completeness_score=body["completeness_score"],
                    per_doc_entropy=tuple(body["per_doc_entropy"]),
                    rule=body["rule"],
                )
            )
            stats.questions += 1
    return verdicts, stats


@main.command("evaluate")
@click.argument("verdicts_path", type=click.Path())
@click.argument("gold_records_path", type=click.Path())
@click.option("--dataset-kind", type=click.Choice(DATASET_KINDS), default="custom")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write JSON report.")
@click.pass_context
def cmd_evaluate(
    ctx: click.Context,
    verdicts_path: str,
    gold_records_path: str,
    dataset_kind: str,
    out_path: str | None,
) -> None:
    """Score predicted labels against gold labels, per dataset and pooled."""

    def body() -> None:
        config = _effective_config(ctx)
        records = _load_records(gold_records_path, dataset_kind)
        predictions = pipeline.read_predictions(verdicts_path)
        grouped, counts = pipeline.join_predictions(records, predictions)
        if not grouped:
            raise DatasetError("no gold-labeled records matched the predictions")
        report = metrics.build_report(
            grouped, thresholds=config.thresholds, config_digest=config.digest()
        )
        report["counts"] = counts
        click.echo(metrics.format_report_table(report))
        if counts["unmatched"] or counts["unclassified"]:
            click.echo(
                f"unmatched ids: {counts['unmatched']}, "
                f"unclassified: {counts['unclassified']}",
                err=True,
            )
        if out_path:
            Path(out_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
            RunManifest(
                command="evaluate",
                config_digest=config.digest(),
                inputs={"verdicts": verdicts_path, "gold": gold_records_path},
                counts=counts,
            ).write(out_path)

    _guarded(body)


@main.command("calibrate")
@click.argument("records_path", type=click.Path())
@click.argument("index_path", type=click.Path())
@click.option("--dataset-kind", type=click.Choice(DATASET_KINDS), default="custom")
@click.option("--step", type=float, default=0.05, show_default=True, help="Grid step.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write updated config.")
@click.option("--dense-url", default=None, help="Dense reranking endpoint for hybrid retrieval.")
@click.pass_context
def cmd_calibrate(
    ctx: click.Context,
    records_path: str,
    index_path: str,
    dataset_kind: str,
    step: float,
    out_path: str | None,
    dense_url: str | None,
) -> None:
    """Grid-search thresholds maximizing F1 on gold-labeled records."""

    def body() -> None:
        config = _effective_config(ctx)
        records = _load_records(records_path, dataset_kind)
        labeled = [r for r in records if r.gold_label is not None]
        if not labeled:
            raise DatasetError("calibration needs gold-labeled records")

        index = load_index(index_path)
        verdicts, _ = pipeline.classify_records(
            labeled,
            index,
            config,
            dense_client=_dense_client(dense_url),
            threads=_threads(ctx),
        )
        samples = pipeline.calibration_samples(labeled, verdicts)
        result = metrics.calibrate(samples, step=step)

        click.echo(
            f"best thresholds: t_ans={result.thresholds.t_ans:g} "
            f"t_com={result.thresholds.t_com:g} (F1={result.best_f1!r}, "
            f"{len(samples)} samples)"
        )
        click.echo("f1 surface (rows t_ans, cols t_com):")
        values = metrics.grid_values(step)
        click.echo("        " + " ".join(f"{v:>6.2f}" for v in values))
        by_cell = {(c.t_ans, c.t_com): c.f1 for c in result.surface}
        for t_ans in values:
            row = " ".join(f"{by_cell[(t_ans, t_com)]:>6.3f}" for t_com in values)
            click.echo(f"{t_ans:>6.2f}  {row}")

        if out_path:
            base = {k: v for k, v in config.as_dict().items() if v is not None}
            base["t_ans"] = result.thresholds.t_ans
            base["t_com"] = result.thresholds.t_com
            lines = "".join(f"{k} = {v}\n" for k, v in sorted(base.items()))
            Path(out_path).write_text(lines, encoding="utf-8")
            click.echo(f"wrote calibrated config -> {out_path}")

    _guarded(body)


@main.command("llm-baseline")
@click.argument("records_path", type=click.Path())
@click.option("--llm-url", default=None, help="Generation endpoint (overrides config).")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Labels JSONL.")
@click.option("--dataset-kind", type=click.Choice(DATASET_KINDS), default="custom")
@click.pass_context
def cmd_llm_baseline(
    ctx: click.Context,
    records_path: str,
    llm_url: str | None,
    out_path: str,
    dataset_kind: str,
) -> None:
    """Classify questions with a prompted LLM; output joins with `evaluate`."""

    def body() -> None:
        config = _effective_config(ctx)
        url = llm_url or config.llm_url
        if not url:
            raise click.UsageError("provide --llm-url or set llm_url in the config")
        records = _load_records(records_path, dataset_kind)
        client = HttpLlmClient(url)

        def work(record: BenchmarkRecord) -> tuple[str, str | None]:
            try:
                return record.id, llm_baseline_classify(record.question, client)
            except LlmParseError as exc:
                logger.warning("question %s unclassified: %s", record.id, exc)
                return record.id, None

        threads = _threads(ctx)
        if threads == 1:
            results = [work(r) for r in records]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(work, records))

        unclassified = sum(1 for _, label in results if label is None)
        with open(out_path, "w", encoding="utf-8") as handle:
            for question_id, label in results:
                handle.write(
                    json.dumps(
                        {"question_id": question_id, "label": label},
                        separators=(",", ":"),
                    )
                    + "\n"
                )
        RunManifest(
            command="llm-baseline",
            config_digest=config.digest(),
            inputs={"records": records_path, "llm_url": url},
            counts={"questions": len(results), "unclassified": unclassified},
        ).write(out_path)
        click.echo(
            f"labeled {len(results)} question(s), {unclassified} unclassified -> {out_path}"
        )

    _guarded(body)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--dense-url", default=None, help="Dense reranking endpoint for hybrid retrieval.")
@click.pass_context
def cmd_serve(ctx: click.Context, host: str, port: int, dense_url: str | None) -> None:
    """Run the HTTP service wrapping the pipeline."""

    def body() -> None:
        import uvicorn

        from rcgauge.service import create_app

        config = _effective_config(ctx)
        app = create_app(config=config, dense_url=dense_url)
        uvicorn.run(app, host=host, port=port, log_level="info")

    _guarded(body)


if __name__ == "__main__":
    main()
