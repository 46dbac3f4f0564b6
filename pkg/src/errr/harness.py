"""Operator-facing operations: evaluation runs, distillation export,
corpus ingestion, and cross-run report tables.

Output files are deterministic given the same config, cache state, and
fixtures: transcripts replay cached usage byte-for-byte, and the only
report section that depends on cache warmth is the marginal-spend block.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .errors import ErrrError, ExtractionEmpty, FormatError
from .evaluation import EvalSummary, ExampleResult, QAExample, exact_match, f1, load_dataset, summarize
from .gateway import LLMGateway, ResponseCache, UsageLedger, UsageStats, sum_usage
from .pipelines import (
    NO_BACKGROUND,
    PipelineKind,
    PipelineRunner,
    PseudoDocument,
    StageRecord,
    Transcript,
    extract_parametric_knowledge,
    optimize_queries,
)
from .prompts import PromptCatalog
from .retrieval import (
    DenseRetriever,
    EmbeddingClient,
    WebSearchClient,
    ingest_corpus,
    load_index,
    read_corpus_file,
    save_index,
)

log = logging.getLogger(__name__)

DEFAULT_CACHE_DIR = Path(".errr-cache")


def _dump(obj: object) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


@dataclass
class RunArtifacts:
    transcripts_path: Path
    summary_path: Path
    report_path: Path
    summary: EvalSummary
    marginal_cost_usd: float


def build_gateways(config: RunConfig, ledger: UsageLedger) -> tuple[LLMGateway, LLMGateway]:
    """Reader and optimizer gateways sharing one cache and one ledger."""
    cache = ResponseCache(config.cache_dir or DEFAULT_CACHE_DIR)
    reader = LLMGateway(
        config.reader,
        cache=cache,
        ledger=ledger,
        retry=config.retry,
        max_parallel=config.parallelism,
        timeout_s=config.timeout_s,
    )
    if config.optimizer is None or config.optimizer == config.reader:
        return reader, reader
    optimizer = LLMGateway(
        config.optimizer,
        cache=cache,
        ledger=ledger,
        retry=config.retry,
        max_parallel=config.parallelism,
        timeout_s=config.timeout_s,
    )
    return reader, optimizer


def build_retriever(config: RunConfig):
    if config.retriever is None:
        return None
    if config.retriever.kind == "web":
        return WebSearchClient(config.retriever.web, timeout_s=config.timeout_s)
    index = load_index(config.retriever.index_path)
    return DenseRetriever(index, EmbeddingClient(config.retriever.embedding))


def build_runner(config: RunConfig, ledger: UsageLedger) -> PipelineRunner:
    reader, optimizer = build_gateways(config, ledger)
    return PipelineRunner(
        reader=reader,
        optimizer=optimizer,
        retriever=build_retriever(config),
        catalog=PromptCatalog.for_dataset(config.dataset.name),
        total_k=config.total_k,
        merge_mode=config.merge_mode,
        optimizer_prompt_style=config.optimizer_prompt,
        stage_params=config.stage_params,
    )


def _load_examples(config: RunConfig) -> list[QAExample]:
    examples = load_dataset(config.dataset)
    if config.limit is not None:
        examples = examples[: config.limit]
    return examples


def _run_one(runner: PipelineRunner, kind: PipelineKind, example: QAExample) -> Transcript:
    try:
        transcript = runner.run(kind, example.id, example.question)
    except Exception as exc:  # noqa: BLE001 - one bad question must not abort the run
        log.warning("question %s failed: %s", example.id, exc)
        transcript = Transcript(question_id=example.id, pipeline=kind)
        transcript.notes.append(f"pipeline error ({exc}); recording empty answer")
    transcript.em = exact_match(transcript.answer, example.gold_answers)
    transcript.f1 = f1(transcript.answer, example.gold_answers)
    return transcript


def run_eval(config: RunConfig) -> RunArtifacts:
    """Evaluate one pipeline over one dataset slice; emit transcripts, summary, report."""
    examples = _load_examples(config)
    ledger = UsageLedger()
    runner = build_runner(config, ledger)
    kind = config.pipeline

    config.out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        transcripts = list(pool.map(lambda ex: _run_one(runner, kind, ex), examples))
    wall_s = time.perf_counter() - started
    log.info("%s over %d questions in %.1fs", kind.value, len(examples), wall_s)

    transcripts_path = config.out_dir / "transcripts.jsonl"
    with open(transcripts_path, "w", encoding="utf-8") as fh:
        for t in transcripts:
            fh.write(_dump(t.to_dict()) + "\n")

    results = [
        ExampleResult(em=int(t.em), f1=float(t.f1), usage=t.totals) for t in transcripts
    ]
    summary = summarize(results, source=transcripts_path.name)
    summary_path = config.out_dir / "summary.json"
    summary_doc = {
        "pipeline": kind.value,
        "dataset": config.dataset.name,
        **summary.to_dict(),
    }
    summary_path.write_text(
        json.dumps(summary_doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )

    report_path = config.out_dir / "report.txt"
    report_path.write_text(_run_report(config, transcripts, summary, ledger), encoding="utf-8")
    return RunArtifacts(
        transcripts_path=transcripts_path,
        summary_path=summary_path,
        report_path=report_path,
        summary=summary,
        marginal_cost_usd=ledger.marginal_cost_usd(),
    )


def _run_report(
    config: RunConfig,
    transcripts: list[Transcript],
    summary: EvalSummary,
    ledger: UsageLedger,
) -> str:
    by_stage: dict[str, list[UsageStats]] = {}
    calls = 0
    for t in transcripts:
        for s in t.stages:
            by_stage.setdefault(s.name, []).append(s.usage)
            calls += int(s.name in {"extract", "optimize", "rewrite", "read"})
    lines = [
        f"pipeline: {config.pipeline.value}",
        f"dataset: {config.dataset.name}",
        f"n: {summary.n}",
        f"parallelism: {config.parallelism}",
        f"total_k: {config.total_k}",
        f"em: {summary.em:.4f}",
        f"f1: {summary.f1:.4f}",
        "",
        "accounted totals (from transcripts)",
        f"  llm_calls: {calls}",
        f"  prompt_tokens: {summary.totals.prompt_tokens}",
        f"  completion_tokens: {summary.totals.completion_tokens}",
        f"  cost_usd: {summary.totals.cost_usd:.4f}",
        f"  latency_ms: {summary.totals.latency_ms:.1f}",
        "",
        "per-stage breakdown",
        f"  {'stage':<10} {'calls':>6} {'prompt_tok':>11} {'completion_tok':>15} {'cost_usd':>9}",
    ]
    for stage in sorted(by_stage):
        total = sum_usage(by_stage[stage])
        lines.append(
            f"  {stage:<10} {len(by_stage[stage]):>6} {total.prompt_tokens:>11} "
            f"{total.completion_tokens:>15} {total.cost_usd:>9.4f}"
        )
    lines += [
        "",
        "marginal (new spend this run)",
        f"  live_calls: {ledger.call_count(cached=False)}",
        f"  cached_calls: {ledger.call_count(cached=True)}",
        f"  cost_usd: {ledger.marginal_cost_usd():.4f}",
        "",
    ]
    return "\n".join(lines)


# --- distillation export -------------------------------------------------------


def export_distillation(config: RunConfig, out_path: str | Path | None = None) -> tuple[int, int]:
    """Emit (input, target) training pairs from the teacher; returns (written, skipped).

    The input is the short eliciting form the student will see at inference
    time; the target is the teacher's raw query output, terminators
    included, produced under the frozen-scheme optimizer prompt. Pairs
    whose target parses to no queries are skipped and counted, as are
    teacher call failures. Feed this questions from training splits, not
    the evaluation slices.
    """
    examples = _load_examples(config)
    ledger = UsageLedger()
    reader, teacher = build_gateways(config, ledger)
    catalog = PromptCatalog.for_dataset(config.dataset.name)
    out = Path(out_path) if out_path else config.out_dir / "distillation.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)

    written = skipped = 0
    with open(out, "w", encoding="utf-8") as fh:
        for example in examples:
            try:
                try:
                    doc = extract_parametric_knowledge(reader, example.question, catalog)
                except ExtractionEmpty:
                    doc = PseudoDocument(text=NO_BACKGROUND, usage=UsageStats.zero())
                qs = optimize_queries(teacher, doc, example.question, catalog, style="teacher")
            except ErrrError as exc:
                log.warning("skipping %s: %s", example.id, exc)
                skipped += 1
                continue
            pair = {
                "input": catalog.student_input(doc.text, example.question),
                "target": qs.raw,
            }
            fh.write(_dump(pair) + "\n")
            written += 1
    if written == 0:
        log.warning("no distillation pairs written to %s", out)
    return written, skipped


# --- corpus ingestion ---------------------------------------------------------


def ingest(corpus_path: str | Path, out_dir: str | Path, dim: int | None = None) -> dict:
    """Build a dense index from a JSONL corpus and persist it with a manifest."""
    index = ingest_corpus(read_corpus_file(corpus_path), dim=dim)
    manifest = save_index(index, out_dir)
    log.info("ingested %d passages (dim=%d) into %s", manifest["n"], manifest["dim"], out_dir)
    return manifest


# --- cross-run report -----------------------------------------------------------


def read_transcripts(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}, line {lineno}: {exc}") from exc
    return records


def report(transcript_paths: list[str | Path]) -> str:
    """Comparison table over transcript files, totals recomputed from the records."""
    header = (
        f"{'method':<8} {'n':>5} {'em':>7} {'f1':>7} {'llm_calls':>9} "
        f"{'prompt_tok':>11} {'completion_tok':>15} {'cost_usd':>9} {'latency_ms':>12}"
    )
    rows = [header]
    for path in transcript_paths:
        records = read_transcripts(path)
        if not records:
            raise FormatError(f"{path}: no transcripts")
        methods = sorted({r["pipeline"] for r in records})
        n = len(records)
        em = sum(r["em"] for r in records) / n
        f1_mean = sum(r["f1"] for r in records) / n
        llm_calls = sum(
            1
            for r in records
            for s in r["stages"]
            if s["name"] in ("extract", "optimize", "rewrite", "read")
        )
        prompt_tok = sum(s["usage"]["prompt_tokens"] for r in records for s in r["stages"])
        completion_tok = sum(
            s["usage"]["completion_tokens"] for r in records for s in r["stages"]
        )
        cost = sum(s["usage"]["cost_usd"] for r in records for s in r["stages"])
        latency = sum(s["usage"]["latency_ms"] for r in records for s in r["stages"])
        rows.append(
            f"{'+'.join(methods):<8} {n:>5} {em:>7.4f} {f1_mean:>7.4f} {llm_calls:>9} "
            f"{prompt_tok:>11} {completion_tok:>15} {cost:>9.4f} {latency:>12.1f}"
        )
    return "\n".join(rows) + "\n"
