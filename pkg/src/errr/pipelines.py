"""The four pipeline variants: Direct, RAG, RRR, ERRR.

Each run of a question produces a Transcript recording every stage's
rendered prompt, raw output, parsed output, and usage. The reader always
receives the original question alongside the retrieved passages; rewritten
or optimized queries are used for retrieval only.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from .errors import ErrrError, ExtractionEmpty, ParseEmpty
from .gateway import ChatRequest, ChatResponse, LLMGateway, UsageStats, sum_usage
from .prompts import PromptCatalog
from .retrieval import MultiQueryResult, Passage, Retriever, retrieve_multi

log = logging.getLogger(__name__)

# Context marker used when extraction fails: the optimizer prompt tolerates
# a missing context better than skipping the stage.
NO_BACKGROUND = "(no background available)"

LLM_STAGES = frozenset({"extract", "optimize", "rewrite", "read"})


class PipelineKind(enum.Enum):
    DIRECT = "direct"
    RAG = "rag"
    RRR = "rrr"
    ERRR = "errr"

    @classmethod
    def from_string(cls, s: str) -> "PipelineKind":
        try:
            return cls(s.strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown pipeline kind {s!r}; expected one of "
                f"{[k.value for k in cls]}"
            ) from None

    @property
    def needs_retriever(self) -> bool:
        return self is not PipelineKind.DIRECT

    @property
    def needs_optimizer(self) -> bool:
        return self in (PipelineKind.RRR, PipelineKind.ERRR)


@dataclass(frozen=True)
class PseudoDocument:
    """LLM-extracted background text standing in for parametric knowledge."""

    text: str
    usage: UsageStats
    prompt: str = ""


@dataclass(frozen=True)
class QuerySet:
    """Ordered retrieval queries plus the unparsed model output they came from."""

    queries: tuple[str, ...]
    raw: str
    usage: UsageStats = UsageStats.zero()
    prompt: str = ""

    def __post_init__(self):
        if not self.queries:
            raise ValueError("a QuerySet holds at least one query")
        if any(not q.strip() for q in self.queries):
            raise ValueError("queries must not be blank")


@dataclass(frozen=True)
class ReadResult:
    answer: str
    raw: str
    usage: UsageStats
    prompt: str = ""


@dataclass
class StageRecord:
    name: str
    prompt: str
    raw: str
    parsed: object  # str | list[str] | None
    usage: UsageStats

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "prompt": self.prompt,
            "raw": self.raw,
            "parsed": self.parsed,
            "usage": self.usage.to_dict(),
            "latency_ms": self.usage.latency_ms,
        }


@dataclass
class Transcript:
    question_id: str
    pipeline: PipelineKind
    stages: list[StageRecord] = field(default_factory=list)
    passages: list[Passage] = field(default_factory=list)
    answer: str = ""
    notes: list[str] = field(default_factory=list)
    em: float | None = None
    f1: float | None = None

    @property
    def totals(self) -> UsageStats:
        return sum_usage(s.usage for s in self.stages)

    def llm_calls(self) -> int:
        return sum(1 for s in self.stages if s.name in LLM_STAGES)

    def to_dict(self) -> dict:
        return {
            "id": self.question_id,
            "pipeline": self.pipeline.value,
            "stages": [s.to_dict() for s in self.stages],
            "passages": [p.to_dict() for p in self.passages],
            "answer": self.answer,
            "em": self.em,
            "f1": self.f1,
            "totals": self.totals.to_dict(),
            "notes": self.notes,
        }


def parse_query_list(raw: str) -> list[str]:
    """Split model output into queries: cut at the first '**', split on ';'.

    Missing terminators are accepted (small student models often drop
    them); whitespace-only fragments are discarded.
    """
    head = raw.split("**", 1)[0]
    queries = [part.strip() for part in head.split(";")]
    queries = [q for q in queries if q]
    if not queries:
        raise ParseEmpty(f"no queries in output {raw!r}", raw=raw)
    return queries


def parse_answer(raw: str) -> str:
    """Answer text up to the first '**', trimmed; empty is a valid answer."""
    return raw.split("**", 1)[0].strip()


@dataclass(frozen=True)
class StageParams:
    temperature: float = 0.0
    max_tokens: int = 256
    stop: tuple[str, ...] = ()


DEFAULT_STAGE_PARAMS = {
    "extract": StageParams(max_tokens=512),
    "optimize": StageParams(max_tokens=256),
    "rewrite": StageParams(max_tokens=256),
    "read": StageParams(max_tokens=256),
}


def _chat(gateway: LLMGateway, prompt: str, params: StageParams) -> ChatResponse:
    return gateway.complete(
        ChatRequest(
            endpoint=gateway.endpoint,
            prompt=prompt,
            temperature=params.temperature,
            max_tokens=params.max_tokens,
            stop=params.stop,
        )
    )


def extract_parametric_knowledge(
    gateway: LLMGateway,
    question: str,
    catalog: PromptCatalog,
    params: StageParams = DEFAULT_STAGE_PARAMS["extract"],
) -> PseudoDocument:
    """Prompt the LLM for a pseudo-contextual background document."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    prompt = catalog.extraction_prompt(question)
    resp = _chat(gateway, prompt, params)
    if not resp.text.strip():
        raise ExtractionEmpty("extraction produced empty output", prompt=prompt, usage=resp.usage)
    return PseudoDocument(text=resp.text, usage=resp.usage, prompt=prompt)


def optimize_queries(
    gateway: LLMGateway,
    pseudo_doc: PseudoDocument,
    question: str,
    catalog: PromptCatalog,
    params: StageParams = DEFAULT_STAGE_PARAMS["optimize"],
    style: str = "teacher",
) -> QuerySet:
    """Refine the question into queries that validate or supplement the context."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    prompt = catalog.optimizer_prompt(pseudo_doc.text, question, style=style)
    resp = _chat(gateway, prompt, params)
    try:
        queries = parse_query_list(resp.text)
    except ParseEmpty as exc:
        raise ParseEmpty(str(exc), raw=resp.text, prompt=prompt, usage=resp.usage) from None
    return QuerySet(queries=tuple(queries), raw=resp.text, usage=resp.usage, prompt=prompt)


def rewrite_queries(
    gateway: LLMGateway,
    question: str,
    catalog: PromptCatalog,
    params: StageParams = DEFAULT_STAGE_PARAMS["rewrite"],
) -> QuerySet:
    """Plain query rewriting with no extracted context."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    prompt = catalog.rewriter_prompt(question)
    resp = _chat(gateway, prompt, params)
    try:
        queries = parse_query_list(resp.text)
    except ParseEmpty as exc:
        raise ParseEmpty(str(exc), raw=resp.text, prompt=prompt, usage=resp.usage) from None
    return QuerySet(queries=tuple(queries), raw=resp.text, usage=resp.usage, prompt=prompt)


def read(
    gateway: LLMGateway,
    question: str,
    passages: list[Passage],
    kind: PipelineKind,
    catalog: PromptCatalog,
    params: StageParams = DEFAULT_STAGE_PARAMS["read"],
) -> ReadResult:
    """Produce the final answer from the original question (and passages, if any)."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    if kind is PipelineKind.DIRECT:
        if passages:
            raise ValueError("the direct pipeline reads without passages")
        prompt = catalog.direct_prompt(question)
    else:
        prompt = catalog.reader_prompt(question, passages)
    resp = _chat(gateway, prompt, params)
    return ReadResult(
        answer=parse_answer(resp.text), raw=resp.text, usage=resp.usage, prompt=prompt
    )


class PipelineRunner:
    """Runs any pipeline kind over shared gateways, retriever, and catalog.

    Per-question stage errors degrade instead of aborting: a failed
    optimizer falls back to the original question as the sole retrieval
    query, a failed extraction falls back to a placeholder context, and a
    failed retrieval falls back to reading with no passages. Every
    fallback is noted in the transcript.
    """

    def __init__(
        self,
        reader: LLMGateway,
        optimizer: LLMGateway | None = None,
        retriever: Retriever | None = None,
        catalog: PromptCatalog | None = None,
        total_k: int = 5,
        merge_mode: str = "total",
        optimizer_prompt_style: str = "teacher",
        stage_params: dict[str, StageParams] | None = None,
    ):
        self.reader = reader
        self.optimizer = optimizer
        self.retriever = retriever
        self.catalog = catalog or PromptCatalog.for_dataset("default")
        self.total_k = total_k
        self.merge_mode = merge_mode
        self.optimizer_prompt_style = optimizer_prompt_style
        self.stage_params = dict(DEFAULT_STAGE_PARAMS)
        if stage_params:
            self.stage_params.update(stage_params)

    def run(self, kind: PipelineKind, question_id: str, question: str) -> Transcript:
        if kind.needs_optimizer and self.optimizer is None:
            raise ValueError(f"{kind.value} requires a configured optimizer endpoint")
        if kind.needs_retriever and self.retriever is None:
            raise ValueError(f"{kind.value} requires a retriever")
        t = Transcript(question_id=question_id, pipeline=kind)

        if kind is PipelineKind.DIRECT:
            self._read_into(t, question, [], kind)
            return t

        queries = [question]
        if kind is PipelineKind.ERRR:
            context = self._extract_into(t, question)
            queries = self._optimize_into(t, context, question) or queries
        elif kind is PipelineKind.RRR:
            queries = self._rewrite_into(t, question) or queries

        passages = self._retrieve_into(t, queries)
        self._read_into(t, question, passages, kind)
        return t

    # -- stages, each appending its record -----------------------------------

    def _extract_into(self, t: Transcript, question: str) -> str:
        # extraction probes the reader LLM's own knowledge; the optimizer
        # endpoint (possibly a small student) only refines queries
        try:
            doc = extract_parametric_knowledge(
                self.reader, question, self.catalog, self.stage_params["extract"]
            )
        except ExtractionEmpty as exc:
            t.stages.append(
                StageRecord("extract", exc.prompt, "", None, exc.usage or UsageStats.zero())
            )
            t.notes.append(f"extraction empty; using placeholder context {NO_BACKGROUND!r}")
            return NO_BACKGROUND
        except ErrrError as exc:
            t.stages.append(StageRecord("extract", "", "", None, UsageStats.zero()))
            t.notes.append(f"extraction failed ({exc}); using placeholder context")
            return NO_BACKGROUND
        t.stages.append(StageRecord("extract", doc.prompt, doc.text, doc.text, doc.usage))
        return doc.text

    def _optimize_into(self, t: Transcript, context: str, question: str) -> list[str] | None:
        doc = PseudoDocument(text=context, usage=UsageStats.zero())
        try:
            qs = optimize_queries(
                self.optimizer,
                doc,
                question,
                self.catalog,
                self.stage_params["optimize"],
                style=self.optimizer_prompt_style,
            )
        except ParseEmpty as exc:
            t.stages.append(
                StageRecord("optimize", exc.prompt, exc.raw, [], exc.usage or UsageStats.zero())
            )
            t.notes.append("optimizer output parsed to no queries; falling back to the question")
            return None
        except ErrrError as exc:
            t.stages.append(StageRecord("optimize", "", "", None, UsageStats.zero()))
            t.notes.append(f"optimizer failed ({exc}); falling back to the question")
            return None
        t.stages.append(StageRecord("optimize", qs.prompt, qs.raw, list(qs.queries), qs.usage))
        return list(qs.queries)

    def _rewrite_into(self, t: Transcript, question: str) -> list[str] | None:
        try:
            qs = rewrite_queries(
                self.optimizer, question, self.catalog, self.stage_params["rewrite"]
            )
        except ParseEmpty as exc:
            t.stages.append(
                StageRecord("rewrite", exc.prompt, exc.raw, [], exc.usage or UsageStats.zero())
            )
            t.notes.append("rewriter output parsed to no queries; falling back to the question")
            return None
        except ErrrError as exc:
            t.stages.append(StageRecord("rewrite", "", "", None, UsageStats.zero()))
            t.notes.append(f"rewriter failed ({exc}); falling back to the question")
            return None
        t.stages.append(StageRecord("rewrite", qs.prompt, qs.raw, list(qs.queries), qs.usage))
        return list(qs.queries)

    def _retrieve_into(self, t: Transcript, queries: list[str]) -> list[Passage]:
        try:
            result = retrieve_multi(self.retriever, queries, self.total_k, self.merge_mode)
        except Exception as exc:  # noqa: BLE001 - a dead retriever must not kill the run
            t.stages.append(StageRecord("retrieve", "; ".join(queries), "", [], UsageStats.zero()))
            t.notes.append(f"retrieval failed ({exc}); reading with no passages")
            return []
        self._record_retrieval(t, queries, result)
        return result.passages

    def _record_retrieval(self, t: Transcript, queries: list[str], result: MultiQueryResult):
        # zero usage: retrieval wall time is excluded so transcripts stay
        # byte-identical across cache-warm re-runs
        t.stages.append(
            StageRecord(
                "retrieve",
                "; ".join(queries),
                "",
                [p.id for p in result.passages],
                UsageStats.zero(),
            )
        )
        t.passages = result.passages
        for failure in result.failures:
            t.notes.append(f"retrieval query failed: {failure}")

    def _read_into(self, t: Transcript, question: str, passages: list[Passage], kind: PipelineKind):
        try:
            res = read(
                self.reader, question, passages, kind, self.catalog, self.stage_params["read"]
            )
        except ErrrError as exc:
            t.stages.append(StageRecord("read", "", "", None, UsageStats.zero()))
            t.notes.append(f"reader failed ({exc}); recording empty answer")
            t.answer = ""
            return
        t.stages.append(StageRecord("read", res.prompt, res.raw, res.answer, res.usage))
        t.answer = res.answer
