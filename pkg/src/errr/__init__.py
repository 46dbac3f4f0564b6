"""Extract-Refine-Retrieve-Read pipelines with baselines and an EM/F1 harness."""

from .errors import (
    AuthError,
    ConfigError,
    DimensionMismatch,
    EmptyIndex,
    EmptyResult,
    EmptyResults,
    ErrrError,
    ExtractionEmpty,
    FormatError,
    IntegrityError,
    ParseEmpty,
    ProviderError,
    SliceOutOfRange,
    TransportError,
)
from .evaluation import (
    DatasetSpec,
    EvalSummary,
    QAExample,
    exact_match,
    f1,
    load_dataset,
    normalize_answer,
    summarize,
)
from .gateway import (
    ChatRequest,
    ChatResponse,
    LLMEndpoint,
    LLMGateway,
    PriceTable,
    ResponseCache,
    RetryPolicy,
    UsageLedger,
    UsageStats,
    cache_key,
    estimate_cost,
)
from .pipelines import (
    PipelineKind,
    PipelineRunner,
    PseudoDocument,
    QuerySet,
    Transcript,
    extract_parametric_knowledge,
    optimize_queries,
    parse_query_list,
    read,
    rewrite_queries,
)
from .prompts import PromptCatalog, PromptTemplate
from .retrieval import (
    DenseIndex,
    DenseRetriever,
    EmbeddingClient,
    EmbeddingProviderConfig,
    Passage,
    WebSearchClient,
    WebSearchConfig,
    dense_top_k,
    ingest_corpus,
    l2_distance,
    retrieve_multi,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
