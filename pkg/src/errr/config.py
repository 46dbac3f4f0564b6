"""Run configuration: a single TOML document mapped onto RunConfig.

Validation happens before any work: missing API-key variables, unknown
pipeline kinds, and kind-specific requirements (a retriever for RAG/RRR/
ERRR, an optimizer endpoint for RRR/ERRR) are all ConfigErrors.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .evaluation import DatasetSpec
from .gateway import LLMEndpoint, PriceTable, RetryPolicy
from .pipelines import DEFAULT_STAGE_PARAMS, PipelineKind, StageParams
from .retrieval import EmbeddingProviderConfig, WebSearchConfig


@dataclass(frozen=True)
class RetrieverConfig:
    kind: str  # "web" or "dense"
    web: WebSearchConfig | None = None
    index_path: str | None = None
    embedding: EmbeddingProviderConfig | None = None


@dataclass
class RunConfig:
    pipeline: PipelineKind
    dataset: DatasetSpec
    reader: LLMEndpoint
    out_dir: Path
    cache_dir: Path | None = None
    optimizer: LLMEndpoint | None = None  # None: the reader endpoint serves both roles
    retriever: RetrieverConfig | None = None
    total_k: int = 5
    merge_mode: str = "total"
    parallelism: int = 4
    optimizer_prompt: str = "teacher"
    limit: int | None = None
    stage_params: dict[str, StageParams] = field(default_factory=dict)
    retry: RetryPolicy = RetryPolicy()
    timeout_s: float = 60.0


def _endpoint_from_table(name: str, table: dict) -> LLMEndpoint:
    try:
        price_table = table.get("price", {})
        return LLMEndpoint(
            name=table.get("name", name),
            base_url=table["base_url"],
            model_id=table["model_id"],
            api_key_env=table.get("api_key_env"),
            price=PriceTable(
                prompt_rate=float(price_table.get("prompt_rate", 0.0)),
                completion_rate=float(price_table.get("completion_rate", 0.0)),
            ),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"endpoint {name!r}: {exc}") from exc


def _retriever_from_table(table: dict) -> RetrieverConfig:
    kind = table.get("kind")
    if kind == "web":
        return RetrieverConfig(
            kind="web",
            web=WebSearchConfig(
                base_url=table["base_url"],
                api_key_env=table.get("api_key_env"),
                result_count=int(table.get("result_count", 5)),
            ),
        )
    if kind == "dense":
        emb = table.get("embedding")
        if not emb:
            raise ConfigError("dense retriever needs an [retriever.embedding] table")
        return RetrieverConfig(
            kind="dense",
            index_path=table["index_path"],
            embedding=EmbeddingProviderConfig(
                base_url=emb["base_url"],
                model_id=emb["model_id"],
                dim=int(emb.get("dim", 768)),
            ),
        )
    raise ConfigError(f"retriever kind must be 'web' or 'dense', got {kind!r}")


def _stage_params_from_table(table: dict) -> dict[str, StageParams]:
    params = {}
    for stage, overrides in table.items():
        if stage not in DEFAULT_STAGE_PARAMS:
            raise ConfigError(f"unknown stage {stage!r} in [stages]")
        base = DEFAULT_STAGE_PARAMS[stage]
        params[stage] = StageParams(
            temperature=float(overrides.get("temperature", base.temperature)),
            max_tokens=int(overrides.get("max_tokens", base.max_tokens)),
            stop=tuple(overrides.get("stop", base.stop)),
        )
    return params


def load_run_config(
    path: str | Path,
    pipeline: str | None = None,
    dataset: str | None = None,
    limit: int | None = None,
    out_dir: str | None = None,
    total_k: int | None = None,
) -> RunConfig:
    """Parse a TOML config file, applying CLI overrides on top."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    try:
        kind = PipelineKind.from_string(pipeline or doc["pipeline"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"pipeline: {exc}") from exc

    dataset_table = doc.get("dataset")
    if dataset is not None:
        named = doc.get("datasets", {}).get(dataset)
        if named is not None:
            dataset_table = dict(named, name=dataset)
        elif dataset_table is not None:
            dataset_table = dict(dataset_table, name=dataset)
    if not dataset_table or "path" not in dataset_table:
        raise ConfigError("config needs a [dataset] table with a path")
    slice_val = dataset_table.get("slice")
    spec = DatasetSpec(
        name=dataset_table.get("name", "custom"),
        path=dataset_table["path"],
        slice=tuple(slice_val) if slice_val else None,
    )

    endpoints = doc.get("endpoints", {})
    if "reader" not in endpoints:
        raise ConfigError("config needs an [endpoints.reader] table")
    reader = _endpoint_from_table("reader", endpoints["reader"])
    optimizer = (
        _endpoint_from_table("optimizer", endpoints["optimizer"])
        if "optimizer" in endpoints
        else None
    )

    retriever = _retriever_from_table(doc["retriever"]) if "retriever" in doc else None

    gw = doc.get("gateway", {})
    retry = RetryPolicy(
        attempts=int(gw.get("attempts", 3)),
        backoff_s=float(gw.get("backoff_s", 1.0)),
    )

    out = Path(out_dir or doc.get("out_dir", "out"))
    cache = doc.get("cache_dir")
    config = RunConfig(
        pipeline=kind,
        dataset=spec,
        reader=reader,
        optimizer=optimizer,
        retriever=retriever,
        out_dir=out,
        cache_dir=Path(cache) if cache else None,
        total_k=int(total_k if total_k is not None else doc.get("total_k", 5)),
        merge_mode=doc.get("merge_mode", "total"),
        parallelism=int(doc.get("parallelism", 4)),
        optimizer_prompt=doc.get("optimizer_prompt", "teacher"),
        limit=limit if limit is not None else dataset_table.get("limit"),
        stage_params=_stage_params_from_table(doc.get("stages", {})),
        retry=retry,
        timeout_s=float(gw.get("timeout_s", 60.0)),
    )
    validate_config(config)
    return config


def validate_config(config: RunConfig) -> None:
    """Fail fast on anything that would abort a long run midway."""
    if config.total_k < 1:
        raise ConfigError("total_k must be >= 1")
    if config.parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    if config.merge_mode not in ("total", "per-query"):
        raise ConfigError(f"merge_mode must be 'total' or 'per-query', got {config.merge_mode!r}")
    if config.optimizer_prompt not in ("teacher", "student"):
        raise ConfigError(
            f"optimizer_prompt must be 'teacher' or 'student', got {config.optimizer_prompt!r}"
        )
    if config.pipeline.needs_retriever and config.retriever is None:
        raise ConfigError(f"pipeline {config.pipeline.value!r} requires a [retriever] table")

    for env_name in _named_env_vars(config):
        if not os.environ.get(env_name):
            raise ConfigError(f"environment variable {env_name!r} is not set")

    if not os.path.exists(config.dataset.path):
        raise ConfigError(f"dataset file not found: {config.dataset.path}")


def _named_env_vars(config: RunConfig) -> list[str]:
    names = []
    if config.reader.api_key_env:
        names.append(config.reader.api_key_env)
    if config.optimizer and config.optimizer.api_key_env:
        names.append(config.optimizer.api_key_env)
    if (
        config.retriever
        and config.retriever.web
        and config.retriever.web.api_key_env
    ):
        names.append(config.retriever.web.api_key_env)
    return names
