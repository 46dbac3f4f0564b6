"""Dataset loading, answer normalization, and EM/F1 scoring.

Normalization follows the convention shared by the open-domain QA
literature for all three supported datasets: lowercase, strip punctuation,
drop the articles a/an/the, collapse whitespace. Both metrics take the max
over gold aliases.
"""

from __future__ import annotations

import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyResults, FormatError, SliceOutOfRange
from .gateway import UsageStats, sum_usage

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

# slices fixed by convention: AmbigNQ first 1000, PopQA first 997, HotpotQA full
PRESET_SLICES: dict[str, tuple[int, int] | None] = {
    "ambignq": (0, 1000),
    "popqa": (0, 997),
    "hotpotqa": None,
}


@dataclass(frozen=True)
class QAExample:
    id: str
    question: str
    gold_answers: tuple[str, ...]
    dataset: str = "custom"

    def __post_init__(self):
        if not self.question:
            raise ValueError("question must be non-empty")
        if not self.gold_answers or any(not g for g in self.gold_answers):
            raise ValueError("gold answers must be non-empty")


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    path: str | Path
    slice: tuple[int, int] | None = None  # (offset, length); None = preset or full

    def effective_slice(self) -> tuple[int, int] | None:
        if self.slice is not None:
            if self.slice[1] < 1:
                raise ValueError("slice length must be >= 1")
            return self.slice
        return PRESET_SLICES.get(self.name.lower())


def load_dataset(spec: DatasetSpec) -> list[QAExample]:
    """Read the unified JSONL format ({"id","question","answers":[...]}) in file order.

    Single pass with early stop at the slice boundary; a slice that
    extends past the end of the file is an error.
    """
    window = spec.effective_slice()
    name = spec.name.lower()
    examples: list[QAExample] = []
    stop_at = None if window is None else window[0] + window[1]
    count = 0
    with open(spec.path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if stop_at is not None and count >= stop_at:
                break
            try:
                obj = json.loads(line)
                example = QAExample(
                    id=str(obj["id"]),
                    question=obj["question"],
                    gold_answers=tuple(obj["answers"]),
                    dataset=name if name in PRESET_SLICES else "custom",
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{spec.path}, line {lineno}: {exc}") from exc
            examples.append(example)
            count += 1
    if window is None:
        return examples
    offset, length = window
    if offset + length > len(examples):
        raise SliceOutOfRange(
            f"slice ({offset}, {length}) needs {offset + length} examples, "
            f"file has {len(examples)}"
        )
    return examples[offset : offset + length]


def normalize_answer(s: str) -> str:
    """Lowercase, no punctuation, no articles, single spaces."""
    s = s.lower()
    s = s.translate(_PUNCT_TABLE)
    s = _ARTICLES_RE.sub(" ", s)
    return " ".join(s.split())


def exact_match(pred: str, golds: Sequence[str]) -> int:
    if not golds:
        raise ValueError("golds must be non-empty")
    norm = normalize_answer(pred)
    return int(any(norm == normalize_answer(g) for g in golds))


def _token_f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1(pred: str, golds: Sequence[str]) -> float:
    """Max token-overlap F1 over gold aliases, multiset intersection."""
    if not golds:
        raise ValueError("golds must be non-empty")
    pred_tokens = normalize_answer(pred).split()
    return max(_token_f1(pred_tokens, normalize_answer(g).split()) for g in golds)


@dataclass(frozen=True)
class ExampleResult:
    em: int
    f1: float
    usage: UsageStats = UsageStats.zero()


@dataclass(frozen=True)
class EvalSummary:
    n: int
    em: float
    f1: float
    totals: UsageStats
    source: str = ""  # where the per-example results live (transcripts path)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "em": self.em,
            "f1": self.f1,
            "totals": self.totals.to_dict(),
            "source": self.source,
        }


def summarize(results: Iterable[ExampleResult], source: str = "") -> EvalSummary:
    """Arithmetic means plus summed usage; exact under permutation (fsum)."""
    results = list(results)
    if not results:
        raise EmptyResults("no per-example results to summarize")
    n = len(results)
    return EvalSummary(
        n=n,
        em=math.fsum(r.em for r in results) / n,
        f1=math.fsum(r.f1 for r in results) / n,
        totals=sum_usage(r.usage for r in results),
        source=source,
    )
