"""Distillation pair files: one JSON object {"input", "target"} per line."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


class DataError(Exception):
    """Schema-invalid training data; message names the file and line."""


def load_pairs(path: str | Path) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pair = (obj["input"], obj["target"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}, line {lineno}: {exc}") from exc
            if not pair[0] or not pair[1]:
                raise DataError(f"{path}, line {lineno}: input and target must be non-empty")
            pairs.append(pair)
    return pairs


def load_all(paths) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    for path in paths:
        pairs.extend(load_pairs(path))
    if not pairs:
        raise DataError(f"no training pairs in {list(map(str, paths))}")
    return pairs


def fingerprint(paths) -> str:
    """sha256 over the raw bytes of the training files, in order."""
    h = hashlib.sha256()
    for path in paths:
        h.update(Path(path).read_bytes())
    return h.hexdigest()
