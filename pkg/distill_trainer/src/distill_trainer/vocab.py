"""Lossless word-level vocabulary.

Tokens are maximal runs of non-space or space characters, so joining the
tokens of any string reproduces it exactly. Decoding a trained target
therefore yields the target verbatim, whitespace included.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

_TOKEN_RE = re.compile(r"\S+|\s+")

PAD, EOS, UNK = 0, 1, 2
_SPECIALS = ("<pad>", "</s>", "<unk>")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


class Vocab:
    def __init__(self, tokens: list[str]):
        self.id_to_token = list(_SPECIALS) + tokens
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def from_texts(cls, texts) -> "Vocab":
        seen: dict[str, None] = {}
        for text in texts:
            for token in tokenize(text):
                seen.setdefault(token)
        return cls(list(seen))

    def encode(self, text: str, add_eos: bool = True, max_len: int | None = None) -> list[int]:
        ids = [self.token_to_id.get(t, UNK) for t in tokenize(text)]
        if max_len is not None:
            ids = ids[: max_len - (1 if add_eos else 0)]
        return ids + [EOS] if add_eos else ids

    def decode(self, ids) -> str:
        return "".join(self.id_to_token[i] for i in ids if i > UNK)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.id_to_token[len(_SPECIALS):], ensure_ascii=False),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))
