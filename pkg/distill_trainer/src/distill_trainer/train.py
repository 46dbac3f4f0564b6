"""Fine-tune the student on teacher pairs; deterministic under a fixed seed."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

from .data import fingerprint, load_all
from .model import PRESETS, Seq2SeqStudent
from .vocab import PAD, Vocab


class TrainingDiverged(Exception):
    """Loss became non-finite; the run is aborted rather than saved."""


class LoadError(Exception):
    """Checkpoint directory is missing pieces or inconsistent."""


@dataclass
class TrainSpec:
    data_paths: list[str]
    out_dir: str
    base_model: str = "base"  # preset name; sets the model width
    epochs: int = 3
    learning_rate: float = 1e-4
    batch_size: int = 4
    seed: int = 0
    max_input_len: int = 256
    max_target_len: int = 128

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.base_model not in PRESETS:
            raise ValueError(f"base_model must be one of {sorted(PRESETS)}")


@dataclass
class StudentCheckpoint:
    path: Path
    manifest: dict = field(default_factory=dict)


def _pad_batch(rows: list[list[int]]) -> torch.Tensor:
    width = max(len(r) for r in rows)
    return torch.tensor([r + [PAD] * (width - len(r)) for r in rows], dtype=torch.long)


def train(spec: TrainSpec) -> StudentCheckpoint:
    """Cross-entropy fine-tuning of input -> target; saves model + vocab + manifest."""
    pairs = load_all(spec.data_paths)
    vocab = Vocab.from_texts(text for pair in pairs for text in pair)

    torch.manual_seed(spec.seed)
    torch.set_num_threads(1)  # keeps final loss reproducible to well under 1e-6
    model = Seq2SeqStudent(len(vocab), d_model=PRESETS[spec.base_model])
    optimizer = torch.optim.Adam(model.parameters(), lr=spec.learning_rate)
    loss_fn = nn.CrossEntropyLoss(ignore_index=PAD)

    encoded = [
        (
            vocab.encode(src, max_len=spec.max_input_len),
            vocab.encode(tgt, max_len=spec.max_target_len),
        )
        for src, tgt in pairs
    ]
    order = list(range(len(encoded)))
    rng = random.Random(spec.seed)

    model.train()
    final_loss = math.inf
    for _epoch in range(spec.epochs):
        rng.shuffle(order)
        epoch_losses = []
        for start in range(0, len(order), spec.batch_size):
            batch = [encoded[i] for i in order[start : start + spec.batch_size]]
            x = _pad_batch([src for src, _ in batch])
            y = _pad_batch([tgt for _, tgt in batch])
            y_in = torch.cat([torch.full((y.shape[0], 1), PAD, dtype=torch.long), y[:, :-1]], dim=1)
            logits = model(x, y_in)
            loss = loss_fn(logits.transpose(1, 2), y)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {_epoch + 1}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        final_loss = sum(epoch_losses) / len(epoch_losses)

    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(
        {"state_dict": model.state_dict(), "d_model": model.d_model, "vocab_size": len(vocab)},
        out / "model.pt",
    )
    vocab.save(out / "vocab.json")
    manifest = {
        "base_model": spec.base_model,
        "epochs": spec.epochs,
        "learning_rate": spec.learning_rate,
        "batch_size": spec.batch_size,
        "seed": spec.seed,
        "pairs": len(pairs),
        "final_loss": final_loss,
        "dataset_fingerprint": fingerprint(spec.data_paths),
        "vocab_size": len(vocab),
        "max_input_len": spec.max_input_len,
        "max_target_len": spec.max_target_len,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return StudentCheckpoint(path=out, manifest=manifest)


@dataclass
class Student:
    model: Seq2SeqStudent
    vocab: Vocab
    manifest: dict

    def generate(self, text: str, max_len: int | None = None) -> str:
        x = torch.tensor(
            [self.vocab.encode(text, max_len=self.manifest.get("max_input_len", 256))],
            dtype=torch.long,
        )
        limit = max_len or self.manifest.get("max_target_len", 128)
        return self.vocab.decode(self.model.greedy_decode(x, max_len=limit))

    def count_tokens(self, text: str) -> int:
        return len(self.vocab.encode(text, add_eos=False))


def load_student(checkpoint_dir: str | Path) -> Student:
    path = Path(checkpoint_dir)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        vocab = Vocab.load(path / "vocab.json")
        saved = torch.load(path / "model.pt", map_location="cpu", weights_only=True)
    except FileNotFoundError as exc:
        raise LoadError(f"incomplete checkpoint at {path}: {exc}") from exc
    if saved["vocab_size"] != len(vocab):
        raise LoadError(
            f"vocab size {len(vocab)} does not match model ({saved['vocab_size']})"
        )
    model = Seq2SeqStudent(saved["vocab_size"], d_model=saved["d_model"])
    model.load_state_dict(saved["state_dict"])
    model.eval()
    return Student(model=model, vocab=vocab, manifest=manifest)
