"""Compact sequence-to-sequence student: LSTM encoder-decoder with attention."""

from __future__ import annotations

import torch
import torch.nn as nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .vocab import EOS, PAD

PRESETS = {
    "small": 128,
    "base": 256,
}


class Seq2SeqStudent(nn.Module):
    """Encoder-decoder with dot-product attention over encoder states.

    Small enough to train from scratch on a distillation file in seconds,
    which is the whole point: the checkpoint ships with its vocabulary and
    decodes greedily at serving time.
    """

    def __init__(self, vocab_size: int, d_model: int = 256):
        super().__init__()
        self.d_model = d_model
        self.embedding = nn.Embedding(vocab_size, d_model, padding_idx=PAD)
        self.encoder = nn.LSTM(d_model, d_model, batch_first=True)
        self.decoder = nn.LSTM(d_model, d_model, batch_first=True)
        self.combine = nn.Linear(2 * d_model, d_model)
        self.project = nn.Linear(d_model, vocab_size)

    def _encode(self, x: torch.Tensor):
        lengths = (x != PAD).sum(dim=1).clamp(min=1)
        packed = pack_padded_sequence(
            self.embedding(x), lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        enc_out, state = self.encoder(packed)
        enc_out, _ = pad_packed_sequence(enc_out, batch_first=True, total_length=x.shape[1])
        return enc_out, state

    def _attend(self, dec_out, enc_out, enc_mask):
        scores = dec_out @ enc_out.transpose(1, 2)
        scores = scores.masked_fill(enc_mask.unsqueeze(1), -1e9)
        context = torch.softmax(scores, dim=-1) @ enc_out
        return torch.tanh(self.combine(torch.cat([dec_out, context], dim=-1)))

    def forward(self, x: torch.Tensor, y_in: torch.Tensor) -> torch.Tensor:
        enc_out, state = self._encode(x)
        dec_out, _ = self.decoder(self.embedding(y_in), state)
        return self.project(self._attend(dec_out, enc_out, x == PAD))

    @torch.no_grad()
    def greedy_decode(self, x: torch.Tensor, max_len: int = 256) -> list[int]:
        self.eval()
        enc_out, state = self._encode(x)
        mask = x == PAD
        token = torch.full((1, 1), PAD, dtype=torch.long)
        out: list[int] = []
        for _ in range(max_len):
            dec_out, state = self.decoder(self.embedding(token), state)
            logits = self.project(self._attend(dec_out, enc_out, mask))
            next_id = int(logits[0, -1].argmax())
            if next_id == EOS:
                break
            out.append(next_id)
            token = torch.tensor([[next_id]], dtype=torch.long)
        return out
