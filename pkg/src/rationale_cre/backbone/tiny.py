"""Character-level GRU encoder-decoder with dot-product attention.

Small enough to train on a laptop CPU in seconds, which is what the test
suite and the demos rely on.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .base import MANIFEST, Seq2SeqBackbone, check_batch, write_manifest

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
_FIRST, _LAST = 32, 126  # printable ASCII
VOCAB_SIZE = 4 + _LAST - _FIRST + 1


def encode_chars(text: str) -> list[int]:
    return [4 + ord(c) - _FIRST if _FIRST <= ord(c) <= _LAST else UNK for c in text]


def decode_chars(ids: Sequence[int]) -> str:
    out = []
    for i in ids:
        if i == EOS:
            break
        if i >= 4:
            out.append(chr(i - 4 + _FIRST))
    return "".join(out)


class TinySeq2Seq(nn.Module, Seq2SeqBackbone):
    def __init__(
        self,
        emb_dim: int = 24,
        hidden: int = 48,
        max_input_len: int = 512,
        max_output_len: int = 256,
        seed: int = 0,
    ):
        super().__init__()
        self.config = dict(emb_dim=emb_dim, hidden=hidden, max_input_len=max_input_len,
                           max_output_len=max_output_len, seed=seed)
        self.name = f"tiny-gru-{emb_dim}x{hidden}"
        self.dim = hidden
        self.max_input_len = max_input_len
        self.max_output_len = max_output_len
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.embed = nn.Embedding(VOCAB_SIZE, emb_dim, padding_idx=PAD)
            self.encoder = nn.GRU(emb_dim, hidden, batch_first=True)
            self.bridge = nn.Linear(2 * hidden, hidden)
            self.decoder = nn.GRU(emb_dim, hidden, batch_first=True)
            self.out = nn.Linear(2 * hidden, VOCAB_SIZE)

    # -- tensors -----------------------------------------------------------

    def _pad(self, seqs: list[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
        width = max(len(s) for s in seqs)
        ids = torch.full((len(seqs), width), PAD, dtype=torch.long)
        for i, s in enumerate(seqs):
            ids[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        return ids, ids != PAD

    def _source(self, texts: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        seqs = []
        for t in texts:
            ids = encode_chars(t) or [UNK]
            if len(ids) > self.max_input_len:
                log.warning("input of %d chars truncated to %d", len(ids), self.max_input_len)
                ids = ids[: self.max_input_len]
            seqs.append(ids)
        return self._pad(seqs)

    def _encode(self, src: torch.Tensor, mask: torch.Tensor):
        states, _ = self.encoder(self.embed(src))
        m = mask.unsqueeze(-1).to(states.dtype)
        pooled = (states * m).sum(1) / m.sum(1)
        return states, pooled

    def _init_hidden(self, states: torch.Tensor, mask: torch.Tensor, pooled: torch.Tensor) -> torch.Tensor:
        # last non-padding state; right padding never reaches it
        last = states[torch.arange(len(states)), mask.sum(1) - 1]
        return torch.tanh(self.bridge(torch.cat([last, pooled], dim=-1))).unsqueeze(0)

    def _logits(self, dec: torch.Tensor, states: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        scores = dec @ states.transpose(1, 2)
        scores = scores.masked_fill(~mask.unsqueeze(1), float("-inf"))
        context = torch.softmax(scores, dim=-1) @ states
        return self.out(torch.cat([dec, context], dim=-1))

    # -- interface ---------------------------------------------------------

    @torch.no_grad()
    def encode_features(self, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
        if not texts:
            raise ValueError("no texts to encode")
        was_training = self.training
        self.train(False)
        rows = []
        for i in range(0, len(texts), batch_size):
            src, mask = self._source(texts[i : i + batch_size])
            rows.append(self._encode(src, mask)[1].double().numpy())
        self.train(was_training)
        return np.concatenate(rows)

    def training_step(self, inputs: Sequence[str], targets: Sequence[str]) -> torch.Tensor:
        check_batch(inputs, targets)
        src, src_mask = self._source(inputs)
        tgt, tgt_mask = self._pad([encode_chars(t)[: self.max_output_len] + [EOS] for t in targets])
        states, pooled = self._encode(src, src_mask)
        h0 = self._init_hidden(states, src_mask, pooled)
        dec_in = torch.cat([torch.full((len(inputs), 1), BOS, dtype=torch.long), tgt[:, :-1]], dim=1)
        dec, _ = self.decoder(self.embed(dec_in), h0)
        logits = self._logits(dec, states, src_mask)
        nll = F.cross_entropy(logits.transpose(1, 2), tgt, reduction="none")
        m = tgt_mask.to(nll.dtype)
        return (nll * m).sum(1) / m.sum(1)

    @torch.no_grad()
    def generate(self, inputs: Sequence[str], batch_size: int = 64) -> list[str]:
        was_training = self.training
        self.train(False)
        out: list[str] = []
        for i in range(0, len(inputs), batch_size):
            out += self._greedy(inputs[i : i + batch_size])
        self.train(was_training)
        return out

    def _greedy(self, inputs: Sequence[str]) -> list[str]:
        src, mask = self._source(inputs)
        states, pooled = self._encode(src, mask)
        h = self._init_hidden(states, mask, pooled)
        tok = torch.full((len(inputs), 1), BOS, dtype=torch.long)
        done = torch.zeros(len(inputs), dtype=torch.bool)
        steps = []
        for _ in range(self.max_output_len):
            dec, h = self.decoder(self.embed(tok), h)
            tok = self._logits(dec, states, mask).argmax(-1)
            steps.append(tok)
            done |= tok.squeeze(1) == EOS
            if done.all():
                break
        ids = torch.cat(steps, dim=1).tolist()
        return [decode_chars(row) for row in ids]

    # -- persistence -------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        write_manifest(directory, kind="tiny", model=self.name, dim=self.dim,
                       max_input_len=self.max_input_len, max_output_len=self.max_output_len,
                       config=self.config)
        torch.save(self.state_dict(), directory / "weights.pt")

    @classmethod
    def load(cls, directory: str | Path) -> "TinySeq2Seq":
        directory = Path(directory)
        manifest = json.loads((directory / MANIFEST).read_text())
        model = cls(**manifest["config"])
        model.load_state_dict(torch.load(directory / "weights.pt"))
        return model
