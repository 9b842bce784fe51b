"""Adapter for pretrained encoder-decoder models from ``transformers``.

Full runs use ``google/t5-base-lm-adapt``; anything loadable with
``AutoModelForSeq2SeqLM`` works.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .base import MANIFEST, Seq2SeqBackbone, check_batch, write_manifest

log = logging.getLogger(__name__)

DEFAULT_MODEL = "google/t5-base-lm-adapt"


class HFSeq2Seq(Seq2SeqBackbone):
    def __init__(self, model, tokenizer, name: str = "", max_input_len: int = 512, max_output_len: int = 256):
        self.model = model
        self.tokenizer = tokenizer
        self.name = name or getattr(model.config, "_name_or_path", "") or model.config.model_type
        self.dim = model.config.d_model
        self.max_input_len = max_input_len
        self.max_output_len = max_output_len

    @classmethod
    def from_pretrained(cls, name: str = DEFAULT_MODEL, **kwargs) -> "HFSeq2Seq":
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        return cls(AutoModelForSeq2SeqLM.from_pretrained(name), AutoTokenizer.from_pretrained(name), name, **kwargs)

    def _tok(self, texts: Sequence[str], max_len: int):
        enc = self.tokenizer(list(texts), padding=True, truncation=False, return_tensors="pt")
        if enc.input_ids.shape[1] > max_len:
            log.warning("input of %d tokens truncated to %d", enc.input_ids.shape[1], max_len)
            enc = self.tokenizer(list(texts), padding=True, truncation=True, max_length=max_len,
                                 return_tensors="pt")
        return enc

    @torch.no_grad()
    def encode_features(self, texts: Sequence[str], batch_size: int = 32) -> np.ndarray:
        if not texts:
            raise ValueError("no texts to encode")
        was_training = self.model.training
        self.model.eval()
        encoder = self.model.get_encoder()
        rows = []
        for i in range(0, len(texts), batch_size):
            enc = self._tok(texts[i : i + batch_size], self.max_input_len)
            states = encoder(input_ids=enc.input_ids, attention_mask=enc.attention_mask).last_hidden_state
            m = enc.attention_mask.unsqueeze(-1).to(states.dtype)
            rows.append(((states * m).sum(1) / m.sum(1)).double().numpy())
        self.model.train(was_training)
        return np.concatenate(rows)

    def training_step(self, inputs: Sequence[str], targets: Sequence[str]) -> torch.Tensor:
        check_batch(inputs, targets)
        enc = self._tok(inputs, self.max_input_len)
        labels = self._tok(targets, self.max_output_len).input_ids
        labels = labels.masked_fill(labels == self.tokenizer.pad_token_id, -100)
        logits = self.model(input_ids=enc.input_ids, attention_mask=enc.attention_mask, labels=labels).logits
        nll = F.cross_entropy(logits.transpose(1, 2), labels, ignore_index=-100, reduction="none")
        m = (labels != -100).to(nll.dtype)
        return (nll * m).sum(1) / m.sum(1)

    @torch.no_grad()
    def generate(self, inputs: Sequence[str], batch_size: int = 32) -> list[str]:
        was_training = self.model.training
        self.model.eval()
        out: list[str] = []
        for i in range(0, len(inputs), batch_size):
            enc = self._tok(inputs[i : i + batch_size], self.max_input_len)
            ids = self.model.generate(
                input_ids=enc.input_ids,
                attention_mask=enc.attention_mask,
                max_new_tokens=self.max_output_len,
                num_beams=1,
                do_sample=False,
            )
            out += self.tokenizer.batch_decode(ids, skip_special_tokens=True)
        self.model.train(was_training)
        return out

    def parameters(self):
        return self.model.parameters()

    def train(self, mode: bool = True):
        self.model.train(mode)
        return self

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        write_manifest(directory, kind="hf", model=self.name, dim=self.dim,
                       max_input_len=self.max_input_len, max_output_len=self.max_output_len)
        self.model.save_pretrained(directory / "model")
        self.tokenizer.save_pretrained(directory / "model")

    @classmethod
    def load(cls, directory: str | Path) -> "HFSeq2Seq":
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        directory = Path(directory)
        manifest = json.loads((directory / MANIFEST).read_text())
        return cls(
            AutoModelForSeq2SeqLM.from_pretrained(directory / "model"),
            AutoTokenizer.from_pretrained(directory / "model"),
            manifest["model"],
            max_input_len=manifest["max_input_len"],
            max_output_len=manifest["max_output_len"],
        )
