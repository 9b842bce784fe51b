from __future__ import annotations

import abc
import json
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

MANIFEST = "manifest.json"


class Seq2SeqBackbone(abc.ABC):
    """What the trainer, memory and evaluator need from a seq2seq model."""

    name: str
    dim: int
    max_input_len: int
    max_output_len: int

    @abc.abstractmethod
    def encode_features(self, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
        """Mean-pooled final encoder states, one row per text."""

    @abc.abstractmethod
    def training_step(self, inputs: Sequence[str], targets: Sequence[str]) -> torch.Tensor:
        """Per-sequence teacher-forced cross-entropy, still attached to the graph."""

    @abc.abstractmethod
    def generate(self, inputs: Sequence[str], batch_size: int = 64) -> list[str]:
        """Greedy decoding."""

    @abc.abstractmethod
    def parameters(self):
        ...

    @abc.abstractmethod
    def train(self, mode: bool = True):
        ...

    @abc.abstractmethod
    def save(self, directory: str | Path) -> None:
        ...

    def eval(self):
        return self.train(False)


def check_batch(inputs: Sequence[str], targets: Sequence[str]) -> None:
    if not inputs:
        raise ValueError("empty batch")
    if len(inputs) != len(targets):
        raise ValueError(f"{len(inputs)} inputs but {len(targets)} targets")
    if not all(inputs) or not all(targets):
        raise ValueError("batch contains an empty string")


def write_manifest(directory: Path, **fields) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / MANIFEST).write_text(json.dumps(fields, indent=1, sort_keys=True))


def load_backbone(directory: str | Path) -> Seq2SeqBackbone:
    """Reload a checkpoint written by any backbone's ``save``."""
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    if manifest["kind"] == "tiny":
        from .tiny import TinySeq2Seq

        return TinySeq2Seq.load(directory)
    if manifest["kind"] == "hf":
        from .hf import HFSeq2Seq

        return HFSeq2Seq.load(directory)
    raise ValueError(f"unknown backbone kind {manifest['kind']!r}")
