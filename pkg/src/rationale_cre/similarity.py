"""Analogous-relation detection from mean instance embeddings."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .backbone import Seq2SeqBackbone
from .types import RelationInstance, question_text


def relation_embeddings(
    groups: Mapping[str, Sequence[RelationInstance]], handle: Seq2SeqBackbone
) -> dict[str, np.ndarray]:
    """Mean encoder feature of each relation's instances."""
    table = {}
    for rel in sorted(groups):
        items = groups[rel]
        if not items:
            raise ValueError(f"relation {rel!r} has no instances")
        table[rel] = handle.encode_features([question_text(i) for i in items]).mean(axis=0)
    return table


def cosine_matrix(table: Mapping[str, np.ndarray]) -> tuple[list[str], np.ndarray]:
    labels = sorted(table)
    if not labels:
        return labels, np.zeros((0, 0))
    vecs = np.stack([np.asarray(table[r], dtype=np.float64) for r in labels])
    if not np.all(np.isfinite(vecs)):
        bad = [r for r, v in zip(labels, vecs) if not np.all(np.isfinite(v))]
        raise ValueError(f"non-finite embedding for {bad[0]!r}")
    norms = np.linalg.norm(vecs, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"zero-norm embedding for {labels[int(np.argmin(norms))]!r}")
    unit = vecs / norms[:, None]
    # rounding can push parallel vectors just past 1
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    upper = np.triu(sims, 1)
    return labels, upper + upper.T + np.eye(len(labels))


def analogous_sets(table: Mapping[str, np.ndarray], tau: float) -> dict[str, frozenset[str]]:
    """``r2 in result[r1]`` iff ``r1 != r2`` and their cosine similarity exceeds ``tau``."""
    if not -1.0 <= tau <= 1.0:
        raise ValueError(f"tau out of [-1,1]: {tau}")
    labels, sims = cosine_matrix(table)
    return {
        r: frozenset(labels[j] for j in range(len(labels)) if j != i and sims[i, j] > tau)
        for i, r in enumerate(labels)
    }


def write_analogous_report(path: str | Path, table: Mapping[str, np.ndarray], tau: float) -> None:
    """JSON report: threshold, analogous sets and the full similarity matrix."""
    labels, sims = cosine_matrix(table)
    sets = analogous_sets(table, tau)
    Path(path).write_text(json.dumps({
        "tau": tau,
        "analogous": {r: sorted(s) for r, s in sets.items()},
        "labels": labels,
        "similarity": np.round(sims, 6).tolist(),
    }, indent=1))
