"""Episodic memory: K-means exemplar selection and rationale bookkeeping."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .backbone import Seq2SeqBackbone
from .data import by_relation
from .types import RationaleRecord, RelationInstance, question_text

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 100
TIE_TOL = 1e-9


def _nearest_free(dist: np.ndarray, allowed: np.ndarray) -> int | None:
    """Lowest allowed index among those at the minimum distance.

    Distances within ``TIE_TOL`` (relative) of the minimum count as equal, so
    floating-point noise cannot break a geometric tie.
    """
    idx = np.flatnonzero(allowed)
    if len(idx) == 0:
        return None
    d = dist[idx]
    dmin = d.min()
    return int(idx[d <= dmin + TIE_TOL * max(1.0, dmin)][0])


def select_exemplars(features: np.ndarray, k: int, seed: int = 0) -> list[int]:
    """Row indices of the points nearest each K-means centroid, sorted.

    ``K = min(k, len(features))``. Within a cluster the member closest to
    the centroid wins, lowest row index first on ties. A cluster whose
    choice is already taken (duplicate points) falls back to its next
    nearest unselected point.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("features must be a nonempty 2-D array")
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(x)
    n_clusters = min(k, n)
    if n_clusters == n:
        return list(range(n))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        km = KMeans(
            n_clusters=n_clusters,
            init="k-means++",
            n_init=KMEANS_RESTARTS,
            max_iter=KMEANS_MAX_ITER,
            algorithm="lloyd",
            random_state=seed,
        ).fit(x)
    chosen: list[int] = []
    taken = np.zeros(n, dtype=bool)
    for c in range(n_clusters):
        in_cluster = km.labels_ == c
        # the centroid of the final assignment; duplicates can leave a cluster empty
        centre = x[in_cluster].mean(axis=0) if in_cluster.any() else km.cluster_centers_[c]
        dist = np.linalg.norm(x - centre, axis=1)
        pick = _nearest_free(dist, in_cluster & ~taken)
        if pick is None:
            pick = _nearest_free(dist, ~taken)
        taken[pick] = True
        chosen.append(pick)
    return sorted(chosen)


@dataclass(frozen=True)
class MemoryEntry:
    instance: RelationInstance
    rationale: RationaleRecord
    # the original plain rationale, kept for the task-specific ablations
    plain: RationaleRecord

    def __post_init__(self):
        for r in (self.rationale, self.plain):
            if r.instance_id != self.instance.id:
                raise ValueError(f"rationale for {r.instance_id} stored with {self.instance.id}")

    def to_dict(self) -> dict:
        return {"instance": self.instance.to_dict(), "rationale": self.rationale.to_dict(),
                "plain": self.plain.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MemoryEntry":
        return cls(RelationInstance.from_dict(d["instance"]), RationaleRecord.from_dict(d["rationale"]),
                   RationaleRecord.from_dict(d["plain"]))


@dataclass(frozen=True)
class EpisodicMemory:
    entries: Mapping[str, tuple[MemoryEntry, ...]] = field(default_factory=dict)

    @property
    def relations(self) -> list[str]:
        return sorted(self.entries)

    def all_entries(self) -> list[MemoryEntry]:
        return [e for rel in self.relations for e in self.entries[rel]]

    def instance_ids(self) -> list[str]:
        return [e.instance.id for e in self.all_entries()]

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def to_dict(self) -> dict:
        return {rel: [e.to_dict() for e in self.entries[rel]] for rel in self.relations}

    @classmethod
    def from_dict(cls, d: Mapping) -> "EpisodicMemory":
        return cls({rel: tuple(MemoryEntry.from_dict(e) for e in rows) for rel, rows in d.items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EpisodicMemory":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def update_memory_after_task(
    memory: EpisodicMemory,
    new_task_train_set: Sequence[RelationInstance],
    handle: Seq2SeqBackbone,
    k: int,
    rationales: Mapping[str, RationaleRecord],
    *,
    relations: Iterable[str] | None = None,
    seed: int = 0,
) -> EpisodicMemory:
    """Add exemplars for every relation of the new task.

    Features come from the current encoder over each instance's question
    text. ``relations`` names the task's relations explicitly; any of them
    without training instances is an error.
    """
    groups = by_relation(new_task_train_set)
    wanted = sorted(groups) if relations is None else sorted(relations)
    entries = dict(memory.entries)
    for rel in wanted:
        items = groups.get(rel, [])
        if not items:
            raise ValueError(f"relation {rel!r} has no training instances")
        feats = handle.encode_features([question_text(i) for i in items])
        picked = [items[i] for i in select_exemplars(feats, k, seed)]
        entries[rel] = tuple(MemoryEntry(i, rationales[i.id], rationales[i.id]) for i in picked)
    return EpisodicMemory(entries)


def replace_rationales(memory: EpisodicMemory, new_records: Iterable[RationaleRecord]) -> EpisodicMemory:
    """Swap in new rationales for the entries they reference."""
    by_id = {r.instance_id: r for r in new_records}
    known = set(memory.instance_ids())
    missing = sorted(set(by_id) - known)
    if missing:
        raise KeyError(f"records reference instances not in memory: {missing[:5]}")
    if not by_id:
        return memory
    return EpisodicMemory({
        rel: tuple(replace(e, rationale=by_id[e.instance.id]) if e.instance.id in by_id else e
                   for e in rows)
        for rel, rows in memory.entries.items()
    })


def reset_to_plain(memory: EpisodicMemory) -> EpisodicMemory:
    return EpisodicMemory({rel: tuple(replace(e, rationale=e.plain) for e in rows)
                           for rel, rows in memory.entries.items()})
