"""Classification by generation and the metrics reported over task sequences."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backbone import Seq2SeqBackbone
from .types import LabelSpace, RelationInstance, question_text

NO_MATCH = "<no-match>"


def classify(handle: Seq2SeqBackbone, instances: Sequence[RelationInstance], seen_labels: LabelSpace) -> list[str]:
    """Generate from the question text and exact-match against seen verbalizations.

    Anything that does not match maps to :data:`NO_MATCH`.
    """
    if not instances:
        return []
    outputs = handle.generate([question_text(i) for i in instances])
    return [seen_labels.lookup(o) or NO_MATCH for o in outputs]


def accuracy(preds: Sequence[str], golds: Sequence[str]) -> float:
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold labels")
    if not golds:
        return 0.0
    return sum(p == g for p, g in zip(preds, golds)) / len(golds)


@dataclass(frozen=True)
class RelationScore:
    precision: float
    recall: float
    f1: float
    support: int


def per_relation_scores(preds: Sequence[str], golds: Sequence[str],
                        subset: Iterable[str] | None = None) -> dict[str, RelationScore]:
    """One-vs-rest precision/recall/F1 per relation.

    Relations that are neither predicted nor present in ``golds`` are left
    out, since their scores are undefined.
    """
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold labels")
    p = np.asarray(preds, dtype=object)
    g = np.asarray(golds, dtype=object)
    rels = sorted(set(golds) | (set(preds) - {NO_MATCH})) if subset is None else sorted(subset)
    out = {}
    for r in rels:
        tp = int(np.sum((p == r) & (g == r)))
        fp = int(np.sum((p == r) & (g != r)))
        fn = int(np.sum((p != r) & (g == r)))
        if tp + fp + fn == 0:
            continue
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        out[r] = RelationScore(prec, rec, f1, tp + fn)
    return out


def per_relation_f1(preds: Sequence[str], golds: Sequence[str], subset: Iterable[str]) -> dict[str, float]:
    return {r: s.f1 for r, s in per_relation_scores(preds, golds, subset).items()}


def aggregate_runs(traces: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    """Element-wise mean and (population) standard deviation across runs."""
    if not traces:
        raise ValueError("no traces to aggregate")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"traces have different lengths: {sorted(lengths)}")
    arr = np.asarray(traces, dtype=np.float64)
    return arr.mean(axis=0), arr.std(axis=0)


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def write_results_table(path: str | Path, traces: Mapping[int, Sequence[float]]) -> None:
    """CSV with one row per task: accuracy per seed, then mean and std."""
    seeds = sorted(traces)
    mean, std = aggregate_runs([traces[s] for s in seeds])
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["task", *[f"seed_{s}" for s in seeds], "mean", "std"])
        for k in range(len(mean)):
            w.writerow([k + 1, *[_fmt(traces[s][k]) for s in seeds], _fmt(mean[k]), _fmt(std[k])])


def write_f1_report(path: str | Path, scores: Mapping[str, RelationScore]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["relation", "precision", "recall", "f1", "support"])
        for r in sorted(scores):
            s = scores[r]
            w.writerow([r, _fmt(s.precision), _fmt(s.recall), _fmt(s.f1), s.support])


def write_curve(path: str | Path, rows: Iterable[tuple]) -> None:
    """Plot data: ``(series, task, mean, std)`` rows, e.g. one series per memory size."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["series", "task", "mean", "std"])
        for series, task, m, s in rows:
            w.writerow([series, task, _fmt(m), _fmt(s)])
