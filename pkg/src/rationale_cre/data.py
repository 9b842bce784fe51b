"""Corpus loading, per-relation splitting and task sequencing.

Two input layouts are understood:

* FewRel: a JSON object mapping relation id to a list of records. A record
  has ``tokens`` plus either the original ``h``/``t`` triples
  (``[surface, entity_id, [[token positions]]]``) or ``head``/``tail``
  objects ``{"text": ..., "span": [start, end)}`` over token positions.
* TACRED: a JSON list (or JSON-lines file) of records with ``token`` (or
  ``tokens``), ``subj_start``/``subj_end``/``obj_start``/``obj_end``
  (inclusive token positions) and ``relation``.

Tokens are joined with single spaces to form the instance text, and token
spans are turned into character spans over that text.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .types import Entity, LabelSpace, RelationInstance, TaskSequence

log = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SplitCaps:
    train: int
    test: int


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    format: str
    relation_count: int
    per_relation_caps: SplitCaps | None = None
    excluded_labels: frozenset[str] = field(default_factory=frozenset)


FEWREL = DatasetSpec("fewrel", "fewrel", 80)
TACRED = DatasetSpec(
    "tacred",
    "tacred",
    41,
    per_relation_caps=SplitCaps(train=320, test=40),
    excluded_labels=frozenset({"no_relation"}),
)
DATASETS = {"fewrel": FEWREL, "tacred": TACRED}


@dataclass(frozen=True)
class Splits:
    train: list[RelationInstance]
    val: list[RelationInstance]
    test: list[RelationInstance]


def _char_spans(tokens: Sequence[str]) -> tuple[str, list[int]]:
    offsets, pos = [], 0
    for tok in tokens:
        offsets.append(pos)
        pos += len(tok) + 1
    return " ".join(tokens), offsets


def _entity(tokens: Sequence[str], offsets: list[int], start: int, end: int) -> Entity:
    """Entity covering token positions ``[start, end)``."""
    if not 0 <= start < end <= len(tokens):
        raise ValueError(f"token span ({start}, {end}) outside {len(tokens)} tokens")
    a = offsets[start]
    b = offsets[end - 1] + len(tokens[end - 1])
    return Entity(" ".join(tokens[start:end]), a, b)


def _fewrel_span(ent) -> tuple[int, int]:
    if isinstance(ent, Mapping):
        start, end = ent["span"]
        return int(start), int(end)
    positions = ent[2][0]
    return min(positions), max(positions) + 1


def _iter_fewrel(raw) -> Iterator[tuple[str, str, Mapping]]:
    for rel, records in raw.items():
        for j, rec in enumerate(records):
            yield f"relation {rel!r} record {j}", rel, rec


def _fewrel_instance(rec: Mapping, rel: str, iid: str) -> RelationInstance:
    tokens = rec["tokens"]
    text, offsets = _char_spans(tokens)
    head = _entity(tokens, offsets, *_fewrel_span(rec["head"] if "head" in rec else rec["h"]))
    tail = _entity(tokens, offsets, *_fewrel_span(rec["tail"] if "tail" in rec else rec["t"]))
    return RelationInstance(iid, text, head, tail, rel)


def _tacred_instance(rec: Mapping, iid: str) -> RelationInstance:
    tokens = rec["token"] if "token" in rec else rec["tokens"]
    text, offsets = _char_spans(tokens)
    head = _entity(tokens, offsets, int(rec["subj_start"]), int(rec["subj_end"]) + 1)
    tail = _entity(tokens, offsets, int(rec["obj_start"]), int(rec["obj_end"]) + 1)
    return RelationInstance(iid, text, head, tail, rec["relation"])


def _read_tacred(path: Path, content: str) -> list[tuple[str, str | None, Mapping]]:
    if path.suffix == ".jsonl":
        rows = []
        for lineno, line in enumerate(content.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rows.append((f"line {lineno}", json.loads(line)))
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{path}: line {lineno}: {e}") from e
    else:
        try:
            raw = json.loads(content)
        except json.JSONDecodeError as e:
            raise CorpusFormatError(f"{path}: {e}") from e
        if not isinstance(raw, list):
            raise CorpusFormatError(f"{path}: TACRED file must hold a JSON list")
        rows = [(f"record {j}", rec) for j, rec in enumerate(raw)]
    return [(loc, rec.get("relation") if isinstance(rec, Mapping) else None, rec) for loc, rec in rows]


def load_names(path: str | Path) -> dict[str, str]:
    """Read a FewRel-style ``pid2name`` file (label -> name or [name, description])."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {k: (v[0] if isinstance(v, list) else v) for k, v in raw.items()}


def load_corpus(
    path: str | Path,
    spec: DatasetSpec,
    names: Mapping[str, str] | None = None,
) -> tuple[list[RelationInstance], LabelSpace]:
    """Load one corpus file, dropping ``spec.excluded_labels``.

    Instance ids are ``<dataset name>:<position in file>`` so they stay
    stable across runs and can key the rationale cache.
    """
    path = Path(path)
    content = path.read_text(encoding="utf-8")
    if not content.strip():
        return [], LabelSpace({})

    if spec.format == "fewrel":
        try:
            raw = json.loads(content)
        except json.JSONDecodeError as e:
            raise CorpusFormatError(f"{path}: {e}") from e
        if not isinstance(raw, Mapping):
            raise CorpusFormatError(f"{path}: FewRel file must hold a JSON object of relation -> records")
        records = list(_iter_fewrel(raw))
    elif spec.format == "tacred":
        records = _read_tacred(path, content)
    else:
        raise CorpusFormatError(f"unknown corpus format {spec.format!r}")

    instances = []
    for index, (loc, rel, rec) in enumerate(records):
        if rel in spec.excluded_labels:
            continue
        iid = f"{spec.name}:{index}"
        try:
            if spec.format == "fewrel":
                inst = _fewrel_instance(rec, rel, iid)
            else:
                inst = _tacred_instance(rec, iid)
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise CorpusFormatError(f"{path}: {loc}: malformed record ({e})") from e
        instances.append(inst)

    labels = {inst.relation for inst in instances}
    if spec.relation_count and len(labels) != spec.relation_count:
        log.info("%s: %d relations loaded (reference protocol uses %d)",
                 spec.name, len(labels), spec.relation_count)
    return instances, LabelSpace.from_labels(labels, names)


def by_relation(instances: Iterable[RelationInstance]) -> dict[str, list[RelationInstance]]:
    groups: dict[str, list[RelationInstance]] = defaultdict(list)
    for inst in instances:
        groups[inst.relation].append(inst)
    return dict(groups)


def split_train_val_test(
    instances: Sequence[RelationInstance],
    seed: int,
    caps: SplitCaps | None = None,
) -> Splits:
    """Per-relation 3:1:1 split; rounding residue goes to train.

    With ``caps`` the train split is truncated to ``caps.train`` and the
    validation and test splits to ``caps.test`` instances per relation.
    """
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    groups = by_relation(instances)
    for rel in sorted(groups):
        items = groups[rel]
        n = len(items)
        if n < 5:
            raise ValueError(f"relation {rel!r} has {n} instances; at least 5 are needed for a 3:1:1 split")
        order = rng.permutation(n)
        fifth = n // 5
        n_train = n - 2 * fifth
        shuffled = [items[i] for i in order]
        tr, va, te = shuffled[:n_train], shuffled[n_train:n_train + fifth], shuffled[n_train + fifth:]
        if caps is not None:
            tr, va, te = tr[:caps.train], va[:caps.test], te[:caps.test]
        train += tr
        val += va
        test += te
    return Splits(train, val, test)


def make_task_sequence(labels: LabelSpace | Iterable[str], n: int, seed: int) -> TaskSequence:
    """Shuffle the labels with ``seed`` and cut them into ``n`` near-equal tasks.

    When the label count is not divisible by ``n`` the leading tasks in
    shuffle order get one extra label.
    """
    pool = sorted(labels.labels if isinstance(labels, LabelSpace) else set(labels))
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > len(pool):
        raise ValueError(f"cannot split {len(pool)} labels into {n} tasks")
    order = np.random.default_rng(seed).permutation(len(pool))
    shuffled = [pool[i] for i in order]
    chunks = np.array_split(np.arange(len(pool)), n)
    return TaskSequence(seed, tuple(frozenset(shuffled[i] for i in c) for c in chunks))


def write_jsonl(path: Path, rows: Iterable[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def save_splits(out_dir: str | Path, splits: Splits, labels: LabelSpace) -> None:
    """Write ``train/val/test.jsonl`` and ``labels.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "val", "test"):
        write_jsonl(out / f"{name}.jsonl", (i.to_dict() for i in getattr(splits, name)))
    (out / "labels.json").write_text(
        json.dumps(dict(sorted(labels.verbalizations.items())), indent=1, ensure_ascii=False),
        encoding="utf-8",
    )


def load_splits(out_dir: str | Path) -> tuple[Splits, LabelSpace]:
    out = Path(out_dir)
    parts = [
        [RelationInstance.from_dict(d) for d in read_jsonl(out / f"{name}.jsonl")]
        for name in ("train", "val", "test")
    ]
    labels = LabelSpace(json.loads((out / "labels.json").read_text(encoding="utf-8")))
    return Splits(*parts), labels
