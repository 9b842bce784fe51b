"""Contrastive rationale replay and the task-by-task training loop."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from .backbone import Seq2SeqBackbone
from .data import Splits, by_relation
from .evaluation import accuracy, classify
from .memory import EpisodicMemory, replace_rationales, reset_to_plain, update_memory_after_task
from .rationale import Provider, RationaleCache, generate_rationales
from .similarity import analogous_sets, relation_embeddings, write_analogous_report
from .trainer import FormattedExample, TrainingUnit, active_tasks, format_unit, train_multitask, train_stage1
from .types import CONTRASTIVE, PLAIN, ExperimentConfig, LabelSpace, RationaleRecord, TaskSequence

log = logging.getLogger(__name__)


class ContinualRunError(RuntimeError):
    def __init__(self, task_index: int, cause: Exception):
        super().__init__(f"task {task_index + 1}: {type(cause).__name__}: {cause}")
        self.task_index = task_index


def uses_contrastive(cfg: ExperimentConfig) -> bool:
    """Whether any Stage-2 task would see a contrastive rationale."""
    if cfg.has("no_contrastive_replay"):
        return False
    return not (cfg.has("no_taskr_cr") and cfg.has("no_taskd_cr"))


def regenerate_contrastive(
    memory: EpisodicMemory,
    analogous: Mapping[str, frozenset[str]],
    provider: Provider,
    cache: RationaleCache,
    labels: LabelSpace,
    *,
    max_attempts: int = 5,
    max_in_flight: int = 1,
) -> list[RationaleRecord]:
    """One contrastive rationale per memory entry whose relation has analogous peers."""
    targets = [e.instance for rel in memory.relations if analogous.get(rel)
               for e in memory.entries[rel]]
    if not targets:
        return []
    return generate_rationales(targets, CONTRASTIVE, provider, cache, labels, analogous=analogous,
                               max_attempts=max_attempts, max_in_flight=max_in_flight)


def stage2_units(memory: EpisodicMemory, labels: LabelSpace, cfg: ExperimentConfig) -> list[TrainingUnit]:
    """Pick, per entry, which rationale Task_r and Task_d see under the ablation flags."""
    plain_r = cfg.has("no_contrastive_replay") or cfg.has("no_taskr_cr")
    plain_d = cfg.has("no_contrastive_replay") or cfg.has("no_taskd_cr")
    return [
        TrainingUnit(
            e.instance,
            labels.verbalize(e.instance.relation),
            e.plain if plain_r else e.rationale,
            e.plain if plain_d else e.rationale,
        )
        for e in memory.all_entries()
    ]


def stage2_examples(memory: EpisodicMemory, labels: LabelSpace, cfg: ExperimentConfig) -> list[FormattedExample]:
    tasks = active_tasks(cfg)
    return [ex for u in stage2_units(memory, labels, cfg) for ex in format_unit(u, tasks)]


def train_stage2(handle: Seq2SeqBackbone, memory: EpisodicMemory, labels: LabelSpace,
                 cfg: ExperimentConfig, seed: int = 0) -> tuple[Seq2SeqBackbone, list[dict]]:
    if len(memory) == 0:
        raise ValueError("memory is empty")
    units = stage2_units(memory, labels, cfg)
    return handle, train_multitask(handle, units, cfg, epochs=cfg.epochs_stage2, seed=seed, stage=2)


@dataclass
class TaskRecord:
    task_index: int
    new_labels: list[str]
    seen_labels: list[str]
    accuracy: float
    n_test: int
    analogous: dict[str, list[str]] = field(default_factory=dict)
    contrastive_records: int = 0
    predictions: list[tuple[str, str, str]] = field(default_factory=list)  # (id, gold, pred)


@dataclass
class ContinualTrace:
    seed: int
    records: list[TaskRecord] = field(default_factory=list)
    loss_log: list[dict] = field(default_factory=list)

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.records]

    def __len__(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "records": [asdict(r) for r in self.records]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ContinualTrace":
        records = [TaskRecord(**{**r, "predictions": [tuple(p) for p in r["predictions"]]})
                   for r in d["records"]]
        return cls(d["seed"], records)


def run_continual(
    handle: Seq2SeqBackbone,
    task_sequence: TaskSequence,
    splits: Splits,
    labels: LabelSpace,
    cfg: ExperimentConfig,
    *,
    provider: Provider,
    cache: RationaleCache,
    seed: int | None = None,
    out_dir: str | Path | None = None,
    max_in_flight: int = 1,
) -> ContinualTrace:
    """Learn the tasks in order, evaluating on every seen relation after each.

    Per task: Stage 1 on the new data with plain rationales, memory update,
    analogous-relation detection, contrastive regeneration, Stage 2 on the
    whole memory, evaluation. With ``out_dir`` a checkpoint directory is
    written per task.
    """
    seed = task_sequence.seed if seed is None else seed
    trace = ContinualTrace(seed)
    memory = EpisodicMemory()
    train_by_rel = by_relation(splits.train)
    out = Path(out_dir) if out_dir is not None else None

    for k, task_labels in enumerate(task_sequence.tasks):
        try:
            record, memory = _run_task(
                k, task_labels, task_sequence, handle, train_by_rel, splits, labels, cfg,
                memory, provider, cache, seed, trace, out, max_in_flight,
            )
        except Exception as e:
            raise ContinualRunError(k, e) from e
        trace.records.append(record)
        log.info("seed %d task %d/%d accuracy %.4f", seed, k + 1, len(task_sequence), record.accuracy)
    return trace


def _run_task(k, task_labels, task_sequence, handle, train_by_rel, splits, labels, cfg,
              memory, provider, cache, seed, trace, out, max_in_flight):
    new_labels = sorted(task_labels)
    train_k = [i for rel in new_labels for i in train_by_rel.get(rel, [])]
    plain = generate_rationales(train_k, PLAIN, provider, cache, labels,
                                max_attempts=cfg.max_attempts, max_in_flight=max_in_flight)
    plain_by_id = {r.instance_id: r for r in plain}

    _, hist = train_stage1(handle, train_k, plain_by_id, labels, cfg, seed=seed * 1000 + k)
    trace.loss_log += [dict(h, task_index=k) for h in hist]

    memory = update_memory_after_task(memory, train_k, handle, cfg.memory_size, plain_by_id,
                                      relations=new_labels, seed=seed)

    # only memory is available for old relations, so every relation is embedded from its exemplars
    groups = {rel: [e.instance for e in memory.entries[rel]] for rel in memory.relations}
    table = relation_embeddings(groups, handle)
    analogous = analogous_sets(table, cfg.tau)

    n_contrastive = 0
    if not cfg.has("no_stage2"):
        memory = reset_to_plain(memory)
        if uses_contrastive(cfg):
            records = regenerate_contrastive(memory, analogous, provider, cache, labels,
                                             max_attempts=cfg.max_attempts, max_in_flight=max_in_flight)
            memory = replace_rationales(memory, records)
            n_contrastive = len(records)
        _, hist = train_stage2(handle, memory, labels, cfg, seed=seed * 1000 + k + 500)
        trace.loss_log += [dict(h, task_index=k) for h in hist]

    seen = task_sequence.seen_after(k)
    test_k = [i for i in splits.test if i.relation in seen]
    preds = classify(handle, test_k, labels.subset(seen))
    golds = [i.relation for i in test_k]
    record = TaskRecord(
        task_index=k,
        new_labels=new_labels,
        seen_labels=sorted(seen),
        accuracy=accuracy(preds, golds),
        n_test=len(test_k),
        analogous={r: sorted(s) for r, s in analogous.items()},
        contrastive_records=n_contrastive,
        predictions=[(i.id, g, p) for i, g, p in zip(test_k, golds, preds)],
    )
    if out is not None:
        task_dir = out / f"task_{k + 1:02d}"
        task_dir.mkdir(parents=True, exist_ok=True)
        handle.save(task_dir / "model")
        memory.save(task_dir / "memory.json")
        write_analogous_report(task_dir / "analogous.json", table, cfg.tau)
        (task_dir / "eval.json").write_text(json.dumps(asdict(record), indent=1))
    return record, memory
