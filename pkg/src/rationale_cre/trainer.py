"""Multi-task rationale tuning.

Every instance is rendered into up to three seq2seq examples:

=======  ==============================  ===========================
task     input                           target
=======  ==============================  ===========================
task_c   question                        relation
task_r   question                        rationale + sentinel + relation
task_d   question + rationale            relation
=======  ==============================  ===========================

and the per-task mean losses are mixed as
``alpha*L_c + (1-alpha)*(beta*L_r + (1-beta)*L_d)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import torch

from .backbone import Seq2SeqBackbone
from .rationale import SENTINEL
from .types import ExperimentConfig, LabelSpace, RationaleRecord, RelationInstance, question_text

log = logging.getLogger(__name__)

TASK_C, TASK_R, TASK_D = "task_c", "task_r", "task_d"
ALL_TASKS = (TASK_C, TASK_R, TASK_D)


@dataclass(frozen=True)
class FormattedExample:
    task: str
    input_text: str
    target_text: str
    source_instance: str


@dataclass(frozen=True)
class TrainingUnit:
    """One instance plus the rationale each rationale task should see."""

    instance: RelationInstance
    verbalization: str
    rationale_r: RationaleRecord | None = None
    rationale_d: RationaleRecord | None = None


def format_task(task: str, inst: RelationInstance, verbalization: str,
                rationale: RationaleRecord | None = None) -> FormattedExample:
    q = question_text(inst)
    if task == TASK_C:
        return FormattedExample(task, q, verbalization, inst.id)
    if rationale is None:
        raise ValueError(f"{inst.id}: {task} needs a rationale")
    if rationale.instance_id != inst.id:
        raise ValueError(f"{inst.id}: rationale belongs to {rationale.instance_id}")
    if task == TASK_R:
        return FormattedExample(task, q, f"{rationale.rationale_text} {SENTINEL} {verbalization}.", inst.id)
    if task == TASK_D:
        return FormattedExample(task, f"{q} Rationale: {rationale.rationale_text}", verbalization, inst.id)
    raise ValueError(f"unknown task {task!r}")


def format_instance(inst: RelationInstance, rationale: RationaleRecord | None,
                    tasks: Iterable[str], verbalization: str) -> list[FormattedExample]:
    wanted = set(tasks)
    return [format_task(t, inst, verbalization, rationale) for t in ALL_TASKS if t in wanted]


def format_unit(unit: TrainingUnit, tasks: Iterable[str]) -> list[FormattedExample]:
    wanted = set(tasks)
    rationale_for = {TASK_C: None, TASK_R: unit.rationale_r, TASK_D: unit.rationale_d}
    return [format_task(t, unit.instance, unit.verbalization, rationale_for[t])
            for t in ALL_TASKS if t in wanted]


def active_tasks(cfg: ExperimentConfig) -> tuple[str, ...]:
    return tuple(t for t in ALL_TASKS if not (t == TASK_D and cfg.has("no_task_d")))


def combine_losses(l_c, l_r, l_d, alpha: float, beta: float):
    """``alpha*l_c + (1-alpha)*(beta*l_r + (1-beta)*l_d)``; works on floats and tensors."""
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise ValueError(f"weights must lie in [0,1], got alpha={alpha}, beta={beta}")
    for name, v in (("l_c", l_c), ("l_r", l_r), ("l_d", l_d)):
        x = float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        if x < 0:
            raise ValueError(f"{name} is negative: {x}")
    return alpha * l_c + (1 - alpha) * (beta * l_r + (1 - beta) * l_d)


def train_multitask(
    handle: Seq2SeqBackbone,
    units: Sequence[TrainingUnit],
    cfg: ExperimentConfig,
    *,
    epochs: int,
    seed: int,
    stage: int = 1,
) -> list[dict]:
    """Run ``epochs`` passes over ``units`` and return the loss log.

    Each mini-batch of instances yields one batch per active task; ablated
    tasks contribute a zero loss term with their weight left in place.
    """
    if not units:
        raise ValueError("nothing to train on")
    tasks = active_tasks(cfg)
    opt = torch.optim.Adam(handle.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(seed)
    handle.train(True)
    history = []
    for epoch in range(epochs):
        sums = dict.fromkeys((*tasks, "total"), 0.0)
        n_batches = 0
        order = rng.permutation(len(units))
        for start in range(0, len(units), cfg.batch_size):
            batch = [units[i] for i in order[start : start + cfg.batch_size]]
            losses = {}
            for task in tasks:
                examples = [format_unit(u, (task,))[0] for u in batch]
                per_seq = handle.training_step([e.input_text for e in examples],
                                               [e.target_text for e in examples])
                losses[task] = per_seq.mean()
            zero = torch.zeros(())
            total = combine_losses(losses.get(TASK_C, zero), losses.get(TASK_R, zero),
                                   losses.get(TASK_D, zero), cfg.alpha, cfg.beta)
            opt.zero_grad()
            total.backward()
            opt.step()
            for task, v in losses.items():
                sums[task] += v.item()
            sums["total"] += total.item()
            n_batches += 1
        for task, s in sums.items():
            history.append({"stage": stage, "epoch": epoch, "task": task, "loss": s / n_batches})
        log.debug("stage %d epoch %d loss %.4f", stage, epoch, sums["total"] / n_batches)
    handle.train(False)
    return history


def train_stage1(
    handle: Seq2SeqBackbone,
    train_set: Sequence[RelationInstance],
    rationales: Mapping[str, RationaleRecord],
    labels: LabelSpace,
    cfg: ExperimentConfig,
    seed: int = 0,
) -> tuple[Seq2SeqBackbone, list[dict]]:
    """Train on the current task's data with plain rationales."""
    if not train_set:
        raise ValueError("empty training set")
    units = []
    for inst in train_set:
        r = rationales.get(inst.id)
        if r is None:
            raise ValueError(f"{inst.id}: no plain rationale")
        units.append(TrainingUnit(inst, labels.verbalize(inst.relation), r, r))
    history = train_multitask(handle, units, cfg, epochs=cfg.epochs_stage1, seed=seed, stage=1)
    return handle, history
