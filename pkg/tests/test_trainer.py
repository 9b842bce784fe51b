import math

import pytest
import torch
from hypothesis import assume, given
from hypothesis import strategies as st

from rationale_cre.backbone import TinySeq2Seq
from rationale_cre.evaluation import accuracy, classify
from rationale_cre.rationale import SENTINEL, OracleProvider, RationaleCache, generate_rationales
from rationale_cre.trainer import (
    TASK_C,
    TASK_D,
    TASK_R,
    TrainingUnit,
    active_tasks,
    combine_losses,
    format_instance,
    format_unit,
    train_multitask,
    train_stage1,
)
from rationale_cre.types import PLAIN, ExperimentConfig, LabelSpace, RationaleRecord, question_text

from conftest import make_instance

loss = st.floats(0, 100, allow_nan=False)
weight = st.floats(0, 1)


def _record(inst, text="They wed."):
    return RationaleRecord(inst.id, PLAIN, text, "spouse", "h", "test")


def test_format_single_task(instance):
    [ex] = format_instance(instance, None, {TASK_C}, "spouse")
    assert (ex.task, ex.input_text, ex.target_text, ex.source_instance) == (TASK_C, question_text(instance), "spouse", instance.id)


def test_format_three_tasks(instance):
    r = _record(instance)
    c, rr, d = format_instance(instance, r, {TASK_C, TASK_R, TASK_D}, "spouse")
    assert rr.input_text == question_text(instance)
    assert rr.target_text == f"They wed. {SENTINEL} spouse."
    assert "They wed." in d.input_text and d.input_text.startswith(question_text(instance))
    assert d.target_text == "spouse" and "They wed." not in d.target_text
    assert {e.source_instance for e in (c, rr, d)} == {instance.id}


def test_format_needs_rationale(instance):
    with pytest.raises(ValueError, match="needs a rationale"):
        format_instance(instance, None, {TASK_R}, "spouse")
    other = RationaleRecord("someone-else", PLAIN, "x", "spouse", "h", "p")
    with pytest.raises(ValueError):
        format_instance(instance, other, {TASK_D}, "spouse")


def test_no_task_d_is_never_emitted(instance):
    tasks = active_tasks(ExperimentConfig(ablation={"no_task_d"}))
    assert tasks == (TASK_C, TASK_R)
    unit = TrainingUnit(instance, "spouse", _record(instance), _record(instance))
    assert [e.task for e in format_unit(unit, tasks)] == [TASK_C, TASK_R]


def test_combine_losses_examples():
    assert combine_losses(2.0, 1.0, 0.5, 0.9, 0.5) == pytest.approx(1.875, abs=1e-15)
    assert combine_losses(3.0, 7.0, 11.0, 1.0, 0.3) == 3.0
    assert combine_losses(0.4, 0.4, 0.4, 0.25, 0.8) == pytest.approx(0.4)
    with pytest.raises(ValueError, match="negative"):
        combine_losses(-1.0, 0, 0, 0.5, 0.5)
    with pytest.raises(ValueError):
        combine_losses(1.0, 1.0, 1.0, 1.2, 0.5)


@given(loss, loss, loss, weight, weight)
def test_combine_losses_is_convex(a, b, c, alpha, beta):
    v = combine_losses(a, b, c, alpha, beta)
    assert min(a, b, c) - 1e-9 <= v <= max(a, b, c) + 1e-9


@given(loss, loss, loss, loss, weight, weight)
def test_combine_losses_is_linear(a, a2, b, c, alpha, beta):
    lhs = combine_losses(a + a2, b, c, alpha, beta)
    rhs = combine_losses(a, b, c, alpha, beta) + alpha * a2
    assert math.isclose(lhs, rhs, rel_tol=1e-9, abs_tol=1e-9)


@given(loss, weight, weight)
def test_equal_losses_give_that_loss(v, alpha, beta):
    assume(v > 0)
    assert math.isclose(combine_losses(v, v, v, alpha, beta), v, rel_tol=1e-12)


def test_combine_losses_on_tensors():
    out = combine_losses(torch.tensor(2.0, requires_grad=True), torch.tensor(1.0), torch.tensor(0.5), 0.9, 0.5)
    assert torch.is_tensor(out) and out.item() == pytest.approx(1.875)


def test_empty_train_set():
    cfg = ExperimentConfig()
    with pytest.raises(ValueError):
        train_stage1(TinySeq2Seq(emb_dim=4, hidden=6), [], {}, LabelSpace({}), cfg)
    with pytest.raises(ValueError):
        train_multitask(TinySeq2Seq(emb_dim=4, hidden=6), [], cfg, epochs=1, seed=0)


def test_loss_log_records_every_epoch(instance):
    unit = TrainingUnit(instance, "spouse", _record(instance), _record(instance))
    cfg = ExperimentConfig(learning_rate=1e-3, batch_size=4, ablation={"no_task_d"})
    hist = train_multitask(TinySeq2Seq(emb_dim=4, hidden=6), [unit], cfg, epochs=3, seed=0)
    assert {(h["epoch"], h["task"]) for h in hist} == {(e, t) for e in range(3) for t in (TASK_C, TASK_R, "total")}
    assert all(h["loss"] >= 0 for h in hist)


def test_two_relation_overfit():
    names = {"P26": "spouse", "P57": "director"}
    labels = LabelSpace(names)
    train = [make_instance(f"o:{r}:{i}", head=f"N{i}", tail=f"M{i}", relation=r,
                           middle="married" if r == "P26" else "was directed by")
             for r in names for i in range(8)]
    recs = generate_rationales(train, PLAIN, OracleProvider(), RationaleCache(), labels)
    cfg = ExperimentConfig(learning_rate=5e-3, batch_size=4, epochs_stage1=50)
    torch.manual_seed(0)
    handle = TinySeq2Seq(seed=0, max_output_len=24)
    train_stage1(handle, train, {r.instance_id: r for r in recs}, labels, cfg, seed=0)
    preds = classify(handle, train, labels)
    assert accuracy(preds, [i.relation for i in train]) == 1.0
