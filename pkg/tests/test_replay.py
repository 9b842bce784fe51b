import json

import pytest

from rationale_cre.backbone import TinySeq2Seq
from rationale_cre.data import make_task_sequence
from rationale_cre.memory import EpisodicMemory, MemoryEntry
from rationale_cre.rationale import AdversarialProvider, OracleProvider, RationaleCache
from rationale_cre.replay import (
    ContinualRunError,
    ContinualTrace,
    regenerate_contrastive,
    run_continual,
    stage2_examples,
    stage2_units,
    train_stage2,
    uses_contrastive,
)
from rationale_cre.types import CONTRASTIVE, PLAIN, ExperimentConfig, LabelSpace, RationaleRecord, normalize_answer

from conftest import make_instance

LABELS = LabelSpace({"P155": "follows", "P156": "followed by", "P26": "spouse"})
FAST = dict(learning_rate=5e-3, epochs_stage1=1, epochs_stage2=1, batch_size=8, memory_size=2)


def _memory(per_relation=10):
    entries = {}
    for rel in ("P155", "P156", "P26"):
        rows = []
        for i in range(per_relation):
            inst = make_instance(f"{rel}:{i}", head=f"H{i}", tail=f"T{i}", relation=rel)
            r = RationaleRecord(inst.id, PLAIN, "plain why", LABELS.verbalize(rel), "p", "oracle")
            rows.append(MemoryEntry(inst, r, r))
        entries[rel] = tuple(rows)
    return EpisodicMemory(entries)


def test_regenerate_counts():
    mem = _memory()
    analogous = {"P155": frozenset({"P156"}), "P156": frozenset({"P155"}), "P26": frozenset()}
    recs = regenerate_contrastive(mem, analogous, OracleProvider(), RationaleCache(), LABELS)
    assert len(recs) == 20 and all(r.kind == CONTRASTIVE for r in recs)
    by_id = {e.instance.id: e.instance.relation for e in mem.all_entries()}
    assert all(normalize_answer(r.answer_text) == LABELS.verbalize(by_id[r.instance_id]) for r in recs)
    assert not any(r.instance_id.startswith("P26") for r in recs)
    none = {r: frozenset() for r in LABELS.labels}
    assert regenerate_contrastive(mem, none, AdversarialProvider(), RationaleCache(), LABELS) == []


def test_flag_routing():
    mem = _memory(1)
    cr = {e.instance.id: RationaleRecord(e.instance.id, CONTRASTIVE, "contrast", e.rationale.answer_text, "c", "o")
          for e in mem.all_entries()}
    from rationale_cre.memory import replace_rationales

    mem = replace_rationales(mem, cr.values())
    pick = lambda flags: [(u.rationale_r.kind, u.rationale_d.kind)  # noqa: E731
                          for u in stage2_units(mem, LABELS, ExperimentConfig(ablation=flags))]
    assert set(pick(set())) == {(CONTRASTIVE, CONTRASTIVE)}
    assert set(pick({"no_taskr_cr"})) == {(PLAIN, CONTRASTIVE)}
    assert set(pick({"no_taskd_cr"})) == {(CONTRASTIVE, PLAIN)}
    assert set(pick({"no_contrastive_replay"})) == {(PLAIN, PLAIN)}
    assert not uses_contrastive(ExperimentConfig(ablation={"no_taskr_cr", "no_taskd_cr"}))
    both = stage2_examples(mem, LABELS, ExperimentConfig(ablation={"no_taskr_cr", "no_taskd_cr"}))
    assert all("contrast" not in e.input_text + e.target_text for e in both)


def test_stage2_rejects_empty_memory():
    with pytest.raises(ValueError, match="empty"):
        train_stage2(TinySeq2Seq(emb_dim=4, hidden=6), EpisodicMemory(), LABELS, ExperimentConfig())


class _Counting(OracleProvider):
    def __init__(self):
        super().__init__()
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        return super().complete(prompt)


def test_no_contrastive_replay_makes_no_stage2_calls(small_corpus):
    _, labels, splits = small_corpus
    seq = make_task_sequence(labels, 2, seed=0)
    provider = _Counting()
    cfg = ExperimentConfig(**FAST, tau=-1.0, ablation={"no_contrastive_replay"})
    run_continual(TinySeq2Seq(emb_dim=6, hidden=8, max_output_len=30), seq, splits, labels, cfg,
                  provider=provider, cache=RationaleCache())
    assert provider.prompts and not any("Similar relations" in p for p in provider.prompts)

    provider = _Counting()
    cfg = ExperimentConfig(**FAST, tau=-1.0)
    trace = run_continual(TinySeq2Seq(emb_dim=6, hidden=8, max_output_len=30), seq, splits, labels, cfg,
                          provider=provider, cache=RationaleCache())
    assert sum("Similar relations" in p for p in provider.prompts) == sum(r.contrastive_records for r in trace.records) > 0


def test_run_continual_trace_and_checkpoints(tmp_path, small_corpus):
    _, labels, splits = small_corpus
    seq = make_task_sequence(labels, 2, seed=1)
    trace = run_continual(TinySeq2Seq(emb_dim=6, hidden=8, max_output_len=30), seq, splits, labels,
                          ExperimentConfig(**FAST), provider=OracleProvider(), cache=RationaleCache(),
                          out_dir=tmp_path)
    assert len(trace) == 2 and trace.seed == 1
    assert set(trace.records[0].seen_labels) < set(trace.records[1].seen_labels)
    assert trace.records[0].n_test < trace.records[1].n_test
    for k in (1, 2):
        d = tmp_path / f"task_{k:02d}"
        assert {p.name for p in d.iterdir()} == {"model", "memory.json", "analogous.json", "eval.json"}
    mem = EpisodicMemory.load(tmp_path / "task_02" / "memory.json")
    assert mem.relations == sorted(labels.labels) and all(len(v) == 2 for v in mem.entries.values())
    assert json.loads((tmp_path / "task_01" / "eval.json").read_text())["accuracy"] == trace.accuracies[0]
    assert ContinualTrace.from_dict(json.loads(json.dumps(trace.to_dict()))).records == trace.records


def test_single_task_sequence(small_corpus):
    _, labels, splits = small_corpus
    seq = make_task_sequence(labels, 1, seed=0)
    trace = run_continual(TinySeq2Seq(emb_dim=6, hidden=8, max_output_len=30), seq, splits, labels,
                          ExperimentConfig(**FAST), provider=OracleProvider(), cache=RationaleCache())
    assert len(trace) == 1 and trace.records[0].n_test == len(splits.test)


def test_failure_reports_task_index(small_corpus):
    _, labels, splits = small_corpus
    seq = make_task_sequence(labels, 2, seed=0)
    with pytest.raises(ContinualRunError, match="task 1") as err:
        run_continual(TinySeq2Seq(emb_dim=6, hidden=8), seq, splits, labels, ExperimentConfig(**FAST),
                      provider=AdversarialProvider(), cache=RationaleCache())
    assert err.value.task_index == 0
