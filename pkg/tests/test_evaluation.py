import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rationale_cre.backbone import TinySeq2Seq
from rationale_cre.evaluation import (
    NO_MATCH,
    accuracy,
    aggregate_runs,
    classify,
    per_relation_f1,
    per_relation_scores,
    write_curve,
    write_f1_report,
    write_results_table,
)
from rationale_cre.types import LabelSpace

from conftest import make_instance
from oracles import brute_force_f1


class _Echo:
    def __init__(self, outputs):
        self.outputs = outputs

    def generate(self, texts):
        return self.outputs[: len(texts)]


def test_classify_exact_match_or_reject():
    labels = LabelSpace({"P26": "spouse", "P57": "director"})
    insts = [make_instance(str(i)) for i in range(3)]
    assert classify(_Echo(["Spouse", "xyzzy", "director "]), insts, labels) == ["P26", NO_MATCH, "P57"]
    assert classify(_Echo([]), [], labels) == []


def test_classify_deterministic_on_frozen_handle():
    labels = LabelSpace({"P26": "spouse"})
    insts = [make_instance(str(i), head=f"H{i}") for i in range(4)]
    h = TinySeq2Seq(emb_dim=4, hidden=6, max_output_len=8)
    assert classify(h, insts, labels) == classify(h, insts, labels)


def test_accuracy_examples():
    assert accuracy(["a", "b"], ["a", "b"]) == 1.0
    assert accuracy(["a", "x", "b", "y"], ["a", "b", "b", "a"]) == 0.5
    with pytest.raises(ValueError):
        accuracy(["a"], [])


pairs = st.lists(st.tuples(st.sampled_from("abcd"), st.sampled_from("abc")), min_size=1, max_size=30)


@given(pairs, st.randoms())
def test_accuracy_permutation_invariant(ps, rnd):
    preds, golds = zip(*ps)
    acc = accuracy(preds, golds)
    assert 0.0 <= acc <= 1.0
    shuffled = list(ps)
    rnd.shuffle(shuffled)
    assert accuracy(*zip(*shuffled)) == pytest.approx(acc)


@given(pairs)
def test_accuracy_is_support_weighted_recall(ps):
    preds, golds = zip(*ps)
    scores = per_relation_scores(preds, golds)
    weighted = sum(s.recall * s.support for r, s in scores.items() if r in golds) / len(golds)
    assert weighted == pytest.approx(accuracy(preds, golds))


def test_hand_built_f1():
    golds = ["a", "a", "a", "b", "b", "c"]
    preds = ["a", "a", "b", "b", "c", "a"]
    # a: tp 2, fp 1, fn 1 -> P 2/3 R 2/3 F1 2/3
    # b: tp 1, fp 1, fn 1 -> 1/2
    # c: tp 0 -> 0
    f1 = per_relation_f1(preds, golds, {"a", "b", "c"})
    assert f1 == pytest.approx({"a": 2 / 3, "b": 0.5, "c": 0.0})
    for r in "abc":
        assert f1[r] == pytest.approx(brute_force_f1(preds, golds, r))
    assert per_relation_f1(preds, golds, {"a"}) == pytest.approx({"a": 2 / 3})


def test_f1_perfect_and_absent():
    assert per_relation_f1(["a", "b"], ["a", "b"], {"a", "b"}) == {"a": 1.0, "b": 1.0}
    assert "z" not in per_relation_f1(["a"], ["a"], {"a", "z"})


def test_aggregate_runs():
    mean, std = aggregate_runs([[0.5, 0.25], [0.5, 0.25]])
    np.testing.assert_array_equal(mean, [0.5, 0.25])
    np.testing.assert_array_equal(std, [0.0, 0.0])
    mean, _ = aggregate_runs([[1, 0], [0, 1]])
    np.testing.assert_array_equal(mean, [0.5, 0.5])
    with pytest.raises(ValueError):
        aggregate_runs([[1, 0], [1]])


def test_tables(tmp_path):
    write_results_table(tmp_path / "r.csv", {0: [1.0, 0.5], 3: [0.5, 0.25]})
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["task", "seed_0", "seed_3", "mean", "std"]
    assert rows[2] == ["2", "0.5000", "0.2500", "0.3750", "0.1250"]
    write_f1_report(tmp_path / "f.csv", per_relation_scores(["a", "b"], ["a", "a"]))
    assert open(tmp_path / "f.csv").read().splitlines()[1] == "a,1.0000,0.5000,0.6667,2"
    write_curve(tmp_path / "c.csv", [("memory_5", 1, 0.9, 0.01)])
    assert open(tmp_path / "c.csv").read().splitlines() == ["series,task,mean,std", "memory_5,1,0.9000,0.0100"]
