import pytest
from hypothesis import given
from hypothesis import strategies as st

from rationale_cre.types import (
    FEWREL_CONFIG,
    TACRED_CONFIG,
    ConfigError,
    Entity,
    ExperimentConfig,
    LabelSpace,
    RationaleRecord,
    RelationInstance,
    TaskSequence,
    normalize_answer,
    question_text,
    validate_config,
    verbalize,
)

from conftest import make_instance


@given(st.text())
def test_normalize_is_idempotent(s):
    once = normalize_answer(s)
    assert normalize_answer(once) == once


def test_normalize_examples():
    assert normalize_answer("  Record_Label ") == "record label"
    assert normalize_answer("org:founded_by") == "org founded by"
    assert verbalize("per:city_of_birth") == "per city of birth"


def test_reference_configs_validate():
    assert validate_config(FEWREL_CONFIG) is FEWREL_CONFIG
    assert validate_config(TACRED_CONFIG) is TACRED_CONFIG
    assert (FEWREL_CONFIG.alpha, FEWREL_CONFIG.beta, FEWREL_CONFIG.tau, FEWREL_CONFIG.memory_size) == (0.6, 0.5, 0.97, 10)
    assert (TACRED_CONFIG.alpha, TACRED_CONFIG.batch_size) == (0.9, 16)


def test_alpha_bound_reported():
    with pytest.raises(ConfigError, match=r"alpha out of \[0,1\]"):
        validate_config(ExperimentConfig(alpha=1.5))


def test_every_violation_listed():
    cfg = ExperimentConfig(alpha=-0.1, beta=2, tau=1.5, memory_size=0, learning_rate=0, ablation={"bogus"})
    with pytest.raises(ConfigError) as err:
        validate_config(cfg)
    text = " ".join(err.value.problems)
    for name in ("alpha", "beta", "tau", "memory_size", "learning_rate", "ablation"):
        assert name in text


def test_instance_span_validation():
    with pytest.raises(ValueError, match="outside text"):
        RelationInstance("x", "short", Entity("s", 0, 1), Entity("far", 10, 13), "r")
    with pytest.raises(ValueError, match="same span"):
        RelationInstance("x", "ab cd", Entity("ab", 0, 2), Entity("ab", 0, 2), "r")


def test_instance_roundtrip():
    inst = make_instance()
    assert RelationInstance.from_dict(inst.to_dict()) == inst


def test_question_text_pattern():
    inst = make_instance(head="ABC", tail="Sydney", middle="is based in")
    q = question_text(inst)
    assert q.startswith('Given the subject entity "ABC" and object entity "Sydney", ')
    assert q.endswith("sentence: ABC is based in Sydney?")


def test_label_space_rejects_clashing_verbalizations():
    with pytest.raises(ValueError, match="share verbalization"):
        LabelSpace({"a": "Place_of birth", "b": "place of  birth"})


def test_label_space_lookup(labels):
    assert labels.lookup("Place Of Birth") == "P19"
    assert labels.lookup("xyzzy") is None
    assert labels.subset(["P26"]).labels == {"P26"}


def test_rationale_record_checks():
    with pytest.raises(ValueError):
        RationaleRecord("x", "fancy", "r", "a", "h", "p")
    with pytest.raises(ValueError):
        RationaleRecord("x", "plain", "r", "a", "h", "p", attempts=0)


def test_task_sequence_rejects_overlap():
    with pytest.raises(ValueError):
        TaskSequence(0, (frozenset({"a", "b"}), frozenset({"b"})))
    seq = TaskSequence(0, (frozenset({"a"}), frozenset({"b", "c"})))
    assert seq.seen_after(0) == {"a"} and seq.seen_after(1) == {"a", "b", "c"}
