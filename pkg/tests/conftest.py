from __future__ import annotations

import pytest

from rationale_cre.data import FEWREL, load_corpus, load_names, split_train_val_test
from rationale_cre.synthetic import write_corpus
from rationale_cre.types import Entity, LabelSpace, RelationInstance


def make_instance(iid="t:0", head="Alice", tail="Bob", relation="P26", middle="married"):
    text = f"{head} {middle} {tail} ."
    h = Entity(head, 0, len(head))
    start = len(head) + len(middle) + 2
    t = Entity(tail, start, start + len(tail))
    return RelationInstance(iid, text, h, t, relation)


@pytest.fixture
def instance():
    return make_instance()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """4 relations x 10 instances, loaded and split."""
    d = tmp_path_factory.mktemp("corpus")
    cpath, npath = write_corpus(d, 4, 10, seed=0)
    instances, labels = load_corpus(cpath, FEWREL, load_names(npath))
    return instances, labels, split_train_val_test(instances, 0)


@pytest.fixture
def labels():
    return LabelSpace({"P26": "spouse", "P19": "place of birth", "P57": "director"})


# acceptance criteria report one line each in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
