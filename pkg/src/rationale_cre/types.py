"""Domain types shared across the package.

Everything here is an immutable value. Construction validates the
invariants that do not need outside context; checks that need the
experiment's label space live in the functions that have it.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

PLAIN = "plain"
CONTRASTIVE = "contrastive"
RATIONALE_KINDS = (PLAIN, CONTRASTIVE)

ABLATION_FLAGS = frozenset(
    {
        "no_task_d",
        "no_contrastive_replay",
        "no_taskr_cr",
        "no_taskd_cr",
        "no_stage2",
    }
)

_WS = re.compile(r"\s+")


def normalize_answer(text: str) -> str:
    """Lowercase, map ``_`` and ``:`` to spaces, collapse whitespace."""
    text = text.lower().replace("_", " ").replace(":", " ")
    return _WS.sub(" ", text).strip()


def verbalize(label: str) -> str:
    """Default natural-language rendering of a relation label.

    >>> verbalize("org:founded_by")
    'org founded by'
    """
    return normalize_answer(label)


def question_text(inst: "RelationInstance") -> str:
    """Instruction-style rendering of an instance, used as model input."""
    sentence = inst.text.rstrip(" .?")
    return (
        f'Given the subject entity "{inst.head.text}" and object entity "{inst.tail.text}", '
        f"what is the relation type between them in sentence: {sentence}?"
    )


class ConfigError(ValueError):
    """Raised when an :class:`ExperimentConfig` violates a bound.

    ``problems`` lists one message per violated field.
    """

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class Entity:
    text: str
    start: int
    end: int  # exclusive

    def to_dict(self) -> dict:
        return {"text": self.text, "span": [self.start, self.end]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Entity":
        start, end = d["span"]
        return cls(d["text"], int(start), int(end))


@dataclass(frozen=True)
class RelationInstance:
    id: str
    text: str
    head: Entity
    tail: Entity
    relation: str

    def __post_init__(self):
        n = len(self.text)
        for name, ent in (("head", self.head), ("tail", self.tail)):
            if not 0 <= ent.start < ent.end <= n:
                raise ValueError(
                    f"{self.id}: {name} span ({ent.start}, {ent.end}) outside text of length {n}"
                )
        if (self.head.start, self.head.end) == (self.tail.start, self.tail.end):
            raise ValueError(f"{self.id}: head and tail share the same span")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "head": self.head.to_dict(),
            "tail": self.tail.to_dict(),
            "relation": self.relation,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RelationInstance":
        return cls(
            id=d["id"],
            text=d["text"],
            head=Entity.from_dict(d["head"]),
            tail=Entity.from_dict(d["tail"]),
            relation=d["relation"],
        )


@dataclass(frozen=True)
class RationaleRecord:
    instance_id: str
    kind: str
    rationale_text: str
    answer_text: str
    prompt_hash: str
    provider: str
    attempts: int = 1

    def __post_init__(self):
        if self.kind not in RATIONALE_KINDS:
            raise ValueError(f"unknown rationale kind {self.kind!r}")
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RationaleRecord":
        return cls(
            instance_id=d["instance_id"],
            kind=d["kind"],
            rationale_text=d["rationale_text"],
            answer_text=d["answer_text"],
            prompt_hash=d["prompt_hash"],
            provider=d["provider"],
            attempts=int(d.get("attempts", 1)),
        )


@dataclass(frozen=True)
class LabelSpace:
    """Relation labels plus their verbalizations.

    Verbalizations must be unique after :func:`normalize_answer` so that a
    generated string maps back to at most one label.
    """

    verbalizations: Mapping[str, str]

    def __post_init__(self):
        seen: dict[str, str] = {}
        for label, phrase in self.verbalizations.items():
            key = normalize_answer(phrase)
            if not key:
                raise ValueError(f"empty verbalization for {label!r}")
            if key in seen:
                raise ValueError(
                    f"labels {seen[key]!r} and {label!r} share verbalization {key!r}"
                )
            seen[key] = label
        object.__setattr__(self, "_by_phrase", seen)

    @classmethod
    def from_labels(
        cls, labels: Iterable[str], names: Mapping[str, str] | None = None
    ) -> "LabelSpace":
        names = names or {}
        return cls({lab: names.get(lab, verbalize(lab)) for lab in sorted(set(labels))})

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(self.verbalizations)

    def verbalize(self, label: str) -> str:
        return normalize_answer(self.verbalizations[label])

    def lookup(self, text: str) -> str | None:
        """Label whose verbalization equals ``text`` after normalization."""
        return self._by_phrase.get(normalize_answer(text))

    def subset(self, labels: Iterable[str]) -> "LabelSpace":
        return LabelSpace({lab: self.verbalizations[lab] for lab in sorted(labels)})

    def __len__(self) -> int:
        return len(self.verbalizations)

    def __contains__(self, label: object) -> bool:
        return label in self.verbalizations


@dataclass(frozen=True)
class TaskSequence:
    seed: int
    tasks: tuple[frozenset[str], ...]

    def __post_init__(self):
        seen: set[str] = set()
        for t in self.tasks:
            if seen & t:
                raise ValueError("task label sets overlap")
            seen |= t

    @property
    def labels(self) -> frozenset[str]:
        return frozenset().union(*self.tasks)

    def seen_after(self, k: int) -> frozenset[str]:
        """Labels of tasks ``0..k`` inclusive."""
        return frozenset().union(*self.tasks[: k + 1])

    def __len__(self) -> int:
        return len(self.tasks)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "tasks": [sorted(t) for t in self.tasks]}


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float = 0.6
    beta: float = 0.5
    tau: float = 0.97
    memory_size: int = 10
    n_tasks: int = 10
    epochs_stage1: int = 10
    epochs_stage2: int = 10
    learning_rate: float = 1e-4
    batch_size: int = 32
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    ablation: frozenset[str] = field(default_factory=frozenset)
    max_attempts: int = 5

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "ablation", frozenset(self.ablation))

    def has(self, flag: str) -> bool:
        return flag in self.ablation

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["ablation"] = sorted(self.ablation)
        return d


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Return ``cfg`` unchanged, or raise :class:`ConfigError` listing every violation."""
    problems = []
    for name in ("alpha", "beta"):
        v = getattr(cfg, name)
        if not 0.0 <= v <= 1.0:
            problems.append(f"{name} out of [0,1]: {v}")
    if not -1.0 <= cfg.tau <= 1.0:
        problems.append(f"tau out of [-1,1]: {cfg.tau}")
    for name in ("memory_size", "n_tasks", "epochs_stage1", "epochs_stage2", "batch_size", "max_attempts"):
        v = getattr(cfg, name)
        if int(v) != v or v < 1:
            problems.append(f"{name} must be a positive integer: {v}")
    if not cfg.learning_rate > 0:
        problems.append(f"learning_rate must be positive: {cfg.learning_rate}")
    if not cfg.seeds:
        problems.append("seeds must be nonempty")
    unknown = cfg.ablation - ABLATION_FLAGS
    if unknown:
        problems.append(f"ablation has unknown flags: {sorted(unknown)}")
    if problems:
        raise ConfigError(problems)
    return cfg


FEWREL_CONFIG = ExperimentConfig(alpha=0.6, beta=0.5, tau=0.97, memory_size=10, batch_size=32)
TACRED_CONFIG = ExperimentConfig(alpha=0.9, beta=0.5, tau=0.97, memory_size=10, batch_size=16)
