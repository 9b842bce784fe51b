"""Continual relation extraction with LLM rationales.

A seq2seq backbone learns relations task by task with three training
formats (answer, rationale-then-answer, rationale-conditioned answer),
keeps K-means-selected exemplars in an episodic memory, and replays that
memory with contrastive rationales for relations that look alike.
"""

__version__ = "0.1.0"

from .types import (  # noqa: E402
    ConfigError,
    Entity,
    ExperimentConfig,
    LabelSpace,
    RationaleRecord,
    RelationInstance,
    TaskSequence,
    normalize_answer,
    validate_config,
)

__all__ = [
    "ConfigError",
    "Entity",
    "ExperimentConfig",
    "LabelSpace",
    "RationaleRecord",
    "RelationInstance",
    "TaskSequence",
    "normalize_answer",
    "validate_config",
]
