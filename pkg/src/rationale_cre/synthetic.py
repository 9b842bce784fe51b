"""Small FewRel-format corpora for tests and demos.

Each relation owns a few sentence templates with a distinctive cue phrase,
and several relations come in confusable pairs (``followed by`` / ``follows``,
``publisher`` / ``developer`` ...) so analogous-relation detection has
something to find.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

# label -> (name, templates); {h} and {t} are entity slots
RELATIONS: dict[str, tuple[str, tuple[str, ...]]] = {
    "P156": ("followed by", ("{h} was followed by {t} in the series .", "after {h} came {t} as the next release .")),
    "P155": ("follows", ("{h} follows {t} in the series .", "{h} came out after {t} was released .")),
    "P159": ("headquarters location", ("{h} has its headquarters in {t} .", "the head office of {h} is in {t} .")),
    "P276": ("location", ("{h} took place in {t} .", "{h} happened near {t} .")),
    "P264": ("record label", ("{h} signed with the label {t} .", "{h} released records on {t} .")),
    "P175": ("performer", ("{h} was performed by {t} .", "{t} sang {h} on stage .")),
    "P123": ("publisher", ("{h} was published by {t} .", "{t} distributed the game {h} .")),
    "P178": ("developer", ("{h} was developed by {t} .", "{t} programmed the game {h} .")),
    "P26": ("spouse", ("{h} married {t} .", "{h} and her husband {t} moved .")),
    "P19": ("place of birth", ("{h} was born in {t} .", "{h} , a native of {t} , spoke .")),
    "P27": ("country of citizenship", ("{h} is a citizen of {t} .", "{h} holds a passport from {t} .")),
    "P106": ("occupation", ("{h} works as a {t} .", "{h} trained to become a {t} .")),
    "P57": ("director", ("{h} was directed by {t} .", "{t} directed the film {h} .")),
    "P58": ("screenwriter", ("{h} was written by {t} .", "{t} wrote the script of {h} .")),
    "P641": ("sport", ("{h} competes in {t} .", "{h} is a famous {t} player .")),
    "P413": ("position played on team", ("{h} plays as a {t} .", "{h} was moved to {t} by the coach .")),
}

_SYLLABLES = ("ka", "lo", "mi", "ra", "to", "ve", "su", "ni", "bo", "de", "pa", "zu", "en", "or", "al")


def _name(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 4))
    return "".join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), n)).capitalize()


def _record(template: str, head: str, tail: str) -> dict:
    tokens: list[str] = []
    spans = {}
    for piece in template.split():
        if piece in ("{h}", "{t}"):
            word = head if piece == "{h}" else tail
            spans[piece] = [len(tokens), len(tokens) + 1]
            tokens.append(word)
        else:
            tokens.append(piece)
    return {
        "tokens": tokens,
        "head": {"text": head, "span": spans["{h}"]},
        "tail": {"text": tail, "span": spans["{t}"]},
    }


def make_corpus(n_relations: int, per_relation: int, seed: int = 0) -> tuple[dict, dict]:
    """Return ``(corpus, names)``; ``corpus`` is FewRel-shaped, ``names`` maps label to name."""
    if not 1 <= n_relations <= len(RELATIONS):
        raise ValueError(f"n_relations must be in [1, {len(RELATIONS)}]")
    rng = np.random.default_rng(seed)
    labels = list(RELATIONS)[:n_relations]
    corpus, names = {}, {}
    for label in labels:
        name, templates = RELATIONS[label]
        names[label] = name
        rows = []
        for i in range(per_relation):
            head = _name(rng)
            tail = _name(rng)
            while tail == head:
                tail = _name(rng)
            rows.append(_record(templates[i % len(templates)], head, tail))
        corpus[label] = rows
    return corpus, names


def write_corpus(directory: str | Path, n_relations: int, per_relation: int, seed: int = 0) -> tuple[Path, Path]:
    """Write ``corpus.json`` and ``names.json`` and return both paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    corpus, names = make_corpus(n_relations, per_relation, seed)
    cpath, npath = d / "corpus.json", d / "names.json"
    cpath.write_text(json.dumps(corpus), encoding="utf-8")
    npath.write_text(json.dumps(names, indent=1), encoding="utf-8")
    return cpath, npath
