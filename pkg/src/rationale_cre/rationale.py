"""Prompting an LLM for rationales, with caching and retry.

Providers implement ``complete(prompt) -> str`` and carry a ``name``. The
mock providers here let the whole pipeline run offline:

* :class:`OracleProvider` writes a templated, correct rationale and, for
  zero-shot prompts, answers from an answer key.
* :class:`ScriptedProvider` replays a fixed list of responses.
* :class:`AdversarialProvider` always concludes with a wrong relation.

:class:`OpenAIProvider` talks to any OpenAI-compatible chat endpoint.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import string
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import httpx

from .types import (
    CONTRASTIVE,
    PLAIN,
    LabelSpace,
    RationaleRecord,
    RelationInstance,
    normalize_answer,
    question_text,
)

log = logging.getLogger(__name__)

SENTINEL = "Therefore, the answer is:"
DEFAULT_MAX_ATTEMPTS = 5


class ProviderError(RuntimeError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class UnfaithfulRationaleError(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class RetryCapExceeded(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


# ---------------------------------------------------------------------------
# prompts


@dataclass(frozen=True)
class PromptTemplate:
    kind: str
    template_text: str

    @property
    def slots(self) -> frozenset[str]:
        return frozenset(
            name for _, name, _, _ in string.Formatter().parse(self.template_text) if name
        )

    def render(self, **values: str) -> str:
        missing = self.slots - values.keys()
        if missing:
            raise ValueError(f"{self.kind}: unfilled slots {sorted(missing)}")
        for name in self.slots:
            if not str(values[name]).strip():
                raise ValueError(f"empty {name} slot")
        return self.template_text.format(**{k: values[k] for k in self.slots})


PLAIN_TEMPLATE = PromptTemplate(
    "plain_rationale",
    'Given the subject entity "{head}" and object entity "{tail}", the relation type '
    "between them in sentence: {text}\n"
    'is "{relation}".\n'
    'Explain step by step why the relation between "{head}" and "{tail}" is "{relation}".\n'
    f"End your explanation with the sentence: {SENTINEL} {{relation}}.",
)

CONTRASTIVE_TEMPLATE = PromptTemplate(
    "contrastive_rationale",
    'Given the subject entity "{head}" and object entity "{tail}", the relation type '
    "between them in sentence: {text}\n"
    'is "{relation}".\n'
    "Similar relations: {analogous_relations}\n"
    'Explain why the relation is "{relation}" and not one of the similar relations, '
    "highlighting the distinctions between the similar relations.\n"
    f"End your explanation with the sentence: {SENTINEL} {{relation}}.",
)

ZERO_SHOT_TEMPLATE = PromptTemplate(
    "zero_shot_classify",
    "{text}\n"
    "Select one best answer from the following relation types: {label_menu}\n"
    "Answer with the relation type only.",
)


def _quoted(items: Iterable[str]) -> str:
    return "; ".join(f'"{x}"' for x in items)


def build_plain_prompt(inst: RelationInstance, verbalization: str) -> str:
    return PLAIN_TEMPLATE.render(
        head=inst.head.text, tail=inst.tail.text, text=inst.text, relation=verbalization
    )


def build_contrastive_prompt(
    inst: RelationInstance, gold_verbalization: str, analogous: Sequence[str]
) -> str:
    if not analogous:
        raise ValueError(f"{inst.id}: contrastive prompt needs at least one analogous relation")
    gold = normalize_answer(gold_verbalization)
    if any(normalize_answer(a) == gold for a in analogous):
        raise ValueError(f"{inst.id}: gold relation listed among its analogous relations")
    return CONTRASTIVE_TEMPLATE.render(
        head=inst.head.text,
        tail=inst.tail.text,
        text=inst.text,
        relation=gold_verbalization,
        analogous_relations=_quoted(sorted(analogous)),
    )


def build_zero_shot_prompt(inst: RelationInstance, label_menu: Sequence[str]) -> str:
    return ZERO_SHOT_TEMPLATE.render(text=question_text(inst), label_menu=_quoted(label_menu))


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _clean_answer(text: str) -> str:
    # peel surrounding whitespace, quotes and a closing full stop in any order
    prev = None
    while prev != text:
        prev, text = text, text.strip().strip("\"'").rstrip(".")
    return text


def parse_response(text: str) -> tuple[str, str] | None:
    """Split a response into ``(rationale, answer)`` at the last sentinel.

    Returns ``None`` when the sentinel is missing or the answer is empty.
    """
    idx = text.lower().rfind(SENTINEL.lower())
    if idx < 0:
        return None
    answer = _clean_answer(text[idx + len(SENTINEL):])
    if not answer:
        return None
    return text[:idx].strip(), answer


# ---------------------------------------------------------------------------
# providers


class Provider(Protocol):
    name: str

    def complete(self, prompt: str) -> str: ...


_HEAD_TAIL = re.compile(r'Given the subject entity "(?P<head>.*?)" and object entity "(?P<tail>.*?)", ')
_ANSWER = re.compile(re.escape(SENTINEL) + r" (?P<rel>.+)\.\s*$")
_SIMILAR = re.compile(r"^Similar relations: (?P<rels>.+)$", re.M)
_QUESTION = re.compile(r"^(?P<q>Given the subject entity .*\?)\nSelect one best answer", re.S)


class OracleProvider:
    """Mock LLM that always knows the right answer.

    ``answer_key`` maps a zero-shot question (see :func:`question_text`) to
    the gold verbalization; it is only needed for zero-shot prompts.
    """

    name = "oracle"

    def __init__(self, answer_key: Mapping[str, str] | None = None):
        self.answer_key = dict(answer_key or {})
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def for_instances(cls, instances: Iterable[RelationInstance], labels: LabelSpace) -> "OracleProvider":
        return cls({question_text(i): labels.verbalize(i.relation) for i in instances})

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.calls += 1
        q = _QUESTION.match(prompt)
        if q:
            try:
                return self.answer_key[q.group("q")]
            except KeyError:
                raise ProviderError("oracle has no answer for this question") from None
        m, a = _HEAD_TAIL.search(prompt), _ANSWER.search(prompt)
        if not (m and a):
            raise ProviderError("oracle cannot read the prompt")
        head, tail, rel = m.group("head"), m.group("tail"), a.group("rel")
        similar = _SIMILAR.search(prompt)
        if similar:
            others = " or ".join(re.findall(r'"(.*?)"', similar.group("rels")))
            body = (
                f'The sentence ties "{head}" to "{tail}" as {rel}, which differs from {others} '
                f"because of how the sentence links them."
            )
        else:
            body = f'The sentence ties "{head}" to "{tail}" as {rel}.'
        return f"{body} {SENTINEL} {rel}."


class ScriptedProvider:
    """Returns ``responses`` in order; running past the end raises."""

    name = "scripted"

    def __init__(self, responses: Sequence[str]):
        self.responses = list(responses)
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            if self.calls >= len(self.responses):
                raise ProviderError("scripted provider ran out of responses")
            out = self.responses[self.calls]
            self.calls += 1
        return out


class AdversarialProvider:
    """Concludes every response with ``wrong_answer``."""

    name = "adversarial"

    def __init__(self, wrong_answer: str = "no relation at all"):
        self.wrong_answer = wrong_answer
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        if _QUESTION.match(prompt):
            return self.wrong_answer
        return f"These entities are unrelated. {SENTINEL} {self.wrong_answer}."


class TokenBucket:
    """Thread-safe token bucket: ``rate`` tokens per second, burst ``capacity``."""

    def __init__(self, rate: float, capacity: float = 1.0, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = capacity
        self.tokens = capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)


class OpenAIProvider:
    """OpenAI-compatible chat-completions client.

    Configuration comes from ``OPENAI_BASE_URL`` (default
    ``https://api.openai.com/v1``), ``OPENAI_API_KEY`` and ``RATIONALE_MODEL``
    (default ``gpt-3.5-turbo``) unless passed explicitly.
    """

    def __init__(
        self,
        model: str | None = None,
        base_url: str | None = None,
        api_key: str | None = None,
        requests_per_second: float = 2.0,
        timeout: float = 60.0,
        retry_delay: float = 1.0,
        temperature: float = 0.0,
        client: httpx.Client | None = None,
    ):
        self.model = model or os.environ.get("RATIONALE_MODEL", "gpt-3.5-turbo")
        self.base_url = (base_url or os.environ.get("OPENAI_BASE_URL", "https://api.openai.com/v1")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("OPENAI_API_KEY", "")
        self.temperature = temperature
        self.retry_delay = retry_delay
        self.bucket = TokenBucket(requests_per_second, capacity=max(1.0, requests_per_second))
        self.client = client or httpx.Client(timeout=timeout)
        self.name = f"openai:{self.model}"

    def complete(self, prompt: str) -> str:
        self.bucket.acquire()
        try:
            resp = self.client.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self.api_key}"},
                json={
                    "model": self.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": self.temperature,
                },
            )
        except httpx.HTTPError as e:
            raise ProviderError(f"request failed: {e}") from e
        if resp.status_code != 200:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as e:
            raise ProviderError(f"unexpected response body: {e}") from e


def make_provider(kind: str, **kwargs) -> Provider:
    if kind == "oracle":
        return OracleProvider(kwargs.get("answer_key"))
    if kind == "scripted":
        return ScriptedProvider(kwargs.get("responses", []))
    if kind == "adversarial":
        return AdversarialProvider(kwargs.get("wrong_answer", "no relation at all"))
    if kind == "openai":
        return OpenAIProvider(**{k: v for k, v in kwargs.items() if k not in ("answer_key", "responses")})
    raise ValueError(f"unknown provider {kind!r}")


# ---------------------------------------------------------------------------
# cache


class RationaleCache:
    """Append-only JSON-lines store keyed by ``(instance_id, kind, prompt_hash)``.

    ``path=None`` keeps everything in memory. Writes go through one lock, so
    worker threads may share a cache.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[tuple[str, str, str], RationaleRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        rec = RationaleRecord.from_dict(json.loads(line))
                        self._records[(rec.instance_id, rec.kind, rec.prompt_hash)] = rec

    def get(self, instance_id: str, kind: str, phash: str) -> RationaleRecord | None:
        return self._records.get((instance_id, kind, phash))

    def put(self, record: RationaleRecord) -> None:
        key = (record.instance_id, record.kind, record.prompt_hash)
        with self._lock:
            self._records[key] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                line = dict(record.to_dict(), timestamp=datetime.now(timezone.utc).isoformat())
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(line, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(list(self._records.values()))


# ---------------------------------------------------------------------------
# generation


def generate_rationale(
    inst: RelationInstance,
    kind: str,
    provider: Provider,
    cache: RationaleCache,
    *,
    verbalization: str,
    analogous: Sequence[str] = (),
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> RationaleRecord:
    """Cached rationale for ``inst`` whose conclusion matches ``verbalization``.

    Responses without the closing sentinel, or concluding with another
    relation, are regenerated up to ``max_attempts`` times in total.
    """
    if kind == PLAIN:
        prompt = build_plain_prompt(inst, verbalization)
    elif kind == CONTRASTIVE:
        prompt = build_contrastive_prompt(inst, verbalization, analogous)
    else:
        raise ValueError(f"unknown rationale kind {kind!r}")
    phash = prompt_hash(prompt)
    hit = cache.get(inst.id, kind, phash)
    if hit is not None:
        return hit

    gold = normalize_answer(verbalization)
    last_error: Exception | None = None
    for attempt in range(1, max_attempts + 1):
        try:
            raw = provider.complete(prompt)
        except ProviderError as e:
            last_error = e
            delay = getattr(provider, "retry_delay", 0.0)
            if delay and attempt < max_attempts:
                time.sleep(delay * 2 ** (attempt - 1))
            continue
        parsed = parse_response(raw)
        if parsed is None or normalize_answer(parsed[1]) != gold:
            last_error = None
            log.debug("%s: attempt %d did not conclude with %r", inst.id, attempt, gold)
            continue
        record = RationaleRecord(
            instance_id=inst.id,
            kind=kind,
            rationale_text=parsed[0],
            answer_text=parsed[1],
            prompt_hash=phash,
            provider=provider.name,
            attempts=attempt,
        )
        cache.put(record)
        return record

    if last_error is not None:
        raise ProviderError(f"{inst.id}: provider failed after {max_attempts} attempts: {last_error}",
                            attempts=max_attempts)
    raise UnfaithfulRationaleError(
        f"{inst.id}: unfaithful rationale after {max_attempts} attempts", attempts=max_attempts
    )


def generate_rationales(
    instances: Sequence[RelationInstance],
    kind: str,
    provider: Provider,
    cache: RationaleCache,
    labels: LabelSpace,
    *,
    analogous: Mapping[str, Iterable[str]] | None = None,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    max_in_flight: int = 1,
) -> list[RationaleRecord]:
    """Rationales for many instances, in input order.

    For contrastive rationales ``analogous`` maps each relation label to its
    analogous labels; instances must only be passed when that set is nonempty.
    """

    def one(inst: RelationInstance) -> RationaleRecord:
        peers = ()
        if kind == CONTRASTIVE:
            peers = [labels.verbalize(r) for r in sorted((analogous or {}).get(inst.relation, ()))]
        return generate_rationale(
            inst, kind, provider, cache,
            verbalization=labels.verbalize(inst.relation),
            analogous=peers,
            max_attempts=max_attempts,
        )

    if max_in_flight <= 1:
        return [one(i) for i in instances]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(one, instances))


def zero_shot_classify(
    inst: RelationInstance,
    label_menu: Sequence[str],
    provider: Provider,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> str:
    """Ask the provider to pick one entry of ``label_menu`` for ``inst``.

    Answers outside the menu are discarded and the question is asked again.
    Returns the matching menu entry.
    """
    if not label_menu:
        raise ValueError("label_menu is empty")
    menu = {normalize_answer(m): m for m in label_menu}
    prompt = build_zero_shot_prompt(inst, label_menu)
    for attempt in range(1, max_attempts + 1):
        try:
            raw = provider.complete(prompt)
        except ProviderError:
            continue
        parsed = parse_response(raw)
        answer = parsed[1] if parsed else _clean_answer(raw)
        choice = menu.get(normalize_answer(answer))
        if choice is not None:
            return choice
    raise RetryCapExceeded(f"{inst.id}: no in-menu answer after {max_attempts} attempts", max_attempts)


def llm_baseline(
    instances: Sequence[RelationInstance],
    labels: LabelSpace,
    provider: Provider,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> tuple[float, list[str | None]]:
    """Zero-shot accuracy of the provider over ``instances``.

    Instances where the retry cap is hit count as wrong and predict ``None``.
    """
    menu = [labels.verbalize(lab) for lab in sorted(labels.labels)]
    preds: list[str | None] = []
    for inst in instances:
        try:
            preds.append(labels.lookup(zero_shot_classify(inst, menu, provider, max_attempts)))
        except RetryCapExceeded:
            preds.append(None)
    correct = sum(p == i.relation for p, i in zip(preds, instances))
    return (correct / len(instances) if instances else 0.0), preds
