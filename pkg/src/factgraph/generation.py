"""Prompt assembly and pluggable response generators."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import httpx

INSTRUCTION = "You are an assistant. Use only the following facts."
APOLOGY = "I'm sorry, I don't have that information."


@dataclass
class Prompt:
    instruction: str = INSTRUCTION
    facts: list[str] = field(default_factory=list)  # descending relevance
    history: list[tuple[str, str]] = field(default_factory=list)

    @property
    def rendered(self) -> str:
        lines = [self.instruction]
        if self.facts:
            lines.append("Facts:")
            lines.extend(f"- {text}" for text in self.facts)
        lines.append("Dialogue:")
        lines.extend(f"{speaker}: {text}" for speaker, text in self.history)
        return "\n".join(lines)


def build_prompt(history, facts, k: int = 10,
                 max_chars: int | None = None) -> Prompt:
    """Assemble the prompt; when over budget, drop least-relevant facts first,
    then the oldest turns."""
    prompt = Prompt(facts=list(facts[:k]), history=list(history))
    if max_chars is None:
        return prompt
    while len(prompt.rendered) > max_chars and prompt.facts:
        prompt.facts.pop()
    while len(prompt.rendered) > max_chars and len(prompt.history) > 1:
        prompt.history.pop(0)
    return prompt


def shuffled_fact_prompt(history, facts, seed: int,
                         max_chars: int = 4000) -> Prompt:
    """All-facts mode: every fact, seeded shuffle, truncated to the budget."""
    shuffled = list(facts)
    random.Random(seed).shuffle(shuffled)
    prompt = Prompt(facts=shuffled, history=list(history))
    while len(prompt.rendered) > max_chars and prompt.facts:
        prompt.facts.pop()
    while len(prompt.rendered) > max_chars and len(prompt.history) > 1:
        prompt.history.pop(0)
    return prompt


class GeneratorError(RuntimeError):
    pass


class LikelihoodUnsupportedError(GeneratorError):
    pass


class MockGenerator:
    """Deterministic generator for tests and offline runs.

    `gold_fact_ids` (fact-id strings per turn index) drives the likelihood
    fixture: ln(0.9) when a gold fact is present in the prompt, else ln(0.1).
    """

    def __init__(self, gold_fact_ids: list[list[str]] | None = None):
        self.gold_fact_ids = gold_fact_ids or []
        self.turn_index = 0

    def generate(self, prompt: Prompt) -> str:
        if prompt.facts:
            return "Here is what I found: " + prompt.facts[0]
        return APOLOGY

    def likelihood(self, prompt: Prompt, response: str,
                   turn_index: int | None = None) -> float:
        idx = self.turn_index if turn_index is None else turn_index
        gold = self.gold_fact_ids[idx] if idx < len(self.gold_fact_ids) else []
        block = "\n".join(prompt.facts)
        hit = any(fact_id in block for fact_id in gold)
        return math.log(0.9) if hit else math.log(0.1)


class HttpGenerator:
    """HTTP generator: POST {"prompt": ...} -> {"text": ...}; likelihood via
    POST {"prompt": ..., "completion": ...} -> {"logprob": ...}."""

    def __init__(self, url: str, timeout: float = 60.0, retries: int = 2):
        self.url = url
        self.timeout = timeout
        self.retries = retries

    def _post(self, payload: dict) -> dict:
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                resp = httpx.post(self.url, json=payload, timeout=self.timeout)
                resp.raise_for_status()
                return resp.json()
            except httpx.HTTPError as exc:
                last_error = exc
        raise GeneratorError(
            f"generator unreachable after {self.retries + 1} attempts: {last_error}")

    def generate(self, prompt: Prompt) -> str:
        return self._post({"prompt": prompt.rendered})["text"]

    def likelihood(self, prompt: Prompt, response: str, **_kwargs) -> float:
        doc = self._post({"prompt": prompt.rendered, "completion": response})
        if "logprob" not in doc:
            raise LikelihoodUnsupportedError(
                "generator endpoint does not report likelihoods")
        return float(doc["logprob"])


def generate(client, prompt: Prompt) -> str:
    return client.generate(prompt)


def likelihood(client, prompt: Prompt, response: str, **kwargs) -> float:
    return client.likelihood(prompt, response, **kwargs)
