"""Mention detection and probabilistic entity linking.

Detection is pluggable: a dictionary matcher over KB entity names, or an
external HTTP detector. Resolution runs the linking rule set and writes
probabilistic refers_to edges back to the graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import httpx

from . import inference
from .builtins import default_registry, jw_similarity, lcs, lev_distance, nb_common_words
from .kg import DialogueState
from .rulelang import Atom, Clause, CoreProgram, Literal, Var

DEFAULT_LINK_THRESHOLD = 0.1
# reply-chain depth reachable by the anaphora rules
ANAPHORA_TURN_WINDOW = 4


class DetectorError(RuntimeError):
    pass


class DictionaryMatcher:
    """Longest case-insensitive substring match against entity name attributes."""

    def __init__(self, state: DialogueState, extra_names=()):
        names = set(extra_names)
        for node in state.graph.nodes.values():
            if node.kind in ("utterance", "mention"):
                continue
            attr = node.attrs.get("name")
            if attr is not None:
                names.add(str(attr.value))
        self.names = sorted(names, key=len, reverse=True)

    def detect(self, text: str) -> list[tuple[int, int]]:
        lowered = text.lower()
        spans: list[tuple[int, int]] = []
        for name in self.names:
            needle = name.lower()
            if not needle:
                continue
            start = 0
            while True:
                pos = lowered.find(needle, start)
                if pos == -1:
                    break
                span = (pos, pos + len(needle))
                if not any(s < span[1] and span[0] < e for s, e in spans):
                    spans.append(span)
                start = pos + 1
        return sorted(spans)


class ExternalDetector:
    """HTTP mention detector: POST {"text": ...} -> {"spans": [[s,e],...]}."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def detect(self, text: str) -> list[tuple[int, int]]:
        try:
            resp = httpx.post(self.url, json={"text": text}, timeout=self.timeout)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise DetectorError(f"mention detector unreachable: {exc}") from exc
        spans = [(int(s), int(e)) for s, e in resp.json()["spans"]]
        for start, end in spans:
            if not 0 <= start < end <= len(text):
                raise DetectorError(f"detector returned invalid span {(start, end)}")
        return sorted(spans)


def detect_mentions(text: str, detector) -> list[tuple[int, int]]:
    return detector.detect(text)


@dataclass
class LinkResult:
    mention: str
    candidates: list[tuple[str, float]]  # sorted by descending probability


def fix_anaphora_typo(core: CoreProgram) -> CoreProgram:
    """Rebind the unshared previous-mention variable in the deepest anaphora
    rule (PM1 -> PM2), an optional correction of the source rule set."""
    new_clauses = []
    for clause in core.clauses:
        body = list(clause.body)
        mention_vars = [l.atom.args[1] for l in body
                        if not l.negated and l.atom.pred == "mention"
                        and isinstance(l.atom.args[1], Var)]
        ref_lits = [i for i, l in enumerate(body)
                    if not l.negated and l.atom.pred == "refers_to"]
        if clause.head.pred == "refers_to" and ref_lits and len(mention_vars) >= 2:
            i = ref_lits[0]
            src = body[i].atom.args[0]
            if isinstance(src, Var) and src not in _clause_var_counts(clause):
                body[i] = Literal(Atom("refers_to", (mention_vars[-1],
                                                     body[i].atom.args[1])))
        new_clauses.append(Clause(clause.head, tuple(body), clause.weight,
                                  clause.line))
    return CoreProgram(new_clauses, list(core.prob_facts), list(core.switches),
                       dict(core.strata))


def _clause_var_counts(clause: Clause):
    counts: dict[Var, int] = {}

    def visit(term):
        if isinstance(term, Var):
            counts[term] = counts.get(term, 0) + 1
        elif isinstance(term, Atom):
            for a in term.args:
                visit(a)

    for a in clause.head.args:
        visit(a)
    for lit in clause.body:
        if lit.atom is not None:
            for a in lit.atom.args:
                visit(a)
    return {v for v, c in counts.items() if c > 1}


def candidate_entities(state: DialogueState, surface: str) -> set[str]:
    """Entities a string rule or anaphora rule could plausibly link.

    Strict superset of every rule guard: string-signal entities plus the
    referents of mentions in the recent reply chain.
    """
    out = set()
    for node in state.graph.nodes.values():
        if node.kind in ("utterance", "mention", "date", "time"):
            continue
        attr = node.attrs.get("name")
        if attr is None:
            continue
        name = str(attr.value)
        if (jw_similarity(name, surface) >= 0.7 or lev_distance(name, surface) <= 5
                or lcs(name, surface) >= 4 or nb_common_words(name, surface) > 0):
            out.add(node.id)
    recent_turns = {t.id for t in state.turns[-(ANAPHORA_TURN_WINDOW + 1):]}
    recent_mentions = {m.id for m in state.mentions if m.turn in recent_turns}
    for edge in state.graph.edges:
        if edge.label == "refers_to" and edge.src in recent_mentions:
            out.add(edge.dst)
    return out


def link_mentions(state: DialogueState, linking_rules: CoreProgram,
                  link_threshold: float = DEFAULT_LINK_THRESHOLD,
                  registry=None) -> list[LinkResult]:
    """Run the linking rules for the current turn's mentions and write
    refers_to edges (prob >= threshold) back to the graph."""
    turn = state.turns[-1] if state.turns else None
    if turn is None:
        return []
    registry = registry or default_registry()
    mentions = [m for m in state.mentions if m.turn == turn.id]
    facts = state.to_facts()
    facts.append((1.0, "new", (turn.id,)))
    gp = inference.ground(linking_rules, facts, registry)
    results = []
    for mention in mentions:
        scored = []
        for entity in sorted(candidate_entities(state, mention.surface)):
            prob = inference.query(gp, "refers_to", (mention.id, entity))
            if prob > 0.0:
                scored.append((entity, prob))
        scored.sort(key=lambda c: (-c[1], c[0]))
        results.append(LinkResult(mention.id, scored))
        for entity, prob in scored:
            if prob >= link_threshold:
                state.graph.add_edge(mention.id, "refers_to", entity, prob)
    return results
