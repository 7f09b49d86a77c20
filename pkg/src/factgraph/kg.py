"""Dialogue-state knowledge graph: typed nodes, probabilistic edges, fact export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Attr:
    value: object  # str or int
    prob: float = 1.0


@dataclass
class Node:
    id: str
    kind: str
    attrs: dict[str, Attr] = field(default_factory=dict)


@dataclass
class Edge:
    src: str
    label: str
    dst: str
    prob: float = 1.0


class KnowledgeGraph:
    """Mutable graph of nodes and labelled edges, both optionally probabilistic."""

    def __init__(self):
        self.nodes: dict[str, Node] = {}
        self.edges: list[Edge] = []
        self._counters: dict[str, int] = {}

    def fresh_id(self, prefix: str) -> str:
        self._counters[prefix] = self._counters.get(prefix, 0) + 1
        return f"{prefix}_{self._counters[prefix]}"

    def add_node(self, kind: str, node_id: str | None = None, prefix: str | None = None,
                 **attrs) -> Node:
        if not kind:
            raise ValueError("node kind must be nonempty")
        if node_id is None:
            node_id = self.fresh_id(prefix or kind[0])
        if node_id in self.nodes:
            raise ValueError(f"duplicate node id {node_id!r}")
        node = Node(node_id, kind)
        for name, value in attrs.items():
            node.attrs[name] = value if isinstance(value, Attr) else Attr(value)
        for a in node.attrs.values():
            if not 0.0 <= a.prob <= 1.0:
                raise ValueError(f"attribute probability {a.prob} outside [0,1]")
        self.nodes[node_id] = node
        return node

    def add_edge(self, src: str, label: str, dst: str, prob: float = 1.0) -> Edge:
        if src not in self.nodes or dst not in self.nodes:
            raise KeyError(f"edge endpoints must exist: {src} -> {dst}")
        if not 0.0 <= prob <= 1.0:
            raise ValueError(f"edge probability {prob} outside [0,1]")
        edge = Edge(src, label, dst, prob)
        self.edges.append(edge)
        return edge

    def name_of(self, node_id: str) -> str:
        node = self.nodes.get(node_id)
        if node is not None and "name" in node.attrs:
            return str(node.attrs["name"].value)
        return node_id


def _next_day(date_str: str) -> str:
    from datetime import date, timedelta
    try:
        d = date.fromisoformat(date_str)
    except ValueError:
        return date_str
    return (d + timedelta(days=1)).isoformat()


@dataclass
class Turn:
    id: str
    speaker: str  # "user" | "system"
    text: str


@dataclass
class Mention:
    id: str
    turn: str
    span: tuple[int, int]
    surface: str


class DialogueState:
    """Knowledge graph plus the evolving dialogue: turns, mentions, wall clock."""

    def __init__(self, graph: KnowledgeGraph | None = None,
                 today: str = "2024-01-01", now: str = "12:00"):
        self.graph = graph or KnowledgeGraph()
        self.turns: list[Turn] = []
        self.mentions: list[Mention] = []
        self.today = today
        self.now = now
        if "at_today" not in self.graph.nodes:
            self.graph.add_node("date", node_id="at_today", date=today)
        if "at_tomorrow" not in self.graph.nodes:
            self.graph.add_node("date", node_id="at_tomorrow", date=_next_day(today))
        if "at_now" not in self.graph.nodes:
            self.graph.add_node("time", node_id="at_now", time=now)

    def add_turn(self, speaker: str, text: str) -> str:
        if not text:
            raise ValueError("turn text must be nonempty")
        turn_id = self.graph.fresh_id("u")
        self.graph.add_node("utterance", node_id=turn_id, text=text)
        if self.turns:
            self.graph.add_edge(turn_id, "respond_to", self.turns[-1].id)
        self.turns.append(Turn(turn_id, speaker, text))
        return turn_id

    def add_mention(self, turn_id: str, span: tuple[int, int], surface: str) -> str:
        turn = next((t for t in self.turns if t.id == turn_id), None)
        if turn is None:
            raise KeyError(f"unknown turn {turn_id!r}")
        start, end = span
        if not (0 <= start < end <= len(turn.text)):
            raise ValueError(f"span {span} out of range for turn {turn_id}")
        mention_id = self.graph.fresh_id("m")
        self.graph.add_node("mention", node_id=mention_id, string=surface)
        self.graph.add_edge(turn_id, "mention", mention_id)
        self.mentions.append(Mention(mention_id, turn_id, (start, end), surface))
        return mention_id

    def last_user_turn(self) -> Turn | None:
        for turn in reversed(self.turns):
            if turn.speaker == "user":
                return turn
        return None

    def to_facts(self) -> list[tuple[float, str, tuple]]:
        """Serialize the graph as (weight, predicate, args) ground facts.

        One kind(id) per node, attr(id, value) per attribute, label(src, dst)
        per edge. Sorted by predicate then arguments so output is deterministic.
        """
        facts: list[tuple[float, str, tuple]] = []
        for node in self.nodes_sorted():
            facts.append((1.0, node.kind, (node.id,)))
            for attr_name in sorted(node.attrs):
                attr = node.attrs[attr_name]
                facts.append((attr.prob, attr_name, (node.id, attr.value)))
        for edge in self.graph.edges:
            facts.append((edge.prob, edge.label, (edge.src, edge.dst)))
        facts.sort(key=lambda f: (f[1], tuple(map(str, f[2]))))
        return facts

    def nodes_sorted(self) -> list[Node]:
        return [self.graph.nodes[k] for k in sorted(self.graph.nodes)]

    def current_turn_entities(self, link_threshold: float = 0.1) -> list[str]:
        """Entities linked from mentions of the last user turn, best first."""
        turn = self.last_user_turn()
        if turn is None:
            return []
        mention_ids = {m.id for m in self.mentions if m.turn == turn.id}
        best: dict[str, float] = {}
        for edge in self.graph.edges:
            if (edge.label == "refers_to" and edge.src in mention_ids
                    and edge.prob >= link_threshold):
                best[edge.dst] = max(best.get(edge.dst, 0.0), edge.prob)
        return sorted(best, key=lambda e: (-best[e], e))

    def snapshot(self) -> dict:
        return {
            "kb": {
                "nodes": [
                    {"id": n.id, "kind": n.kind,
                     "attrs": {k: {"value": a.value, "prob": a.prob}
                               for k, a in n.attrs.items()}}
                    for n in self.nodes_sorted()
                ],
                "edges": [
                    {"src": e.src, "label": e.label, "dst": e.dst, "prob": e.prob}
                    for e in self.graph.edges
                ],
            },
            "dialogue": [{"id": t.id, "speaker": t.speaker, "text": t.text}
                         for t in self.turns],
            "mentions": [{"id": m.id, "turn": m.turn, "span": list(m.span),
                          "surface": m.surface} for m in self.mentions],
            "now": {"date": self.today, "time": self.now},
        }


def load_dataset(source) -> tuple[DialogueState, dict]:
    """Build a DialogueState from the dataset JSON schema.

    Returns the state (KB loaded, dialogue NOT yet replayed) and the raw
    document so callers can walk `dialogue`, `gold_responses`, `gold_fact_ids`.
    """
    if isinstance(source, str):
        doc = json.loads(source)
    elif isinstance(source, dict):
        doc = source
    else:
        doc = json.load(source)
    now = doc.get("now", {})
    graph = KnowledgeGraph()
    for spec in doc.get("kb", {}).get("nodes", []):
        attrs = {}
        for name, val in spec.get("attrs", {}).items():
            if isinstance(val, dict):
                attrs[name] = Attr(val["value"], float(val.get("prob", 1.0)))
            else:
                attrs[name] = Attr(val)
        graph.add_node(spec["kind"], node_id=spec["id"], **attrs)
    state = DialogueState(graph,
                          today=now.get("date", "2024-01-01"),
                          now=now.get("time", "12:00"))
    for spec in doc.get("kb", {}).get("edges", []):
        graph.add_edge(spec["src"], spec["label"], spec["dst"],
                       float(spec.get("prob", 1.0)))
    return state, doc
