"""Template-based rendering of ground facts as sentences.

Templates are TSV lines `predicate/arity<TAB>template`. Placeholders:
$1..$n insert the raw argument, $name(i) resolves a node id to its name
attribute, $list(i) comma-joins a list argument (resolving ids via name),
$raw(i) inserts the argument verbatim.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .kg import KnowledgeGraph

log = logging.getLogger(__name__)

_PLACEHOLDER_RE = re.compile(r"\$(?:(name|list|raw)\((\d+)\)|(\d+))")


class TemplateError(ValueError):
    pass


@dataclass
class TemplateSet:
    templates: dict[tuple[str, int], str] = field(default_factory=dict)

    def get(self, pred: str, arity: int) -> str | None:
        return self.templates.get((pred, arity))


def load_templates(text: str) -> TemplateSet:
    templates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise TemplateError(f"line {lineno}: expected TAB-separated "
                                "predicate/arity and template")
        key_part, template = line.split("\t", 1)
        m = re.fullmatch(r"\s*([a-z]\w*)/(\d+)\s*", key_part)
        if m is None:
            raise TemplateError(f"line {lineno}: malformed key {key_part!r}")
        pred, arity = m.group(1), int(m.group(2))
        for pm in _PLACEHOLDER_RE.finditer(template):
            index = int(pm.group(2) or pm.group(3))
            if not 1 <= index <= arity:
                raise TemplateError(
                    f"line {lineno}: placeholder ${index} out of range for "
                    f"{pred}/{arity}")
        if (pred, arity) in templates:
            log.warning("duplicate template for %s/%d, last one wins", pred, arity)
        templates[(pred, arity)] = template.strip()
    return TemplateSet(templates)


@dataclass
class VerbalizedFact:
    fact: tuple           # (pred, args)
    prob: float
    text: str
    entity_args: list[str]
    derived: bool = False

    @property
    def fact_id(self) -> str:
        pred, args = self.fact
        return f"{pred}({','.join(_plain(a) for a in args)})"


def _plain(value) -> str:
    if isinstance(value, tuple):
        return "[" + ",".join(_plain(v) for v in value) + "]"
    return str(value)


def _resolve_name(value, graph: KnowledgeGraph) -> str:
    if isinstance(value, str) and value in graph.nodes:
        return graph.name_of(value)
    return _plain(value)


def _join_list(value, graph: KnowledgeGraph) -> str:
    if not isinstance(value, tuple):
        return _resolve_name(value, graph)
    parts = [_resolve_name(v, graph) for v in value]
    if not parts:
        return "nothing"
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + " and " + parts[-1]


def verbalize(fact: tuple, prob: float, graph: KnowledgeGraph,
              templates: TemplateSet, derived: bool = False) -> VerbalizedFact:
    """Render one ground fact; total and deterministic, falls back to a
    generic sentence for unknown predicates."""
    pred, args = fact
    entity_args = [a for a in args if isinstance(a, str) and a in graph.nodes
                   and graph.nodes[a].kind not in ("utterance", "date", "time")]
    for a in args:
        if isinstance(a, tuple):
            entity_args.extend(v for v in a
                               if isinstance(v, str) and v in graph.nodes)
    template = templates.get(pred, len(args))
    if template is None:
        rendered = f"{pred} holds for {', '.join(_plain(a) for a in args)}." \
            if args else f"{pred} holds."
        return VerbalizedFact(fact, prob, rendered, entity_args, derived)

    def fill(m: re.Match) -> str:
        modifier = m.group(1)
        index = int(m.group(2) or m.group(3)) - 1
        value = args[index]
        if modifier == "raw":
            return _plain(value)
        if modifier == "list":
            return _join_list(value, graph)
        if modifier == "name":
            return _resolve_name(value, graph)
        return _resolve_name(value, graph)

    text = _PLACEHOLDER_RE.sub(fill, template)
    if not text.endswith("."):
        text += "."
    return VerbalizedFact(fact, prob, text, entity_args, derived)
