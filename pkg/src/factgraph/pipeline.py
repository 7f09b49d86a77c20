"""Per-turn orchestration: mention detection, linking, fact derivation,
verbalization, relevance ranking, prompt building, and generation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

from . import generation, inference, linking, relevance
from .builtins import default_registry
from .kg import DialogueState
from .linking import DictionaryMatcher
from .relevance import HashEmbedder, RelevanceModel, build_candidate_set
from .rulelang import CoreProgram, desugar, parse_program
from .verbalizer import TemplateSet, VerbalizedFact, load_templates, verbalize

MODES = ("nofacts", "allfacts", "relevance", "relevance_logic")

# dialogue plumbing never surfaces as a candidate fact
_EXCLUDED_PREDICATES = {"utterance", "mention", "respond_to", "text", "string",
                        "new", "refers_to"}

_PACKAGE_ROOT = Path(__file__).resolve().parent.parent.parent


def default_rules_dir() -> Path:
    return _PACKAGE_ROOT / "rules"


def default_templates_path() -> Path:
    return _PACKAGE_ROOT / "templates" / "default.tsv"


@dataclass
class PipelineConfig:
    mode: str = "relevance_logic"
    k: int = 10
    link_threshold: float = linking.DEFAULT_LINK_THRESHOLD
    max_prompt_chars: int = 4000
    max_enum_facts: int = inference.MAX_ENUM_FACTS
    seed: int = 0


@dataclass
class TurnResult:
    response: str
    facts: list[dict] = field(default_factory=list)
    links: list[dict] = field(default_factory=list)
    timing_ms: dict = field(default_factory=dict)

    def payload(self, include_timing: bool = True) -> dict:
        doc = {"response": self.response, "facts": self.facts,
               "links": self.links}
        if include_timing:
            doc["timing_ms"] = self.timing_ms
        return doc


class Pipeline:
    def __init__(self, linking_rules: CoreProgram, commonsense_rules: CoreProgram,
                 templates: TemplateSet, model: RelevanceModel, embedder,
                 generator, config: PipelineConfig | None = None,
                 detector_factory=None, registry=None):
        self.linking_rules = linking_rules
        self.commonsense_rules = commonsense_rules
        self.templates = templates
        self.model = model
        self.embedder = embedder
        self.generator = generator
        self.config = config or PipelineConfig()
        if self.config.mode not in MODES:
            raise ValueError(f"unknown pipeline mode {self.config.mode!r}")
        self.detector_factory = detector_factory or DictionaryMatcher
        self.registry = registry or default_registry()
        self._derived_preds = sorted(
            {c.head.pred for c in commonsense_rules.clauses
             if not c.head.pred.startswith(("aux_", "g_"))}
            - {"refers_to", "people"})

    @classmethod
    def from_files(cls, rules_dir=None, templates_path=None, **kwargs):
        rules_dir = Path(rules_dir or default_rules_dir())
        templates_path = Path(templates_path or default_templates_path())
        link_core = desugar(parse_program(
            (rules_dir / "graphwoz_linking.pl").read_text()))
        cs_core = desugar(parse_program(
            (rules_dir / "graphwoz_commonsense.pl").read_text()))
        templates = load_templates(templates_path.read_text())
        defaults = dict(model=relevance.heuristic_model(), embedder=HashEmbedder(),
                        generator=generation.MockGenerator())
        defaults.update(kwargs)
        return cls(link_core, cs_core, templates, **defaults)

    def run_turn(self, state: DialogueState, utterance: str,
                 mention_spans=None) -> TurnResult:
        timing: dict[str, float] = {}
        mode = self.config.mode

        def stage(name, fn):
            start = time.perf_counter()
            out = fn()
            timing[name] = round((time.perf_counter() - start) * 1000.0, 3)
            return out

        turn_id = state.add_turn("user", utterance)
        links: list[dict] = []
        if mode != "nofacts":
            links = stage("linking", lambda: self._link(state, turn_id, utterance,
                                                        mention_spans))

        facts: list[VerbalizedFact] = []
        if mode in ("allfacts", "relevance", "relevance_logic"):
            facts = stage("facts", lambda: self._base_facts(state))
        if mode in ("allfacts", "relevance_logic"):
            facts += stage("derive", lambda: self._derived_facts(state))

        if mode in ("relevance", "relevance_logic"):
            ranked = stage("score", lambda: self._rank(state, facts))
        elif mode == "allfacts":
            ranked = [(f, 0.0) for f in facts]
        else:
            ranked = []

        prompt = stage("prompt", lambda: self._prompt(state, ranked, mode))
        response = stage("generate", lambda: self.generator.generate(prompt))
        state.add_turn("system", response)

        shown = {f.fact_id for f in prompt_facts(prompt, ranked)}
        return TurnResult(
            response=response,
            facts=[{"id": fact.fact_id, "text": fact.text,
                    "prob": round(prob, 9), "source_atom": fact.fact_id,
                    "derived": fact.derived, "in_prompt": fact.fact_id in shown}
                   for fact, prob in ranked],
            links=links,
            timing_ms=timing,
        )

    # --- stages ------------------------------------------------------------

    def _link(self, state: DialogueState, turn_id: str, utterance: str,
              mention_spans=None):
        if mention_spans is None:
            detector = self.detector_factory(state)
            mention_spans = linking.detect_mentions(utterance, detector)
        for span in mention_spans:
            state.add_mention(turn_id, span, utterance[span[0]:span[1]])
        results = linking.link_mentions(state, self.linking_rules,
                                        self.config.link_threshold,
                                        self.registry)
        return [{"mention": r.mention, "entity": entity, "prob": round(prob, 9)}
                for r in results for entity, prob in r.candidates
                if prob >= self.config.link_threshold]

    def _base_facts(self, state: DialogueState) -> list[VerbalizedFact]:
        plumbing_nodes = {n.id for n in state.graph.nodes.values()
                          if n.kind in ("utterance", "mention", "date", "time")}
        out = []
        for weight, pred, args in state.to_facts():
            if pred in _EXCLUDED_PREDICATES:
                continue
            if args and isinstance(args[0], str) and args[0] in plumbing_nodes:
                continue
            out.append(verbalize((pred, args), weight, state.graph,
                                 self.templates, derived=False))
        return out

    def _derived_facts(self, state: DialogueState) -> list[VerbalizedFact]:
        facts = state.to_facts()
        turn = state.turns[-1]
        facts.append((1.0, "new", (turn.id,)))
        gp = inference.ground(self.commonsense_rules, facts, self.registry)
        scope = state.current_turn_entities(self.config.link_threshold)
        out = []
        for pred in self._derived_preds:
            results, _errors = inference.query_all(
                gp, pred, scope, self.config.max_enum_facts)
            for (head_pred, args), prob in results:
                if gp.lookup(head_pred, args) in gp.det_facts:
                    continue  # also a base fact, already verbalized
                out.append(verbalize((head_pred, args), prob, state.graph,
                                     self.templates, derived=True))
        return out

    def _rank(self, state, facts):
        candidates = build_candidate_set(facts, state, self.embedder,
                                         self.config.link_threshold)
        return relevance.score_and_select(self.model, candidates, self.config.k)

    def _prompt(self, state, ranked, mode):
        history = [(t.speaker, t.text) for t in state.turns]
        if mode == "allfacts":
            return generation.shuffled_fact_prompt(
                history, [f.text for f, _ in ranked], self.config.seed,
                self.config.max_prompt_chars)
        if mode == "nofacts":
            return generation.build_prompt(history, [], 0,
                                           self.config.max_prompt_chars)
        return generation.build_prompt(history, [f.text for f, _ in ranked],
                                       self.config.k,
                                       self.config.max_prompt_chars)


def prompt_facts(prompt, ranked):
    shown_texts = set(prompt.facts)
    return [fact for fact, _ in ranked if fact.text in shown_texts]
