"""Command-line tooling: inference queries, linking reports, dialogue replay,
corpus evaluation and augmentation, and the two training loops."""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
import sys
from collections import Counter
from datetime import date, timedelta
from pathlib import Path

import click

from . import __version__, fixtures, inference, linking, relevance
from .generation import MockGenerator
from .kg import load_dataset
from .pipeline import MODES, Pipeline, PipelineConfig, default_rules_dir
from .relevance import RelevanceModel, build_candidate_set
from .rulelang import (DETERMINISTIC, Atom, CoreProgram, RuleSyntaxError,
                       StratificationError, desugar, format_atom, format_clause,
                       parse_program)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:12]


def _header(seed, *inputs: Path) -> dict:
    return {"tool": f"factgraph {__version__}", "seed": seed,
            "inputs": {str(p): _digest(p) for p in inputs}}


def _parse_query(text: str) -> Atom:
    text = text.strip().rstrip(".")
    try:
        program = parse_program(text + ".")
    except RuleSyntaxError as exc:
        raise click.UsageError(f"bad query {text!r}: {exc}")
    clause = program.clauses[0]
    if clause.body or clause.weight.kind != DETERMINISTIC:
        raise click.UsageError(f"query must be a single atom, got {text!r}")
    return clause.head


def _load_rules(path: Path, **kwargs) -> CoreProgram:
    try:
        return desugar(parse_program(path.read_text()), **kwargs)
    except (RuleSyntaxError, StratificationError) as exc:
        raise click.ClickException(f"{path}: {exc}")


def _load_facts(path: Path) -> list[tuple[float, str, tuple]]:
    """A facts file is a rule file containing only (weighted) facts."""
    program = parse_program(path.read_text())
    facts = []
    for clause in program.clauses:
        if clause.body:
            raise click.ClickException(
                f"{path}: {format_clause(clause)} is a rule, not a fact")
        weight = 1.0 if clause.weight.kind == DETERMINISTIC else clause.weight.value
        facts.append((weight, clause.head.pred, clause.head.args))
    return facts


def _load_dataset_file(path: Path):
    try:
        return load_dataset(path.open())
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise click.ClickException(f"{path}: invalid dataset: {exc}")


def _emit(doc: dict, output: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if output:
        Path(output).write_text(text + "\n")
    else:
        click.echo(text)


@click.group()
@click.version_option(__version__, prog_name="factgraph")
def main() -> None:
    """Knowledge-grounded dialogue response tooling."""


_rules_opt = click.option("--rules", type=click.Path(exists=True),
                          default=None, help="Rule directory.")
_seed_opt = click.option("--seed", type=int, default=0, show_default=True)
_k_opt = click.option("--k", type=int, default=10, show_default=True,
                      help="Facts per prompt.")
_mode_opt = click.option("--mode", type=click.Choice(MODES),
                         default="relevance_logic", show_default=True)
_out_opt = click.option("-o", "--output", type=click.Path(), default=None,
                        help="Write JSON here instead of stdout.")


# --- inference --------------------------------------------------------------


@main.command()
@click.argument("rules_file", type=click.Path(exists=True, path_type=Path))
@click.argument("query")
@click.option("--facts", "facts_file", type=click.Path(exists=True, path_type=Path),
              default=None, help="Extra ground facts (.pl of facts).")
@click.option("--max-enum-facts", type=int, default=inference.MAX_ENUM_FACTS,
              show_default=True)
def infer(rules_file: Path, query: str, facts_file: Path | None,
          max_enum_facts: int) -> None:
    """Print the exact probability of QUERY under RULES_FILE."""
    core = _load_rules(rules_file)
    facts = _load_facts(facts_file) if facts_file else []
    atom = _parse_query(query)
    try:
        gp = inference.ground(core, facts)
        prob = inference.query(gp, atom.pred, atom.args, max_enum_facts)
    except (inference.GroundingError, inference.QueryTooHardError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{prob:.9f}")


@main.command("learn-weights")
@click.argument("rules_file", type=click.Path(exists=True, path_type=Path))
@click.argument("facts_file", type=click.Path(exists=True, path_type=Path))
@click.argument("interp_file", type=click.Path(exists=True, path_type=Path))
@click.option("--epochs", type=int, default=100, show_default=True)
@click.option("-o", "--output", type=click.Path(), default=None,
              help="Write the learned rules here instead of stdout.")
def learn_weights_cmd(rules_file: Path, facts_file: Path, interp_file: Path,
                      epochs: int, output: str | None) -> None:
    """Fit learnable rule weights by EM from partial interpretations.

    INTERP_FILE is a JSON list of interpretations, each an object mapping an
    atom string (e.g. "burglary" or "calls(mary)") to true/false.
    """
    core = _load_rules(rules_file)
    facts = _load_facts(facts_file)
    interpretations = []
    for obs in json.loads(interp_file.read_text()):
        parsed = {}
        for atom_text, value in obs.items():
            atom = _parse_query(atom_text)
            parsed[(atom.pred, atom.args)] = bool(value)
        interpretations.append(parsed)
    try:
        learned, ll, curve = inference.learn_weights(core, facts,
                                                     interpretations,
                                                     epochs=epochs)
    except inference.LearningError as exc:
        raise click.ClickException(str(exc))
    header = _header(None, rules_file, facts_file, interp_file)
    lines = [f"% {json.dumps(header)}",
             f"% final log-likelihood {ll:.6f} after {len(curve)} EM iterations"]
    for atom, weight in learned.prob_facts:
        lines.append(f"{weight.value:.6f}::{format_atom(atom)}.")
    for switch in learned.switches:
        head = format_atom(Atom(switch.pred, switch.params))
        lines.append(f"{switch.weight.value:.6f}::{head}.")
    for clause in learned.clauses:
        lines.append(format_clause(clause))
    text = "\n".join(lines) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        click.echo(text, nl=False)


# --- dataset replay ---------------------------------------------------------


def _build_pipeline(rules, mode, k, seed, gold_fact_ids=None) -> Pipeline:
    config = PipelineConfig(mode=mode, k=k, seed=seed)
    return Pipeline.from_files(rules_dir=rules or default_rules_dir(),
                               config=config,
                               generator=MockGenerator(gold_fact_ids or []))


def _user_turns(doc: dict):
    for entry in doc.get("dialogue", []):
        if entry.get("speaker", "user") == "user":
            spans = entry.get("mentions")
            yield entry["text"], ([tuple(s) for s in spans]
                                  if spans is not None else None)


@main.command()
@click.argument("dataset", type=click.Path(exists=True, path_type=Path))
@_rules_opt
@_mode_opt
@_k_opt
@_seed_opt
@_out_opt
def respond(dataset: Path, rules, mode, k, seed, output) -> None:
    """Replay DATASET's user turns through the pipeline and print responses."""
    state, doc = _load_dataset_file(dataset)
    pipeline = _build_pipeline(rules, mode, k, seed, doc.get("gold_fact_ids"))
    turns = []
    for text, spans in _user_turns(doc):
        result = pipeline.run_turn(state, text, spans)
        turns.append({"utterance": text, **result.payload(include_timing=False)})
    _emit({"header": _header(seed, dataset), "mode": mode, "turns": turns},
          output)


@main.command()
@click.argument("dataset", type=click.Path(exists=True, path_type=Path))
@_rules_opt
@click.option("--threshold", type=float, default=linking.DEFAULT_LINK_THRESHOLD,
              show_default=True, help="Minimum link probability.")
@_out_opt
def link(dataset: Path, rules, threshold, output) -> None:
    """Report entity-link candidates for every user turn in DATASET."""
    state, doc = _load_dataset_file(dataset)
    rules_dir = Path(rules or default_rules_dir())
    core = _load_rules(rules_dir / "graphwoz_linking.pl")
    report = []
    for text, spans in _user_turns(doc):
        turn_id = state.add_turn("user", text)
        if spans is None:
            detector = linking.DictionaryMatcher(state)
            spans = linking.detect_mentions(text, detector)
        for span in spans:
            state.add_mention(turn_id, span, text[span[0]:span[1]])
        results = linking.link_mentions(state, core, threshold)
        report.append({
            "utterance": text,
            "mentions": [{"mention": r.mention,
                          "candidates": [{"entity": e, "prob": round(p, 9)}
                                         for e, p in r.candidates]}
                         for r in results],
        })
    _emit({"header": _header(None, dataset), "turns": report}, output)


# --- evaluation -------------------------------------------------------------


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: list[str], references: list[str]) -> float:
    """Corpus BLEU-4: geometric mean of clipped 1-4-gram precisions with
    brevity penalty, whitespace tokens, no smoothing."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference count mismatch")
    if not hypotheses:
        raise ValueError("empty corpus")
    hyp_len = ref_len = 0
    matches = [0] * 4
    totals = [0] * 4
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens, ref_tokens = hyp.split(), ref.split()
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, 5):
            hyp_counts = _ngrams(hyp_tokens, n)
            ref_counts = _ngrams(ref_tokens, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(min(c, ref_counts[g])
                                  for g, c in hyp_counts.items())
    log_precision = 0.0
    for m, t in zip(matches, totals):
        if t == 0:
            continue  # no n-grams of this order anywhere; skip it
        if m == 0:
            return 0.0
        log_precision += 0.25 * math.log(m / t)
    if hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_precision)


@main.command("eval")
@click.argument("dataset", type=click.Path(exists=True, path_type=Path))
@_rules_opt
@_mode_opt
@_k_opt
@_seed_opt
@_out_opt
def eval_cmd(dataset: Path, rules, mode, k, seed, output) -> None:
    """Corpus BLEU-4 plus fact-selection precision/recall@K on DATASET."""
    state, doc = _load_dataset_file(dataset)
    gold_responses = doc.get("gold_responses")
    if not gold_responses:
        raise click.ClickException("dataset has no gold_responses")
    gold_fact_ids = doc.get("gold_fact_ids") or []
    pipeline = _build_pipeline(rules, mode, k, seed, gold_fact_ids)
    hypotheses = []
    precisions, recalls = [], []
    for i, (text, spans) in enumerate(_user_turns(doc)):
        result = pipeline.run_turn(state, text, spans)
        hypotheses.append(result.response)
        gold = set(gold_fact_ids[i]) if i < len(gold_fact_ids) else set()
        if gold:
            selected = {f["id"] for f in result.facts if f["in_prompt"]}
            hit = len(selected & gold)
            precisions.append(hit / len(selected) if selected else 0.0)
            recalls.append(hit / len(gold))
    if len(hypotheses) != len(gold_responses):
        raise click.ClickException(
            f"{len(hypotheses)} user turns but {len(gold_responses)} gold responses")
    report = {
        "header": _header(seed, dataset),
        "mode": mode,
        "turns": len(hypotheses),
        "bleu4": corpus_bleu(hypotheses, gold_responses),
        "meteor": "n/a",
        "bertscore": "n/a",
        "unieval": "n/a",
    }
    if precisions:
        report["precision_at_k"] = sum(precisions) / len(precisions)
        report["recall_at_k"] = sum(recalls) / len(recalls)
    _emit(report, output)


# --- augmentation -----------------------------------------------------------

DEFAULT_NAME_POOLS = {
    "person": [f"{f} {l}" for f in fixtures.FIRST_NAMES
               for l in fixtures.LAST_NAMES],
    "room": fixtures.ROOM_NAMES,
    "group": fixtures.GROUP_NAMES,
    "event": fixtures.EVENT_NAMES,
}

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def augment_corpus(doc: dict, name_pools: dict, new_base_date: str,
                   seed: int, max_retries: int = 50) -> dict:
    """Replace entity names consistently and shift every date so relative
    terms stay correct; times are untouched. Deterministic for a given seed."""
    rng = random.Random(seed)
    doc = json.loads(json.dumps(doc))  # deep copy
    original_today = doc.get("now", {}).get("date", "2024-01-01")
    shift = date.fromisoformat(new_base_date) - date.fromisoformat(original_today)

    def shift_date(value):
        if isinstance(value, str) and _DATE_RE.match(value):
            return (date.fromisoformat(value) + shift).isoformat()
        return value

    mapping: dict[str, str] = {}
    used: set[str] = set()
    for node in doc.get("kb", {}).get("nodes", []):
        attrs = node.get("attrs", {})
        name_attr = attrs.get("name")
        if name_attr is None:
            continue
        old = name_attr["value"] if isinstance(name_attr, dict) else name_attr
        pool = name_pools.get(node.get("kind"),
                              sorted({n for p in name_pools.values() for n in p}))
        for attempt in range(max_retries + 1):
            new = rng.choice(pool)
            if new.lower() != old.lower() and new.lower() not in used:
                break
        else:
            raise click.ClickException(
                f"could not sample a fresh name for {old!r} "
                f"after {max_retries} retries")
        used.add(new.lower())
        mapping[old] = new
        if isinstance(name_attr, dict):
            name_attr["value"] = new
        else:
            attrs["name"] = new

    for node in doc.get("kb", {}).get("nodes", []):
        for key, attr in node.get("attrs", {}).items():
            if isinstance(attr, dict):
                attr["value"] = shift_date(attr["value"])
            else:
                node["attrs"][key] = shift_date(attr)
    if "now" in doc:
        doc["now"]["date"] = new_base_date

    # single pass with alternation, longest names first, so "Jill Martinez"
    # wins over a bare "Jill" and replacements never chain
    by_lower = {old.lower(): new for old, new in mapping.items()}
    pattern = re.compile(
        r"\b(" + "|".join(re.escape(old) for old in
                          sorted(mapping, key=len, reverse=True)) + r")\b",
        re.IGNORECASE)

    def rewrite(text: str) -> str:
        if not mapping:
            return text
        return pattern.sub(lambda m: by_lower[m.group(1).lower()], text)

    for entry in doc.get("dialogue", []):
        entry["text"] = rewrite(entry["text"])
        entry.pop("mentions", None)  # spans no longer valid after rewriting
    if "gold_responses" in doc:
        doc["gold_responses"] = [rewrite(t) for t in doc["gold_responses"]]
    return doc


@main.command()
@click.argument("dataset", type=click.Path(exists=True, path_type=Path))
@click.option("--base-date", required=True, help="New date for 'today' (ISO).")
@click.option("--names", "names_file", type=click.Path(exists=True, path_type=Path),
              default=None, help="JSON name pools per node kind.")
@_seed_opt
@_out_opt
def augment(dataset: Path, base_date, names_file, seed, output) -> None:
    """Rewrite DATASET with fresh entity names and shifted dates."""
    _state, doc = _load_dataset_file(dataset)
    pools = dict(DEFAULT_NAME_POOLS)
    if names_file:
        pools.update(json.loads(names_file.read_text()))
    out = augment_corpus(doc, pools, base_date, seed)
    out["header"] = _header(seed, dataset)
    _emit(out, output)


# --- relevance training -----------------------------------------------------


def build_training_corpus(state, doc: dict, pipeline: Pipeline):
    """Per user turn: (gold-id set, gold response, candidate set). The gold
    system response, not the generated one, goes into the history."""
    gold_responses = doc.get("gold_responses") or []
    gold_fact_ids = doc.get("gold_fact_ids") or []
    corpus = []
    for i, (text, spans) in enumerate(_user_turns(doc)):
        turn_id = state.add_turn("user", text)
        pipeline._link(state, turn_id, text, spans)
        facts = pipeline._base_facts(state) + pipeline._derived_facts(state)
        candidates = build_candidate_set(facts, state, pipeline.embedder,
                                         pipeline.config.link_threshold)
        gold = gold_responses[i] if i < len(gold_responses) else ""
        ids = set(gold_fact_ids[i]) if i < len(gold_fact_ids) else set()
        corpus.append(({"gold_ids": ids}, gold, candidates))
        state.add_turn("system", gold or "(no response)")
    return corpus


def mock_scorer(info, fact, _gold) -> float:
    return 0.9 if fact.fact_id in info["gold_ids"] else 0.1


@main.command("train-relevance")
@click.argument("dataset", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--output", type=click.Path(), required=True,
              help="Model file to write.")
@_rules_opt
@_k_opt
@_seed_opt
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--lr", type=float, default=0.05, show_default=True)
@click.option("--hidden", type=int, default=16, show_default=True)
def train_relevance(dataset: Path, output, rules, k, seed, epochs, lr,
                    hidden) -> None:
    """Train the relevance scorer on DATASET with the mock likelihood scorer."""
    state, doc = _load_dataset_file(dataset)
    if not doc.get("gold_fact_ids"):
        raise click.ClickException("dataset has no gold_fact_ids")
    pipeline = _build_pipeline(rules, "relevance_logic", k, seed)
    corpus = build_training_corpus(state, doc, pipeline)
    model = RelevanceModel(hidden=hidden, seed=seed)
    result = relevance.train(model, corpus, mock_scorer, k=k, epochs=epochs,
                             lr=lr, seed=seed)
    doc_out = json.loads(result.model.to_json())
    doc_out["header"] = _header(seed, dataset)
    doc_out["losses"] = result.losses
    Path(output).write_text(json.dumps(doc_out, indent=2) + "\n")
    click.echo(f"wrote {output}; final loss {result.losses[-1]:.6f}")


# --- service ----------------------------------------------------------------


@main.command()
@click.option("--port", type=int, default=None,
              help="Listen port (default FACTGRAPH_PORT or 8040).")
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(port, host) -> None:
    """Run the HTTP chat-session API."""
    import os

    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=host,
                port=port or int(os.environ.get("FACTGRAPH_PORT", "8040")))


if __name__ == "__main__":
    sys.exit(main())
