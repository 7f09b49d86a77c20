"""Fact relevance: feature extraction, feedforward scoring, and training.

Each candidate fact gets a 4-dim feature vector (cosine to the last
utterance, cosine to the last two utterances, min-max normalized BM25,
recency of its entities) which a small tanh network maps to a logit;
softmax over the candidate set gives the per-fact relevance probability.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import httpx
import numpy as np

from .kg import DialogueState
from .verbalizer import VerbalizedFact

EMBED_DIM = 256
FEATURE_DIM = 4


class EmbedderError(RuntimeError):
    pass


class HashEmbedder:
    """Deterministic character 3-gram hashing embedder (test substitute for a
    sentence encoder); identical text always maps to the same unit vector."""

    dim = EMBED_DIM

    def embed(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            s = text.lower()
            if len(s) < 3:
                s = s + "\x00" * (3 - len(s))
            for i in range(len(s) - 2):
                gram = s[i:i + 3].encode("utf-8", "replace")
                idx = int.from_bytes(hashlib.md5(gram).digest()[:4], "big") % self.dim
                out[row, idx] += 1.0
            norm = np.linalg.norm(out[row])
            if norm == 0.0:
                out[row, 0] = 1.0
            else:
                out[row] /= norm
        return out


class ExternalEmbedder:
    """HTTP embedder: POST {"texts": [...]} -> {"vectors": [[...], ...]}."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def embed(self, texts: list[str]) -> np.ndarray:
        try:
            resp = httpx.post(self.url, json={"texts": texts}, timeout=self.timeout)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise EmbedderError(f"embedder unreachable: {exc}") from exc
        vectors = np.asarray(resp.json()["vectors"], dtype=float)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return vectors / norms


def cosine_features(fact: VerbalizedFact, state: DialogueState,
                    embedder) -> tuple[float, float]:
    """Cosine of the fact text with the last one and last two utterances."""
    history = [t.text for t in state.turns]
    if not history:
        raise ValueError("cosine features need at least one utterance")
    contexts = [history[-1], " ".join(history[-2:])]
    vectors = embedder.embed([fact.text] + contexts)
    z = vectors[0]
    cos_k1 = float(np.dot(z, vectors[1]))
    cos_k2 = float(np.dot(z, vectors[2])) if len(history) > 1 else cos_k1
    return cos_k1, cos_k2


def bm25_scores(query: str, docs: list[str], k1: float = 1.2,
                b: float = 0.75) -> list[float]:
    """Okapi BM25 of each document against the query (whitespace tokens)."""
    if not docs:
        raise ValueError("bm25_scores needs a nonempty document list")
    doc_tokens = [d.lower().split() for d in docs]
    query_tokens = query.lower().split()
    n_docs = len(docs)
    avgdl = sum(len(t) for t in doc_tokens) / n_docs
    df: dict[str, int] = {}
    for tokens in doc_tokens:
        for term in set(tokens):
            df[term] = df.get(term, 0) + 1
    scores = []
    for tokens in doc_tokens:
        score = 0.0
        for term in query_tokens:
            f = tokens.count(term)
            if f == 0:
                continue
            idf = math.log(1.0 + (n_docs - df[term] + 0.5) / (df[term] + 0.5))
            denom = f + k1 * (1.0 - b + b * len(tokens) / avgdl) if avgdl else f + k1
            score += idf * f * (k1 + 1.0) / denom
        scores.append(score)
    return scores


def normalize_bm25(scores: list[float]) -> list[float]:
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return [0.5] * len(scores)
    return [(s - lo) / (hi - lo) for s in scores]


def recency_score(fact: VerbalizedFact, state: DialogueState,
                  link_threshold: float = 0.1) -> float:
    """Saliency of the fact's entities: strongest refers_to edge, halved per
    elapsed user turn since that mention."""
    mention_turn = {m.id: m.turn for m in state.mentions}
    user_turns = [t.id for t in state.turns if t.speaker == "user"]
    turn_pos = {tid: i for i, t in enumerate(state.turns) for tid in [t.id]}
    best = 0.0
    for entity in fact.entity_args:
        edges = [e for e in state.graph.edges
                 if e.label == "refers_to" and e.dst == entity
                 and e.prob >= link_threshold and e.src in mention_turn]
        if not edges:
            continue
        top = max(edges, key=lambda e: (e.prob, turn_pos.get(mention_turn[e.src], -1)))
        turn_id = mention_turn[top.src]
        elapsed = sum(1 for t in user_turns
                      if turn_pos.get(t, -1) > turn_pos.get(turn_id, -1))
        best = max(best, top.prob * 2.0 ** (-elapsed))
    return best


@dataclass
class CandidateSet:
    facts: list[VerbalizedFact]
    features: np.ndarray  # (n, 4)
    probabilities: np.ndarray | None = None


def build_candidate_set(facts: list[VerbalizedFact], state: DialogueState,
                        embedder, link_threshold: float = 0.1) -> CandidateSet:
    if not facts:
        return CandidateSet([], np.zeros((0, FEATURE_DIM)))
    query = state.turns[-1].text if state.turns else ""
    raw_bm25 = bm25_scores(query, [f.text for f in facts])
    bm25_norm = normalize_bm25(raw_bm25)
    rows = []
    for fact, bm in zip(facts, bm25_norm):
        cos_k1, cos_k2 = cosine_features(fact, state, embedder)
        rows.append([cos_k1, cos_k2, bm, recency_score(fact, state, link_threshold)])
    return CandidateSet(facts, np.asarray(rows))


class RelevanceModel:
    """4 -> H -> 1 feedforward scorer with tanh hidden units."""

    VERSION = 1

    def __init__(self, hidden: int = 16, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.hidden = hidden
        self.w1 = rng.uniform(-0.1, 0.1, size=(hidden, FEATURE_DIM))
        self.b1 = rng.uniform(-0.1, 0.1, size=hidden)
        self.w2 = rng.uniform(-0.1, 0.1, size=hidden)
        self.b2 = float(rng.uniform(-0.1, 0.1))
        self.seed = seed

    def logits(self, features: np.ndarray) -> np.ndarray:
        hidden = np.tanh(features @ self.w1.T + self.b1)
        return hidden @ self.w2 + self.b2

    def params(self):
        return [self.w1, self.b1, self.w2, np.array([self.b2])]

    def set_flat(self, flat: np.ndarray):
        h, d = self.hidden, FEATURE_DIM
        self.w1 = flat[:h * d].reshape(h, d).copy()
        self.b1 = flat[h * d:h * d + h].copy()
        self.w2 = flat[h * d + h:h * d + 2 * h].copy()
        self.b2 = float(flat[h * d + 2 * h])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def to_json(self) -> str:
        return json.dumps({
            "version": self.VERSION, "hidden": self.hidden,
            "feature_dim": FEATURE_DIM, "seed": self.seed,
            "w1": self.w1.tolist(), "b1": self.b1.tolist(),
            "w2": self.w2.tolist(), "b2": self.b2,
        })

    @classmethod
    def from_json(cls, text: str) -> "RelevanceModel":
        doc = json.loads(text)
        model = cls(hidden=doc["hidden"], seed=doc.get("seed", 0))
        model.w1 = np.asarray(doc["w1"], dtype=float)
        model.b1 = np.asarray(doc["b1"], dtype=float)
        model.w2 = np.asarray(doc["w2"], dtype=float)
        model.b2 = float(doc["b2"])
        return model


def heuristic_model() -> RelevanceModel:
    """Untrained default: a positive vote per feature (near-linear tanh)."""
    model = RelevanceModel(hidden=FEATURE_DIM, seed=0)
    model.w1 = np.eye(FEATURE_DIM) * 2.0
    model.b1 = np.zeros(FEATURE_DIM)
    model.w2 = np.array([2.0, 1.0, 2.0, 2.0])
    model.b2 = 0.0
    return model


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def score_and_select(model: RelevanceModel, candidates: CandidateSet,
                     k: int = 10) -> list[tuple[VerbalizedFact, float]]:
    """Top-k facts with probabilities normalized over the whole candidate set;
    ties break on ascending fact text."""
    if not candidates.facts:
        return []
    logits = model.logits(candidates.features)
    probs = _softmax(logits)
    candidates.probabilities = probs
    order = sorted(range(len(probs)),
                   key=lambda i: (-probs[i], candidates.facts[i].text))
    return [(candidates.facts[i], float(probs[i])) for i in order[:k]]


def _loss_and_logit_grad(logits: np.ndarray, scorer_values: np.ndarray, k: int):
    """Marginal-likelihood loss over the current top-k and its d(loss)/d(logit)."""
    order = np.argsort(-logits, kind="stable")[:k]
    sel_logits = logits[order]
    q = _softmax(sel_logits)
    s = scorer_values[order]
    total = float(np.dot(s, q))
    if total <= 0.0 or not np.isfinite(total):
        raise FloatingPointError(f"non-finite or zero marginal likelihood {total}")
    grad = np.zeros_like(logits)
    grad[order] = -q * (s - total) / total
    return -math.log(total), grad


def loss_and_grad(model: RelevanceModel, features: np.ndarray,
                  scorer_values: np.ndarray, k: int):
    """Loss for one turn plus gradients w.r.t. every parameter."""
    hidden_in = features @ model.w1.T + model.b1
    hidden = np.tanh(hidden_in)
    logits = hidden @ model.w2 + model.b2
    loss, dlogits = _loss_and_logit_grad(logits, scorer_values, k)
    dw2 = hidden.T @ dlogits
    db2 = float(dlogits.sum())
    dhidden = np.outer(dlogits, model.w2) * (1.0 - hidden ** 2)
    dw1 = dhidden.T @ features
    db1 = dhidden.sum(axis=0)
    return loss, [dw1, db1, dw2, np.array([db2])]


@dataclass
class TrainResult:
    model: RelevanceModel
    losses: list[float] = field(default_factory=list)


def train(model: RelevanceModel, corpus, scorer, k: int = 10,
          epochs: int = 20, lr: float = 0.05, seed: int = 0,
          momentum: float = 0.9) -> TrainResult:
    """SGD with momentum on the marginal-likelihood loss.

    `corpus` is a list of (state, gold_response, CandidateSet); `scorer`
    maps (state, fact, gold_response) to P(response | history, fact).
    """
    rng = np.random.default_rng(seed)
    velocity = [np.zeros_like(p) for p in model.params()]
    losses = []
    corpus = list(corpus)
    for _epoch in range(epochs):
        epoch_loss = 0.0
        n_turns = 0
        order = rng.permutation(len(corpus))
        for turn_index in order:
            state, gold, candidates = corpus[turn_index]
            if not candidates.facts:
                continue
            scorer_values = np.array(
                [float(scorer(state, fact, gold)) for fact in candidates.facts])
            loss, grads = loss_and_grad(model, candidates.features,
                                        scorer_values, k)
            params = model.params()
            for i, (p, g) in enumerate(zip(params, grads)):
                velocity[i] = momentum * velocity[i] - lr * g
                p += velocity[i]
            model.b2 = float(params[3][0])
            epoch_loss += loss
            n_turns += 1
        losses.append(epoch_loss / max(n_turns, 1))
    return TrainResult(model, losses)
