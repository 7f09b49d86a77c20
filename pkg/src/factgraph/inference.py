"""Grounding, exact probability queries, and weight learning.

The core program is grounded bottom-up against a fact set, stratum by
stratum; probability queries then restrict the ground program to the
backward-reachable slice of the query atom and enumerate every truth
assignment to the probabilistic facts in that slice, summing the weights of
the worlds whose least model entails the atom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .builtins import (BuiltinRegistry, UnboundArgumentError, compare,
                       default_registry)
from .rulelang import (FIXED, LEARNABLE, Atom, Clause, CoreProgram, Literal,
                       Var, Weight, Wildcard, term_vars)

MAX_ENUM_FACTS = 20


class GroundingError(ValueError):
    pass


class QueryTooHardError(ValueError):
    def __init__(self, n_facts, limit):
        super().__init__(
            f"query too hard for exact enumeration: {n_facts} probabilistic "
            f"facts in slice exceeds limit {limit}")


class LearningError(ValueError):
    pass


GroundAtom = tuple  # (pred, args)


@dataclass
class GroundProgram:
    atoms: list[GroundAtom] = field(default_factory=list)
    atom_ids: dict = field(default_factory=dict)
    rules: list[tuple[int, tuple[tuple[int, bool], ...]]] = field(default_factory=list)
    det_facts: set = field(default_factory=set)
    prob: dict = field(default_factory=dict)       # atom id -> weight
    learnable: dict = field(default_factory=dict)  # atom id -> switch pred
    strata: dict = field(default_factory=dict)
    pred_atoms: dict = field(default_factory=dict)
    unsafe_preds: set = field(default_factory=set)

    def intern(self, pred, args) -> int:
        key = (pred, tuple(args))
        idx = self.atom_ids.get(key)
        if idx is None:
            idx = len(self.atoms)
            self.atom_ids[key] = idx
            self.atoms.append(key)
            self.pred_atoms.setdefault(pred, []).append(idx)
        return idx

    def lookup(self, pred, args):
        return self.atom_ids.get((pred, tuple(args)))


def _ground_eq(a, b) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    return a == b


def _walk(term, bind):
    while isinstance(term, Var) and term in bind:
        term = bind[term]
    return term


def _subst(term, bind):
    term = _walk(term, bind)
    if isinstance(term, Atom):
        return Atom(term.pred, tuple(_subst(a, bind) for a in term.args))
    return term


def _is_ground(term) -> bool:
    if isinstance(term, Var) or term is Wildcard:
        return False
    if isinstance(term, Atom):
        return all(_is_ground(a) for a in term.args)
    return True


def _unify(a, b, bind):
    a = _walk(a, bind)
    b = _walk(b, bind)
    if a is Wildcard or b is Wildcard:
        return bind
    if isinstance(a, Var):
        new = dict(bind)
        new[a] = b
        return new
    if isinstance(b, Var):
        new = dict(bind)
        new[b] = a
        return new
    return bind if _ground_eq(a, b) else None


def _unify_args(patterns, values, bind):
    if len(patterns) != len(values):
        return None
    for p, v in zip(patterns, values):
        bind = _unify(p, v, bind)
        if bind is None:
            return None
    return bind


class _Grounder:
    def __init__(self, core: CoreProgram, registry: BuiltinRegistry):
        self.core = core
        self.registry = registry
        self.gp = GroundProgram(strata=dict(core.strata))
        self.switches = core.switch_by_pred()
        self.known: dict[str, list[tuple]] = {}   # pred -> list of arg tuples
        self.known_set: set = set()
        self.rule_instances: set = set()
        self.clauses_by_pred: dict[str, list[Clause]] = {}
        self._rename_counter = 0
        for clause in core.clauses:
            self.clauses_by_pred.setdefault(clause.head.pred, []).append(clause)

    def add_known(self, pred, args) -> bool:
        key = (pred, tuple(args))
        if key in self.known_set:
            return False
        self.known_set.add(key)
        self.known.setdefault(pred, []).append(tuple(args))
        return True

    def run(self, facts) -> GroundProgram:
        gp = self.gp
        for weight, pred, args in facts:
            if weight <= 0.0:
                continue
            idx = gp.intern(pred, args)
            if weight >= 1.0:
                gp.det_facts.add(idx)
            else:
                gp.prob[idx] = weight
            self.add_known(pred, args)
        for clause in self.core.clauses:
            if clause.is_fact():
                idx = gp.intern(clause.head.pred, clause.head.args)
                gp.det_facts.add(idx)
                self.add_known(clause.head.pred, clause.head.args)
        for atom, weight in self.core.prob_facts:
            if weight.value <= 0.0 and weight.kind == FIXED:
                continue
            idx = gp.intern(atom.pred, atom.args)
            gp.prob[idx] = weight.value
            if weight.kind == LEARNABLE:
                gp.learnable[idx] = atom.pred
            self.add_known(atom.pred, atom.args)
        for switch in self.core.switches:
            if not switch.params:
                if switch.weight.value <= 0.0 and switch.weight.kind == FIXED:
                    continue
                idx = gp.intern(switch.pred, ())
                gp.prob[idx] = switch.weight.value
                if switch.weight.kind == LEARNABLE:
                    gp.learnable[idx] = switch.pred
                self.add_known(switch.pred, ())

        rules = [c for c in self.core.clauses if not c.is_fact()]
        by_stratum: dict[int, list[Clause]] = {}
        for rule in rules:
            stratum = self.core.strata.get(rule.head.pred, 0)
            by_stratum.setdefault(stratum, []).append(rule)
        for stratum in sorted(by_stratum):
            self._saturate(by_stratum[stratum])
        return gp

    def _saturate(self, rules):
        changed = True
        while changed:
            changed = False
            for rule in rules:
                for head_args, conditions in self._instances(rule):
                    head_id = self.gp.intern(rule.head.pred, head_args)
                    instance = (head_id, tuple(sorted(set(conditions))))
                    if instance not in self.rule_instances:
                        self.rule_instances.add(instance)
                        self.gp.rules.append(instance)
                        changed = True
                    if self.add_known(rule.head.pred, head_args):
                        changed = True

    def _instances(self, rule):
        """Yield (ground head args, body condition ids) for one rule."""
        for bind, conditions in self._solve(list(rule.body), {}, [], rule):
            head_args = tuple(_subst(a, bind) for a in rule.head.args)
            if not all(_is_ground(a) for a in head_args):
                self.gp.unsafe_preds.add(rule.head.pred)
                continue
            yield head_args, conditions

    def _solve(self, remaining, bind, conditions, rule):
        if not remaining:
            yield bind, conditions
            return
        lit, rest = self._pick(remaining, bind, rule)
        if lit is None:
            self.gp.unsafe_preds.add(rule.head.pred)
            return
        atom = lit.atom
        args = tuple(_subst(a, bind) for a in atom.args)

        if atom.is_comparison():
            if compare(atom.pred, args[0], args[1]) != lit.negated:
                yield from self._solve(rest, bind, conditions, rule)
            return

        if atom.pred == "findall" and len(args) == 3:
            template, goal, out = args
            values = self._findall(template, goal)
            new_bind = _unify(out, values, bind)
            if new_bind is not None:
                yield from self._solve(rest, new_bind, conditions, rule)
            return

        if self.registry.has(atom.pred, len(args)):
            for ground_args in self.registry.evaluate(atom.pred, args):
                new_bind = _unify_args(args, ground_args, bind)
                if new_bind is not None:
                    yield from self._solve(rest, new_bind, conditions, rule)
            return

        switch = self.switches.get(atom.pred)
        if switch is not None and switch.params and not lit.negated:
            idx = self.gp.intern(atom.pred, args)
            if idx not in self.gp.prob:
                self.gp.prob[idx] = switch.weight.value
                if switch.weight.kind == LEARNABLE:
                    self.gp.learnable[idx] = atom.pred
            yield from self._solve(rest, bind, conditions + [(idx, False)], rule)
            return

        if lit.negated:
            # ground by now (the scheduler defers otherwise); lower strata
            # are complete, so an unknown atom makes the literal surely true
            key = (atom.pred, args)
            if key in self.known_set:
                idx = self.gp.intern(atom.pred, args)
                conditions = conditions + [(idx, True)]
            yield from self._solve(rest, bind, conditions, rule)
            return

        for fact_args in self.known.get(atom.pred, ()):
            new_bind = _unify_args(args, fact_args, bind)
            if new_bind is not None:
                idx = self.gp.intern(atom.pred, fact_args)
                yield from self._solve(rest, new_bind,
                                       conditions + [(idx, False)], rule)

    def _pick(self, remaining, bind, rule):
        """Choose the next evaluable literal; None when the branch is unsafe."""
        unready_builtin = None
        for i, lit in enumerate(remaining):
            atom = lit.atom
            args = tuple(_subst(a, bind) for a in atom.args)
            ground = all(_is_ground(a) for a in args)
            if atom.is_comparison():
                if ground:
                    return lit, remaining[:i] + remaining[i + 1:]
                continue
            if atom.pred == "findall" and len(args) == 3:
                template, goal, _out = args
                if not (term_vars(goal) - term_vars(template)):
                    return lit, remaining[:i] + remaining[i + 1:]
                continue
            if self.registry.has(atom.pred, len(args)):
                try:
                    next(self.registry.evaluate(atom.pred, args), None)
                except UnboundArgumentError:
                    unready_builtin = lit
                    continue
                return lit, remaining[:i] + remaining[i + 1:]
            if lit.negated:
                if ground:
                    return lit, remaining[:i] + remaining[i + 1:]
                continue
            return lit, remaining[:i] + remaining[i + 1:]
        if unready_builtin is not None:
            raise GroundingError(
                f"builtin {unready_builtin.atom.pred}/"
                f"{len(unready_builtin.atom.args)} called with unbound "
                f"required argument in rule for {rule.head.pred}/"
                f"{rule.head.arity} (line {rule.line})")
        return None, remaining  # only unsafe negations left

    # --- findall: deterministic-closure evaluation -------------------------

    def _findall(self, template, goal) -> tuple:
        values = set()
        for env in self._prove(goal, {}, 0):
            value = _subst(template, env)
            if _is_ground(value):
                values.add(value)
        return tuple(sorted(values, key=lambda v: (type(v).__name__, str(v))))

    def _prove(self, goal: Atom, bind, depth):
        """Top-down proof over the deterministic closure (prob facts present)."""
        if depth > 24:
            return
        args = tuple(_subst(a, bind) for a in goal.args)
        if goal.is_comparison():
            if all(_is_ground(a) for a in args) and compare(goal.pred, *args):
                yield bind
            return
        if self.registry.has(goal.pred, len(args)):
            for ground_args in self.registry.evaluate(goal.pred, args):
                new_bind = _unify_args(args, ground_args, bind)
                if new_bind is not None:
                    yield new_bind
            return
        for fact_args in self.known.get(goal.pred, ()):
            new_bind = _unify_args(args, fact_args, bind)
            if new_bind is not None:
                yield new_bind
        if goal.pred in self.gp.unsafe_preds:
            for clause in self.clauses_by_pred.get(goal.pred, ()):
                self._rename_counter += 1
                head, body = _rename(clause, self._rename_counter)
                env = _unify_args(head.args, args, bind)
                if env is None:
                    continue
                yield from self._prove_body(list(body), env, depth + 1)

    def _prove_body(self, literals, bind, depth):
        if not literals:
            yield bind
            return
        lit, rest = literals[0], literals[1:]
        atom = lit.atom
        if atom.pred == "findall" and len(atom.args) == 3:
            template, goal, out = (_subst(a, bind) for a in atom.args)
            values = self._findall(template, goal)
            env = _unify(out, values, bind)
            if env is not None:
                yield from self._prove_body(rest, env, depth)
            return
        if lit.negated:
            if next(self._prove(atom, bind, depth), None) is None:
                yield from self._prove_body(rest, bind, depth)
            return
        for env in self._prove(atom, bind, depth):
            yield from self._prove_body(rest, env, depth)


def _rename(clause: Clause, suffix: int):
    mapping = {}

    def rn(term):
        if isinstance(term, Var):
            return mapping.setdefault(term, Var(f"{term.name}__{suffix}"))
        if isinstance(term, Atom):
            return Atom(term.pred, tuple(rn(a) for a in term.args))
        return term

    head = Atom(clause.head.pred, tuple(rn(a) for a in clause.head.args))
    body = tuple(Literal(Atom(l.atom.pred, tuple(rn(a) for a in l.atom.args)),
                         negated=l.negated)
                 for l in clause.body)
    return head, body


def ground(core: CoreProgram, facts,
           registry: BuiltinRegistry | None = None) -> GroundProgram:
    """Ground a desugared core program against (weight, pred, args) facts."""
    return _Grounder(core, registry or default_registry()).run(facts)


# --- weighted model counting ----------------------------------------------


def _slice(gp: GroundProgram, roots):
    """Backward-reachable atom ids and the rules defining them."""
    by_head: dict[int, list] = {}
    for rule in gp.rules:
        by_head.setdefault(rule[0], []).append(rule)
    seen = set()
    stack = [r for r in roots if r is not None]
    sliced_rules = []
    while stack:
        idx = stack.pop()
        if idx in seen:
            continue
        seen.add(idx)
        for rule in by_head.get(idx, ()):
            sliced_rules.append(rule)
            for body_id, _neg in rule[1]:
                if body_id not in seen:
                    stack.append(body_id)
    return seen, sliced_rules


def _world_model(gp: GroundProgram, rules, true_facts: set) -> set:
    """Least model of the sliced rules for one truth assignment."""
    truths = set(true_facts)
    by_stratum: dict[int, list] = {}
    for rule in rules:
        pred = gp.atoms[rule[0]][0]
        by_stratum.setdefault(gp.strata.get(pred, 0), []).append(rule)
    for stratum in sorted(by_stratum):
        changed = True
        while changed:
            changed = False
            for head_id, body in by_stratum[stratum]:
                if head_id in truths:
                    continue
                if all((body_id in truths) != neg for body_id, neg in body):
                    truths.add(head_id)
                    changed = True
    return truths


def query(gp: GroundProgram, pred: str, args,
          max_enum_facts: int = MAX_ENUM_FACTS) -> float:
    """Exact probability of a ground atom by sliced world enumeration."""
    root = gp.lookup(pred, args)
    if root is None:
        return 0.0
    atom_set, rules = _slice(gp, [root])
    fact_ids = sorted(i for i in atom_set if i in gp.prob)
    if len(fact_ids) > max_enum_facts:
        raise QueryTooHardError(len(fact_ids), max_enum_facts)
    det = {i for i in atom_set if i in gp.det_facts}
    total = 0.0
    for mask in range(1 << len(fact_ids)):
        weight = 1.0
        true_facts = set(det)
        for bit, idx in enumerate(fact_ids):
            if mask >> bit & 1:
                weight *= gp.prob[idx]
                true_facts.add(idx)
            else:
                weight *= 1.0 - gp.prob[idx]
        if weight == 0.0:
            continue
        if root in _world_model(gp, rules, true_facts):
            total += weight
    return total


def query_all(gp: GroundProgram, pred: str, scope=(),
              max_enum_facts: int = MAX_ENUM_FACTS):
    """Probabilities of every ground atom of `pred` touching the scope.

    Returns (results, errors): results are ((pred, args), probability) pairs
    with zero-probability atoms omitted, in deterministic order.
    """
    scope_set = set(scope)

    def in_scope(args) -> bool:
        if not scope_set:
            return True
        for arg in args:
            if arg in scope_set:
                return True
            if isinstance(arg, tuple) and any(a in scope_set for a in arg):
                return True
        return False

    results = []
    errors = []
    for idx in gp.pred_atoms.get(pred, ()):
        _, args = gp.atoms[idx]
        if not in_scope(args):
            continue
        try:
            prob = query(gp, pred, args, max_enum_facts)
        except QueryTooHardError as exc:
            errors.append(((pred, args), exc))
            continue
        if prob > 0.0:
            results.append(((pred, args), prob))
    def term_key(value):
        if isinstance(value, tuple):
            return (2, "", 0, tuple(term_key(v) for v in value))
        if isinstance(value, (int, float)):
            return (0, "", value, ())
        return (1, str(value), 0, ())

    results.sort(key=lambda r: (r[0][0], tuple(term_key(a) for a in r[0][1])))
    return results, errors


# --- learning from interpretations ----------------------------------------


def learn_weights(core: CoreProgram, facts, interpretations,
                  epochs: int = 100, tol: float = 1e-9,
                  registry: BuiltinRegistry | None = None,
                  max_enum_facts: int = MAX_ENUM_FACTS):
    """EM estimation of learnable switch weights from partial interpretations.

    Each interpretation maps (pred, args) ground atoms to observed truth
    values. E-step: posterior of each switch fact given the observations, by
    conditioned world enumeration. M-step: mean posterior. Returns
    (updated core, final log-likelihood, per-epoch log-likelihoods).
    """
    learnable_preds = sorted({s.pred for s in core.switches
                              if s.weight.kind == LEARNABLE})
    if not learnable_preds:
        raise LearningError("program has no learnable weights")
    gp = ground(core, facts, registry)
    weights = {s.pred: s.weight.value for s in core.switches
               if s.weight.kind == LEARNABLE}
    instances = {pred: [i for i, p in gp.learnable.items() if p == pred]
                 for pred in learnable_preds}

    # per interpretation: the slice, its prob facts, and every world
    # (as the set of true prob facts) consistent with the observations
    prepared = []
    for n, interp in enumerate(interpretations):
        roots = []
        for (pred, args), observed in interp.items():
            idx = gp.lookup(pred, args)
            if idx is None and observed:
                raise LearningError(
                    f"interpretation {n} observes an atom that is never derivable")
            if idx is not None:
                roots.append(idx)
        atom_set, rules = _slice(gp, roots)
        fact_ids = sorted(i for i in atom_set if i in gp.prob)
        if len(fact_ids) > max_enum_facts:
            raise QueryTooHardError(len(fact_ids), max_enum_facts)
        det = {i for i in atom_set if i in gp.det_facts}
        consistent = []
        for mask in range(1 << len(fact_ids)):
            chosen = {idx for bit, idx in enumerate(fact_ids) if mask >> bit & 1}
            model = _world_model(gp, rules, det | chosen)
            ok = True
            for (pred, args), observed in interp.items():
                idx = gp.lookup(pred, args)
                if (idx is not None and idx in model) != observed:
                    ok = False
                    break
            if ok:
                consistent.append(frozenset(chosen))
        if not consistent:
            raise LearningError(
                f"interpretation {n} has probability 0 under all weights")
        prepared.append((n, fact_ids, consistent))

    def world_weight(fact_ids, chosen):
        w = 1.0
        for idx in fact_ids:
            p = weights.get(gp.learnable.get(idx), gp.prob[idx])
            w *= p if idx in chosen else 1.0 - p
        return w

    ll_curve = []
    for _epoch in range(epochs):
        expected = {pred: [] for pred in learnable_preds}
        ll = 0.0
        for n, fact_ids, consistent in prepared:
            z = sum(world_weight(fact_ids, chosen) for chosen in consistent)
            if z <= 0.0:
                raise LearningError(
                    f"interpretation {n} has probability 0 under current weights")
            ll += math.log(z)
            in_slice = set(fact_ids)
            for pred in learnable_preds:
                for inst in instances[pred]:
                    if inst in in_slice:
                        num = sum(world_weight(fact_ids, chosen)
                                  for chosen in consistent if inst in chosen)
                        expected[pred].append(num / z)
                    else:
                        expected[pred].append(weights[pred])
        ll_curve.append(ll)
        max_delta = 0.0
        for pred in learnable_preds:
            if expected[pred]:
                new = sum(expected[pred]) / len(expected[pred])
                max_delta = max(max_delta, abs(new - weights[pred]))
                weights[pred] = new
        if max_delta < tol:
            break

    new_switches = [replace(s, weight=Weight(FIXED, weights[s.pred]))
                    if s.weight.kind == LEARNABLE else s
                    for s in core.switches]
    new_prob_facts = [(atom, Weight(FIXED, weights[atom.pred]))
                      if weight.kind == LEARNABLE else (atom, weight)
                      for atom, weight in core.prob_facts]
    updated = CoreProgram(clauses=list(core.clauses),
                          prob_facts=new_prob_facts,
                          switches=new_switches,
                          strata=dict(core.strata))
    return updated, ll_curve[-1], ll_curve
