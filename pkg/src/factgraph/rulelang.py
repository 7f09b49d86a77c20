"""Parser and core-form transforms for the probabilistic rule language.

Statements look like Prolog clauses, optionally prefixed by a probability:

    0.6::refers_to(M,E) :- mention(U,M), name(E,N), jw_similarity(N,S,O), O>0.9.
    t(_)::linked(M,E) :- candidate(M,E).
    room_free(R,T) :- room(R), \\+(location(E,R), busy(E,T)).

Desugaring rewrites weighted rules into a Bernoulli switch fact plus a
deterministic rule, and negated conjunctions into auxiliary predicates, so
that downstream grounding only sees deterministic rules, probabilistic
ground facts, and plain negated atoms.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace


class QStr(str):
    """Constant that was written as a double-quoted string."""


@dataclass(frozen=True)
class Var:
    name: str


class _WildcardType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "_"


Wildcard = _WildcardType()

Term = object  # str (symbol) | QStr | int | float | Var | Wildcard

COMPARISON_OPS = (">=", "=<", "<", ">", "==", "\\==")


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    def is_comparison(self) -> bool:
        return self.pred in COMPARISON_OPS


@dataclass(frozen=True)
class Literal:
    atom: Atom | None = None
    negated: bool = False
    group: tuple["Literal", ...] | None = None  # negated conjunction

    def __post_init__(self):
        if self.group is not None and not self.negated:
            raise ValueError("literal groups only occur under negation")


DETERMINISTIC = "det"
FIXED = "fixed"
LEARNABLE = "learnable"


@dataclass(frozen=True)
class Weight:
    kind: str  # DETERMINISTIC | FIXED | LEARNABLE
    value: float = 1.0  # fixed probability, or initial value when learnable


@dataclass(frozen=True)
class Clause:
    head: Atom
    body: tuple[Literal, ...] = ()
    weight: Weight = Weight(DETERMINISTIC)
    line: int = 0

    def is_fact(self) -> bool:
        return not self.body


@dataclass
class Program:
    clauses: list[Clause] = field(default_factory=list)


@dataclass(frozen=True)
class Switch:
    """Bernoulli switch introduced for a weighted rule.

    `params` is empty for the default one-switch-per-clause semantics; in
    per-grounding mode it lists the source clause's variables, so the
    grounder mints one switch fact per instantiation.
    """
    pred: str
    params: tuple[Var, ...]
    weight: Weight
    source_line: int = 0


@dataclass
class CoreProgram:
    clauses: list[Clause] = field(default_factory=list)  # all deterministic
    prob_facts: list[tuple[Atom, Weight]] = field(default_factory=list)
    switches: list[Switch] = field(default_factory=list)
    strata: dict[str, int] = field(default_factory=dict)

    def switch_by_pred(self) -> dict[str, Switch]:
        return {s.pred: s for s in self.switches}


class RuleSyntaxError(ValueError):
    def __init__(self, message, line=0, column=0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class StratificationError(ValueError):
    pass


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*)
  | (?P<number>\d+\.\d+|\d+)
  | (?P<string>"[^"]*")
  | (?P<name>[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<punct>:-|::|\\\+|>=|=<|\\==|==|[().,<>])
""", re.VERBOSE)


def _tokenize(text: str):
    tokens = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}",
                                  line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append((kind, value, line, m.start() - line_start + 1))
        line += value.count("\n")
        if "\n" in value:
            line_start = m.start() + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, line, col = self.peek()
        if val != value:
            raise RuleSyntaxError(f"expected {value!r}, found {val or 'end of input'!r}",
                                  line, col)
        return self.next()

    def program(self) -> Program:
        clauses = []
        while self.peek()[0] != "eof":
            clauses.append(self.statement())
        return Program(clauses)

    def statement(self) -> Clause:
        _, _, line, _ = self.peek()
        weight = self.maybe_weight()
        head = self.atom()
        body: tuple[Literal, ...] = ()
        if self.peek()[1] == ":-":
            self.next()
            body = tuple(self.body())
        self.expect(".")
        clause = Clause(head, body, weight, line)
        _check_clause(clause)
        return clause

    def maybe_weight(self) -> Weight:
        kind, val, line, col = self.peek()
        if kind == "number" and self.tokens[self.i + 1][1] == "::":
            self.next()
            self.next()
            p = float(val)
            if not 0.0 <= p <= 1.0:
                raise RuleSyntaxError(f"clause weight {p} outside [0,1]", line, col)
            return Weight(FIXED, p)
        if (kind == "name" and val == "t" and self.tokens[self.i + 1][1] == "("
                and self.tokens[self.i + 2][1] == "_"
                and self.tokens[self.i + 3][1] == ")"
                and self.tokens[self.i + 4][1] == "::"):
            self.i += 5
            return Weight(LEARNABLE, 0.5)
        return Weight(DETERMINISTIC)

    def body(self) -> list[Literal]:
        literals = [self.literal()]
        while self.peek()[1] == ",":
            self.next()
            literals.append(self.literal())
        return literals

    def literal(self) -> Literal:
        if self.peek()[1] == "\\+":
            self.next()
            if self.peek()[1] == "(":
                self.next()
                inner = self.body()
                self.expect(")")
                if len(inner) == 1 and not inner[0].negated:
                    return Literal(inner[0].atom, negated=True)
                return Literal(negated=True, group=tuple(inner))
            return Literal(self.atom_or_comparison(), negated=True)
        return Literal(self.atom_or_comparison())

    def atom_or_comparison(self) -> Atom:
        left = self.term()
        kind, val, line, col = self.peek()
        if val in COMPARISON_OPS:
            self.next()
            right = self.term()
            return Atom(val, (left, right))
        if isinstance(left, Atom):
            return left
        if isinstance(left, str) and not isinstance(left, QStr):
            return Atom(left)
        raise RuleSyntaxError("expected a predicate or comparison", line, col)

    def atom(self) -> Atom:
        kind, val, line, col = self.peek()
        term = self.term()
        if isinstance(term, Atom):
            return term
        if isinstance(term, str) and not isinstance(term, QStr):
            return Atom(term)
        raise RuleSyntaxError(f"expected an atom, found {val!r}", line, col)

    def term(self):
        kind, val, line, col = self.next()
        if kind == "number":
            if "." in val:
                return float(val)
            return int(val)
        if kind == "string":
            return QStr(val[1:-1])
        if kind == "var":
            if val == "_":
                return Wildcard
            return Var(val)
        if kind == "name":
            if self.peek()[1] == "(":
                self.next()
                args = [self.arg_term()]
                while self.peek()[1] == ",":
                    self.next()
                    args.append(self.arg_term())
                self.expect(")")
                return Atom(val, tuple(args))
            return val  # plain symbol; contexts decide atom vs constant
        raise RuleSyntaxError(f"unexpected token {val or 'end of input'!r}", line, col)

    def arg_term(self):
        # compound arguments occur as aggregation goals, e.g. findall/3
        return self.term()


def _atom_from_term(term) -> Atom:
    # a bare lowercase name in head/body position is a 0-ary atom
    if isinstance(term, Atom):
        return term
    if isinstance(term, str) and not isinstance(term, QStr):
        return Atom(term)
    raise RuleSyntaxError(f"not a valid atom: {term!r}")


def term_vars(term) -> set[Var]:
    if isinstance(term, Var):
        return {term}
    if isinstance(term, Atom):
        out = set()
        for a in term.args:
            out |= term_vars(a)
        return out
    return set()


def _literal_vars(lit: Literal) -> set[Var]:
    if lit.group is not None:
        out = set()
        for inner in lit.group:
            out |= _literal_vars(inner)
        return out
    out = set()
    for t in lit.atom.args:
        out |= term_vars(t)
    return out


def clause_vars(clause: Clause) -> list[Var]:
    """Clause variables in first-occurrence order (head first)."""
    seen: list[Var] = []

    def visit_args(args):
        for t in args:
            if isinstance(t, Var) and t not in seen:
                seen.append(t)
            elif isinstance(t, Atom):
                visit_args(t.args)

    visit_args(clause.head.args)

    def visit_literal(lit):
        if lit.group is not None:
            for inner in lit.group:
                visit_literal(inner)
        else:
            visit_args(lit.atom.args)

    for lit in clause.body:
        visit_literal(lit)
    return seen


def _check_clause(clause: Clause):
    head_vars = {t for t in clause.head.args if isinstance(t, Var)}
    if not clause.body:
        if head_vars:
            raise RuleSyntaxError(
                f"fact {clause.head.pred}/{clause.head.arity} has unbound "
                f"variable {sorted(v.name for v in head_vars)[0]}",
                clause.line)
        return
    body_vars = set()
    for lit in clause.body:
        body_vars |= _literal_vars(lit)
    unbound = head_vars - body_vars
    if unbound:
        name = sorted(v.name for v in unbound)[0]
        raise RuleSyntaxError(
            f"head variable {name} of {clause.head.pred}/{clause.head.arity} "
            "does not occur in the body", clause.line)


def parse_program(text: str) -> Program:
    return _normalize(_Parser(text).program())


def _normalize(program: Program) -> Program:
    # bare-name heads/body atoms become 0-ary atoms
    def norm_literal(lit: Literal) -> Literal:
        if lit.group is not None:
            return Literal(negated=True, group=tuple(norm_literal(l) for l in lit.group))
        return replace(lit, atom=lit.atom)

    clauses = []
    for c in program.clauses:
        clauses.append(replace(c, head=_atom_from_term(c.head),
                               body=tuple(norm_literal(l) for l in c.body)))
    return Program(clauses)


def format_term(term) -> str:
    if term is Wildcard:
        return "_"
    if isinstance(term, Var):
        return term.name
    if isinstance(term, QStr):
        return f'"{term}"'
    if isinstance(term, Atom):
        return format_atom(term)
    if isinstance(term, tuple):
        return "[" + ",".join(format_term(t) for t in term) + "]"
    if isinstance(term, (int, float)):
        return repr(term)
    return str(term)


def format_atom(atom: Atom) -> str:
    if atom.is_comparison():
        return f"{format_term(atom.args[0])}{atom.pred}{format_term(atom.args[1])}"
    if not atom.args:
        return atom.pred
    return f"{atom.pred}({','.join(format_term(a) for a in atom.args)})"


def format_literal(lit: Literal) -> str:
    if lit.group is not None:
        return "\\+(" + ", ".join(format_literal(l) for l in lit.group) + ")"
    text = format_atom(lit.atom)
    return f"\\+ {text}" if lit.negated else text


def format_clause(clause: Clause) -> str:
    prefix = ""
    if clause.weight.kind == FIXED:
        prefix = f"{clause.weight.value!r}::"
    elif clause.weight.kind == LEARNABLE:
        prefix = "t(_)::"
    head = format_atom(clause.head)
    if clause.is_fact():
        return f"{prefix}{head}."
    body = ", ".join(format_literal(l) for l in clause.body)
    return f"{prefix}{head} :- {body}."


def pretty_print(program: Program) -> str:
    return "\n".join(format_clause(c) for c in program.clauses) + "\n"


def desugar(program: Program, per_grounding_switches: bool = False) -> CoreProgram:
    """Rewrite to core form: deterministic rules + probabilistic ground facts.

    (a) w::h :- B  =>  switch fact w::aux_i (plus rule h :- B, aux_i);
    (b) \\+(C1,..,Cn) with outside-shared vars V  =>  g_j(V) :- C1,..,Cn
        and literal \\+ g_j(V);
    (c) learnable weights carry over to the switch.
    """
    core = CoreProgram()
    aux_count = 0
    group_count = 0
    for clause in program.clauses:
        if clause.is_fact():
            if clause.weight.kind == DETERMINISTIC:
                core.clauses.append(clause)
            else:
                core.prob_facts.append((clause.head, clause.weight))
                if clause.weight.kind == LEARNABLE:
                    core.switches.append(Switch(clause.head.pred, (),
                                                clause.weight, clause.line))
            continue

        outside_vars_per_lit = []
        for i, lit in enumerate(clause.body):
            if lit.group is None:
                continue
            others = set(t for t in clause.head.args if isinstance(t, Var))
            for j, other in enumerate(clause.body):
                if j != i:
                    others |= _literal_vars(other)
            shared = [v for v in clause_vars(clause)
                      if v in (_literal_vars(lit) & others)]
            outside_vars_per_lit.append((i, shared))

        body = list(clause.body)
        for i, shared in outside_vars_per_lit:
            group_count += 1
            pred = f"g_{group_count}"
            core.clauses.append(Clause(Atom(pred, tuple(shared)),
                                       body[i].group, Weight(DETERMINISTIC),
                                       clause.line))
            body[i] = Literal(Atom(pred, tuple(shared)), negated=True)

        if clause.weight.kind == DETERMINISTIC:
            core.clauses.append(replace(clause, body=tuple(body)))
        else:
            aux_count += 1
            pred = f"aux_{aux_count}"
            params = tuple(clause_vars(clause)) if per_grounding_switches else ()
            core.switches.append(Switch(pred, params, clause.weight, clause.line))
            body.append(Literal(Atom(pred, params)))
            core.clauses.append(Clause(clause.head, tuple(body),
                                       Weight(DETERMINISTIC), clause.line))
    core.strata = stratify(core)
    return core


def stratify(core: CoreProgram) -> dict[str, int]:
    """Assign strata: positive deps non-decreasing, negative deps increasing."""
    preds = set()
    deps: list[tuple[str, str, bool]] = []  # (head, body_pred, negated)
    for clause in core.clauses:
        preds.add(clause.head.pred)
        for lit in clause.body:
            if lit.atom is None or lit.atom.is_comparison():
                continue
            preds.add(lit.atom.pred)
            deps.append((clause.head.pred, lit.atom.pred, lit.negated))
            # aggregation goals (findall) need their predicate fully
            # saturated first, so they behave like negative dependencies
            for arg in lit.atom.args:
                if isinstance(arg, Atom):
                    preds.add(arg.pred)
                    deps.append((clause.head.pred, arg.pred, True))
    for atom, _ in core.prob_facts:
        preds.add(atom.pred)
    for switch in core.switches:
        preds.add(switch.pred)

    strata = {p: 0 for p in preds}
    for _ in range(len(preds) + 1):
        changed = False
        for head, body_pred, negated in deps:
            need = strata[body_pred] + (1 if negated else 0)
            if strata[head] < need:
                strata[head] = need
                changed = True
        if not changed:
            return strata
    cycle = sorted({head for head, body_pred, negated in deps
                    if strata[head] > len(preds)}
                   | {p for p in preds if strata[p] > len(preds)})
    raise StratificationError(
        "unstratifiable program: negative dependency cycle through "
        + ", ".join(cycle))
