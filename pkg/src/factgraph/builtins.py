"""Evaluable predicates used by the rule files: string similarity, time tests,
integer ranges. Each builtin is registered with the argument positions it
needs bound; generator builtins may enumerate bindings for output positions.
"""

from __future__ import annotations

import re

from .rulelang import Var, Wildcard


class UnboundArgumentError(ValueError):
    pass


def _is_unbound(term) -> bool:
    return isinstance(term, Var) or term is Wildcard


def _norm(s) -> str:
    return str(s).strip().lower()


def lev_distance(a, b) -> int:
    """Levenshtein edit distance, case-insensitive after trimming."""
    a, b = _norm(a), _norm(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def jw_similarity(a, b) -> float:
    """Jaro-Winkler similarity (prefix scale 0.1, max prefix 4), case-insensitive."""
    a, b = _norm(a), _norm(b)
    if a == b:
        return 1.0 if a else 0.0
    if not a or not b:
        return 0.0
    window = max(len(a), len(b)) // 2 - 1
    a_flags = [False] * len(a)
    b_flags = [False] * len(b)
    matches = 0
    for i, ca in enumerate(a):
        lo = max(0, i - window)
        hi = min(len(b), i + window + 1)
        for j in range(lo, hi):
            if not b_flags[j] and b[j] == ca:
                a_flags[i] = b_flags[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0
    transpositions = 0
    k = 0
    for i in range(len(a)):
        if a_flags[i]:
            while not b_flags[k]:
                k += 1
            if a[i] != b[k]:
                transpositions += 1
            k += 1
    transpositions //= 2
    jaro = (matches / len(a) + matches / len(b)
            + (matches - transpositions) / matches) / 3
    prefix = 0
    for ca, cb in zip(a, b):
        if ca != cb or prefix == 4:
            break
        prefix += 1
    return jaro + prefix * 0.1 * (1 - jaro)


def lcs(a, b) -> int:
    """Length of the longest common contiguous substring, case-insensitive."""
    a, b = _norm(a), _norm(b)
    best = 0
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0] * (len(b) + 1)
        for j, cb in enumerate(b, 1):
            if ca == cb:
                cur[j] = prev[j - 1] + 1
                best = max(best, cur[j])
        prev = cur
    return best


def nb_common_words(a, b) -> int:
    return len(set(_norm(a).split()) & set(_norm(b).split()))


_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2})$")
_AMPM_RE = re.compile(r"^(\d{1,2})(?::(\d{2}))?\s*(am|pm)$")


def parse_time_minutes(value):
    """Minutes since midnight for "HH:MM", "H am/pm", or an integer hour.

    Returns None when the value is not a time expression.
    """
    if isinstance(value, int):
        return value * 60 if 0 <= value <= 23 else None
    s = _norm(value)
    m = _TIME_RE.match(s)
    if m:
        h, mins = int(m.group(1)), int(m.group(2))
        return h * 60 + mins if h < 24 and mins < 60 else None
    m = _AMPM_RE.match(s)
    if m:
        h = int(m.group(1))
        mins = int(m.group(2) or 0)
        if not (1 <= h <= 12 and mins < 60):
            return None
        h = h % 12 + (12 if m.group(3) == "pm" else 0)
        return h * 60 + mins
    return None


def _flag_check(flag, truth):
    if _is_unbound(flag):
        raise UnboundArgumentError("flag argument must be a literal 0 or 1")
    return (flag == 1) == truth


class BuiltinRegistry:
    """Maps (predicate, arity) to an evaluation function.

    Evaluation functions take the literal's argument tuple (ground terms, or
    Var/Wildcard where unbound) and yield fully ground argument tuples.
    """

    def __init__(self):
        self._table = {}

    def register(self, pred, arity, fn):
        self._table[(pred, arity)] = fn

    def has(self, pred, arity) -> bool:
        return (pred, arity) in self._table

    def evaluate(self, pred, args):
        fn = self._table.get((pred, len(args)))
        if fn is None:
            raise KeyError(f"no builtin {pred}/{len(args)}")
        return fn(args)


def _metric(fn):
    def evaluate(args):
        a, b, out = args
        if _is_unbound(a) or _is_unbound(b):
            raise UnboundArgumentError(
                f"{fn.__name__} needs its first two arguments bound")
        value = fn(a, b)
        if _is_unbound(out):
            yield (a, b, value)
        elif out == value:
            yield (a, b, out)
    return evaluate


def _time_flag(predicate):
    def evaluate(args):
        s, flag = args
        if _is_unbound(s):
            raise UnboundArgumentError("time test needs its subject bound")
        if _flag_check(flag, predicate(s)):
            yield (s, flag)
    return evaluate


def _is_time(s) -> bool:
    return parse_time_minutes(s) is not None and not isinstance(s, int)


def _in_window(lo_min, hi_min):
    def check(s):
        minutes = parse_time_minutes(s)
        return (minutes is not None and not isinstance(s, int)
                and lo_min <= minutes < hi_min)
    return check


def _eval_time_between(args):
    t, st, et, flag = args
    if _is_unbound(st) or _is_unbound(et):
        raise UnboundArgumentError("time_between needs its bounds bound")
    lo = parse_time_minutes(st)
    hi = parse_time_minutes(et)
    if lo is None or hi is None:
        return
    if _is_unbound(t):
        # enumerate integer hours inside the window (used under negation
        # when the time variable has no positive binder)
        for hour in range(24):
            if _flag_check(flag, lo <= hour * 60 < hi):
                yield (hour, st, et, flag)
        return
    minutes = parse_time_minutes(t)
    if minutes is None:
        return
    if _flag_check(flag, lo <= minutes < hi):
        yield (t, st, et, flag)


def _eval_between(args):
    lo, hi, t = args
    if _is_unbound(lo) or _is_unbound(hi):
        raise UnboundArgumentError("between needs its range bounds bound")
    if not isinstance(lo, int) or not isinstance(hi, int):
        return
    if _is_unbound(t):
        for value in range(lo, hi + 1):
            yield (lo, hi, value)
    elif isinstance(t, int) and lo <= t <= hi:
        yield (lo, hi, t)


def _eval_list_length(args):
    lst, n = args
    if _is_unbound(lst):
        raise UnboundArgumentError("list_length needs its list bound")
    length = len(lst) if isinstance(lst, tuple) else 0
    if _is_unbound(n):
        yield (lst, length)
    elif n == length:
        yield (lst, n)


def default_registry() -> BuiltinRegistry:
    reg = BuiltinRegistry()
    reg.register("lev_distance", 3, _metric(lev_distance))
    reg.register("jw_similarity", 3, _metric(jw_similarity))
    reg.register("lcs", 3, _metric(lcs))
    reg.register("nb_common_words", 3, _metric(nb_common_words))
    reg.register("is_time_expression", 2, _time_flag(_is_time))
    reg.register("is_processable_time", 2, _time_flag(_is_time))
    reg.register("morning_time", 2, _time_flag(_in_window(8 * 60, 12 * 60)))
    reg.register("afternoon_time", 2, _time_flag(_in_window(12 * 60, 18 * 60)))
    reg.register("time_between", 4, _eval_time_between)
    reg.register("between", 3, _eval_between)
    reg.register("list_length", 2, _eval_list_length)
    return reg


def compare(op: str, left, right) -> bool:
    try:
        if op == ">":
            return left > right
        if op == "<":
            return left < right
        if op == ">=":
            return left >= right
        if op == "=<":
            return left <= right
        if op == "==":
            return left == right
        if op == "\\==":
            return left != right
    except TypeError:
        return False
    raise KeyError(f"unknown comparison {op}")
