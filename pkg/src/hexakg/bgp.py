"""Basic graph pattern answering on top of the primitives.

Query text is a minimal SPARQL SELECT subset: optional PREFIX
declarations, a SELECT clause (variables or *), and a braced group of
dot-separated triple patterns.  Terms may be <iri>, prefixed:name,
"literal" (opaque, optional ^^type or @lang suffix), a bare label, or
?variable.

Planning is greedy on exact cardinalities: cheapest pattern first, then
whichever remaining pattern shares the most variables with the bound
prefix (ties by cardinality, then input order).  A join runs as MERGE
when both sides stream sorted on the join variable, otherwise as an
index loop probing with the bound values.  Results are set-semantics
label tuples, sorted for deterministic output.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import groupby
from typing import Dict, Iterator, List, Optional, Tuple

from . import primitives
from .dictionary import ENTITY, RELATION
from .errors import ParseError, UsageError
from .model import TriplePattern, Var, bound, complete_ordering

Term = Tuple[str, object]  # ("var", name) | ("label", bytes)

_PREFIX_RE = re.compile(r"(?i)\bPREFIX\s+([A-Za-z0-9_.-]*):\s*<([^>]*)>")
_SELECT_RE = re.compile(r"(?i)\bSELECT\s+(.*?)\s*(?:\bWHERE\b)?\s*\{", re.S)


@dataclass
class Query:
    select: List[str]  # variable names, in projection order
    patterns: List[Tuple[Term, Term, Term]]


@dataclass
class PlanStep:
    pattern: TriplePattern
    estimate: int
    operator: str  # SCAN | MERGE | INDEX_LOOP
    join_var: Optional[str] = None
    scan_ordering: Optional[str] = None
    cartesian: bool = False


@dataclass
class Plan:
    steps: List[PlanStep] = field(default_factory=list)
    select: List[str] = field(default_factory=list)
    empty: bool = False  # an unknown constant short-circuits to no answers


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _tokenize_body(body: str) -> List[str]:
    tokens = []
    i, n = 0, len(body)
    while i < n:
        c = body[i]
        if c.isspace():
            i += 1
            continue
        if c == "<":
            j = body.find(">", i)
            if j < 0:
                raise ParseError("unterminated IRI in query")
            tokens.append(body[i : j + 1])
            i = j + 1
        elif c == '"':
            j = i + 1
            while j < n and (body[j] != '"' or body[j - 1] == "\\"):
                j += 1
            if j >= n:
                raise ParseError("unterminated literal in query")
            j += 1
            while j < n and not body[j].isspace() and body[j] not in ".}":
                j += 1  # ^^<type> or @lang suffix
            tokens.append(body[i:j])
            i = j
        elif c == ".":
            tokens.append(".")
            i += 1
        else:
            j = i
            while j < n and not body[j].isspace() and body[j] != "}":
                j += 1
            word = body[i:j]
            if word.endswith(".") and len(word) > 1:
                word = word[:-1]
                j -= 1
            tokens.append(word)
            i = j
    return tokens


def _term_from_token(token: str, prefixes: Dict[str, str]) -> Term:
    if token.startswith("?"):
        if len(token) < 2:
            raise ParseError("empty variable name")
        return ("var", token[1:])
    if token.startswith("<") and token.endswith(">"):
        return ("label", token[1:-1].encode())
    if token.startswith('"'):
        return ("label", token.encode())
    if ":" in token:
        pfx, local = token.split(":", 1)
        if pfx in prefixes:
            return ("label", (prefixes[pfx] + local).encode())
        raise ParseError(f"unknown prefix {pfx!r}")
    return ("label", token.encode())


def parse_query(text: str) -> Query:
    prefixes = dict(_PREFIX_RE.findall(text))
    m = _SELECT_RE.search(text)
    if not m:
        raise ParseError("query must contain SELECT ... {")
    close = text.rfind("}")
    if close < m.end() - 1:
        raise ParseError("unterminated pattern group")
    body = text[m.end() : close]
    tokens = _tokenize_body(body)
    patterns: List[Tuple[Term, Term, Term]] = []
    terms: List[Term] = []
    for token in tokens:
        if token == ".":
            continue
        terms.append(_term_from_token(token, prefixes))
        if len(terms) == 3:
            patterns.append(tuple(terms))
            terms = []
    if terms:
        raise ParseError("dangling terms in pattern group")
    if not patterns:
        raise ParseError("empty pattern group")
    in_order: List[str] = []
    for p in patterns:
        for kind, value in p:
            if kind == "var" and value not in in_order:
                in_order.append(value)
    select_part = m.group(1).strip()
    if select_part == "*":
        select = in_order
    else:
        select = []
        for token in select_part.split():
            if not token.startswith("?"):
                raise ParseError(f"bad projection term {token!r}")
            name = token[1:]
            if name not in in_order:
                raise ParseError(f"projected variable ?{name} not in pattern")
            select.append(name)
    if not select:
        raise ParseError("nothing to project")
    return Query(select, patterns)


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


def _encode_pattern(db, pattern) -> Optional[TriplePattern]:
    slots = []
    for position, (kind, value) in zip("srd", pattern):
        if kind == "var":
            slots.append(Var(value))
            continue
        lookup_kind = RELATION if position == "r" else ENTITY
        term_id = db.dictionary.lookup_id(value, lookup_kind)
        if term_id is None:
            return None
        slots.append(term_id)
    return TriplePattern(*slots)


def _vars_of(tp: TriplePattern) -> set:
    return {v.name for v in tp.slots() if isinstance(v, Var)}


def _var_position(tp: TriplePattern, name: str) -> str:
    for c, slot in zip("srd", tp.slots()):
        if isinstance(slot, Var) and slot.name == name:
            return c
    raise KeyError(name)


def _sorted_scan_ordering(tp: TriplePattern, var: Optional[str]) -> str:
    """Ordering that streams the matches sorted by ``var`` (when given)."""
    prefix = bound(tp)
    if var is not None:
        prefix = prefix + _var_position(tp, var)
    return complete_ordering(prefix)


def plan(db, query: Query) -> Plan:
    if db.id_mode != "global":
        raise UsageError("graph pattern queries need a global-id database")
    encoded: List[TriplePattern] = []
    for p in query.patterns:
        tp = _encode_pattern(db, p)
        if tp is None:
            return Plan(select=query.select, empty=True)
        encoded.append(tp)
    costed = [
        (primitives.count_edges(db, tp), i, tp) for i, tp in enumerate(encoded)
    ]
    remaining = sorted(costed, key=lambda t: (t[0], t[1]))
    first_cost, _, first_tp = remaining.pop(0)
    steps = [PlanStep(first_tp, first_cost, "SCAN")]
    bound_vars = _vars_of(first_tp)
    while remaining:
        best = None
        for pos, (cost, order, tp) in enumerate(remaining):
            shared = len(_vars_of(tp) & bound_vars)
            rank = (-shared, cost, order)
            if best is None or rank < best[0]:
                best = (rank, pos)
        _, pos = best
        cost, _, tp = remaining.pop(pos)
        shared_vars = sorted(_vars_of(tp) & bound_vars)
        if not shared_vars:
            steps.append(PlanStep(tp, cost, "INDEX_LOOP", cartesian=True))
            bound_vars |= _vars_of(tp)
            continue
        join_var = shared_vars[0]
        mergeable = False
        if len(steps) == 1:
            mergeable = True  # both sides are sortable scans
            steps[0].scan_ordering = _sorted_scan_ordering(
                steps[0].pattern, join_var
            )
            steps[0].join_var = join_var
        elif steps[-1].operator == "MERGE" and steps[-1].join_var == join_var:
            mergeable = True  # left side still arrives sorted on this var
        if mergeable:
            steps.append(
                PlanStep(
                    tp,
                    cost,
                    "MERGE",
                    join_var=join_var,
                    scan_ordering=_sorted_scan_ordering(tp, join_var),
                )
            )
        else:
            steps.append(PlanStep(tp, cost, "INDEX_LOOP", join_var=join_var))
        bound_vars |= _vars_of(tp)
    if steps[0].scan_ordering is None:
        steps[0].scan_ordering = _sorted_scan_ordering(steps[0].pattern, None)
    return Plan(steps=steps, select=query.select)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _extend(binding: dict, tp: TriplePattern, edge: tuple) -> Optional[dict]:
    """Bind the pattern's variables against one edge; None on conflict."""
    out = binding
    copied = False
    for slot, value in zip(tp.slots(), edge):
        if not isinstance(slot, Var):
            continue
        have = out.get(slot.name)
        if have is None:
            if not copied:
                out = dict(out)
                copied = True
            out[slot.name] = value
        elif have != value:
            return None
    return out


def _scan_step(db, step: PlanStep) -> List[dict]:
    rows = []
    for edge in primitives.edges(db, step.scan_ordering, step.pattern):
        got = _extend({}, step.pattern, edge)
        if got is not None:
            rows.append(got)
    return rows


def _merge_step(db, left: List[dict], step: PlanStep) -> List[dict]:
    var = step.join_var
    out: List[dict] = []
    right = primitives.edges(db, step.scan_ordering, step.pattern)
    position = "srd".index(_var_position(step.pattern, var))
    li = 0
    n = len(left)
    prev_key = None
    for key, group in groupby(right, key=lambda e: e[position]):
        if prev_key is not None and key < prev_key:
            raise AssertionError("merge input not sorted")
        prev_key = key
        while li < n and left[li][var] < key:
            li += 1
        if li >= n:
            break
        if left[li][var] != key:
            continue
        hi = li
        while hi < n and left[hi][var] == key:
            hi += 1
        block = left[li:hi]
        for edge in group:
            for binding in block:
                got = _extend(binding, step.pattern, edge)
                if got is not None:
                    out.append(got)
        li = hi
    return out


def _index_loop_step(db, left: List[dict], step: PlanStep) -> List[dict]:
    out: List[dict] = []
    for binding in left:
        slots = []
        for slot in step.pattern.slots():
            if isinstance(slot, Var) and slot.name in binding:
                slots.append(binding[slot.name])
            else:
                slots.append(slot)
        probe = TriplePattern(*slots)
        ordering = complete_ordering(bound(probe))
        for edge in primitives.edges(db, ordering, probe):
            got = _extend(binding, step.pattern, edge)
            if got is not None:
                out.append(got)
    return out


def execute(db, query_plan: Plan) -> Tuple[List[str], List[Tuple[bytes, ...]]]:
    """Run a plan; returns (variable names, sorted distinct label rows)."""
    if query_plan.empty:
        return query_plan.select, []
    steps = query_plan.steps
    rows = _scan_step(db, steps[0])
    if steps[0].join_var is not None:
        rows.sort(key=lambda b: b[steps[0].join_var])
    for step in steps[1:]:
        if not rows:
            return query_plan.select, []
        if step.operator == "MERGE":
            rows = _merge_step(db, rows, step)
        else:
            rows = _index_loop_step(db, rows, step)
    projected = {
        tuple(binding[name] for name in query_plan.select) for binding in rows
    }
    labels = []
    for id_row in projected:
        labels.append(
            tuple(db.dictionary.lookup_label(v, ENTITY) for v in id_row)
        )
    labels.sort()
    return query_plan.select, labels


def answer(db, text: str) -> Tuple[List[str], List[Tuple[bytes, ...]]]:
    return execute(db, plan(db, parse_query(text)))
