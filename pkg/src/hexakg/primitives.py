"""The low-level primitive API over an open database snapshot.

Groups (mirroring the engine's public surface):

  labels        node_label / relation_label / node_id / relation_id
  edges         pattern matches streamed in any of the six orderings
  group_counts  distinct key (or key pair) prefixes with edge counts
  count_*       cardinalities of the above, with metadata shortcuts
  edge_at       random access to the i-th match (0-based)

Cost notes (single component, L labels, E edges): label primitives are
O(log L); edges is O(E) worst case, O(log L + answer) with constants;
count/group shortcuts answer from node records or stream headers alone,
observable as zero table-byte reads on the instrumentation counters.

Deltas overlay the base: per-triple visibility is decided by the most
recent component containing the triple.  Node-record count shortcuts
are disabled for labels touched by any delta.
"""
from __future__ import annotations

import heapq
from bisect import bisect_left, bisect_right
from itertools import groupby
from typing import Iterator, List, Optional, Tuple

from .dictionary import ENTITY, RELATION
from .errors import AbsentTermError, IndexOutOfRangeError, UsageError
from .model import (
    ORDERINGS,
    TriplePattern,
    Var,
    bound,
    complete_ordering,
    permute,
    select_ordering,
    unpermute,
)

_ROLE_CHARS = "srd"


# -- f1..f4: label <-> id ----------------------------------------------------


def node_label(db, term_id: int) -> bytes:
    label = db.dictionary.lookup_label(term_id, ENTITY)
    if label is None:
        raise AbsentTermError(f"no node with id {term_id}")
    return label


def relation_label(db, term_id: int) -> bytes:
    label = db.dictionary.lookup_label(term_id, RELATION)
    if label is None:
        raise AbsentTermError(f"no relation with id {term_id}")
    return label


def node_id(db, label: bytes) -> int:
    term_id = db.dictionary.lookup_id(label, ENTITY)
    if term_id is None:
        raise AbsentTermError(f"unknown node label {label!r}")
    return term_id


def relation_id(db, label: bytes) -> int:
    term_id = db.dictionary.lookup_id(label, RELATION)
    if term_id is None:
        raise AbsentTermError(f"unknown relation label {label!r}")
    return term_id


# -- pattern matching ---------------------------------------------------------


def _repeat_filter(pattern: TriplePattern):
    groups = pattern.repeated_var_groups()
    if not groups:
        return None
    idx_groups = [tuple(_ROLE_CHARS.index(c) for c in g) for g in groups]

    def ok(triple) -> bool:
        return all(
            len({triple[i] for i in g}) == 1 for g in idx_groups
        )

    return ok


def _component_rows(component, ordering: str, pattern: TriplePattern):
    """Matches from one component, sorted by ``ordering`` (its selected
    stream), before repeated-variable filtering."""
    consts = pattern.constants()
    b = bound(pattern)
    if not b:
        yield from component.store.scan_edges(ordering)
        return
    key = consts[ordering[0]]
    rows = component.store.table_rows(ordering, key)
    if rows is None:
        return
    if len(b) >= 2:
        second = consts[ordering[1]]
        lo = bisect_left(rows, (second, -1))
        hi = bisect_left(rows, (second + 1, -1))
        rows = rows[lo:hi]
        if len(b) == 3:
            third = consts[ordering[2]]
            rows = [r for r in rows if r[1] == third]
    for first, second_v in rows:
        yield unpermute((key, first, second_v), ordering)


def _tagged(iterator, seq: int, visible: bool, keyfn):
    for triple in iterator:
        yield (keyfn(triple), seq, visible, triple)


def edges(db, ordering: str, pattern: TriplePattern) -> Iterator[tuple]:
    """All visible edges matching ``pattern``, sorted by ``ordering``."""
    if ordering not in ORDERINGS:
        raise UsageError(f"not an ordering: {ordering!r}")
    selected = select_ordering(pattern, ordering)
    repeat_ok = _repeat_filter(pattern)
    components = list(db.components())
    if len(components) == 1:
        for triple in _component_rows(components[0][2], selected, pattern):
            if repeat_ok is None or repeat_ok(triple):
                yield triple
        return

    def keyfn(t):
        return permute(t, selected)

    streams = [
        _tagged(_component_rows(comp, selected, pattern), seq, kind != "rem", keyfn)
        for kind, seq, comp in components
    ]
    merged = heapq.merge(*streams)
    for _, group in groupby(merged, key=lambda item: item[0]):
        last = None
        for last in group:
            pass
        _, _, visible, triple = last
        if visible and (repeat_ok is None or repeat_ok(triple)):
            yield triple


# -- counting -----------------------------------------------------------------


def _delta_touches(db, term_id: int) -> bool:
    for delta in db.deltas:
        if delta.component.nm.get(term_id) is not None:
            return True
    return False


def _base_card(db, term_id: int, role: str) -> int:
    rec = db.base.nm.get(term_id)
    if rec is None:
        return 0
    return {"s": rec.card_s, "r": rec.card_r, "d": rec.card_d}[role]


def _merged_key_counts(db, role: str) -> List[Tuple[int, int]]:
    """(key, visible edge count) for one role, from stream headers only."""
    stream = complete_ordering(role)
    totals: dict = {}
    for kind, _, comp in db.components():
        sign = -1 if kind == "rem" else 1
        for e in comp.store.readers[stream].entries:
            totals[e.key] = totals.get(e.key, 0) + sign * e.n
    return sorted((k, v) for k, v in totals.items() if v > 0)


def count_edges(db, pattern: TriplePattern) -> int:
    """Cardinality of ``edges`` for any ordering (f17 over f5..f10)."""
    b = bound(pattern)
    repeats = pattern.repeated_var_groups()
    if not repeats and len(b) == 0:
        return db.visible_edge_count()
    if not repeats and len(b) == 1:
        term_id = pattern.constants()[b]
        if not _delta_touches(db, term_id):
            return _base_card(db, term_id, b)
    return sum(1 for _ in edges(db, complete_ordering(b), pattern))


def count_groups(db, grouping: str, pattern: TriplePattern) -> int:
    """Cardinality of ``group_counts`` (f17 over f11..f16)."""
    _check_grouping(grouping)
    b = bound(pattern)
    repeats = pattern.repeated_var_groups()
    if not repeats and len(grouping) == 1 and b == grouping:
        term_id = pattern.constants()[b]
        if not _delta_touches(db, term_id):
            return 1 if _base_card(db, term_id, b) > 0 else 0
    if not repeats and len(grouping) == 1 and len(b) == 0:
        return len(_merged_key_counts(db, grouping))
    return sum(1 for _ in group_counts(db, grouping, pattern))


def group_counts(
    db, grouping: str, pattern: TriplePattern
) -> Iterator[Tuple[tuple, int]]:
    """Distinct key prefixes of the matches, with counts, keys ascending.

    Keys are 1- or 2-tuples of ids, matching the grouping length.
    """
    _check_grouping(grouping)
    b = bound(pattern)
    repeats = pattern.repeated_var_groups()
    if not repeats and len(grouping) == 1 and len(b) == 0:
        for key, n in _merged_key_counts(db, grouping):
            yield (key,), n
        return
    if not repeats and len(grouping) == 1 and b == grouping:
        term_id = pattern.constants()[b]
        if not _delta_touches(db, term_id):
            card = _base_card(db, term_id, b)
            if card > 0:
                yield (term_id,), card
            return
    ordering = complete_ordering(grouping)
    positions = tuple(_ROLE_CHARS.index(c) for c in grouping)
    matched = edges(db, ordering, pattern)
    for key, group in groupby(
        matched, key=lambda t: tuple(t[i] for i in positions)
    ):
        yield key, sum(1 for _ in group)


def _check_grouping(grouping: str) -> None:
    if not 1 <= len(grouping) <= 2 or any(c not in _ROLE_CHARS for c in grouping):
        raise UsageError(f"bad grouping {grouping!r}")
    if len(set(grouping)) != len(grouping):
        raise UsageError(f"bad grouping {grouping!r}")


# -- positional access --------------------------------------------------------


def edge_at(db, ordering: str, pattern: TriplePattern, index: int) -> tuple:
    """The edge at ``index`` (0-based) of the ``edges`` sequence."""
    if index < 0:
        raise IndexOutOfRangeError(f"index {index} out of range")
    selected = select_ordering(pattern, ordering)
    b = bound(pattern)
    repeats = pattern.repeated_var_groups()
    if not db.deltas and not repeats:
        store = db.base.store
        if len(b) == 0:
            reader = store.readers[selected]
            cum = reader.cumulative_rows()
            if index >= cum[-1]:
                raise IndexOutOfRangeError(f"index {index} out of range")
            ti = bisect_right(cum, index) - 1
            entry = reader.entries[ti]
            first, second = store.row_at(selected, entry.key, index - cum[ti])
            return unpermute((entry.key, first, second), selected)
        if len(b) == 1:
            key = pattern.constants()[selected[0]]
            info = store.table_info(selected, key)
            if info is None or index >= info.entry.n:
                raise IndexOutOfRangeError(f"index {index} out of range")
            first, second = store.row_at(selected, key, index)
            return unpermute((key, first, second), selected)
    for i, triple in enumerate(edges(db, ordering, pattern)):
        if i == index:
            return triple
    raise IndexOutOfRangeError(f"index {index} out of range")
