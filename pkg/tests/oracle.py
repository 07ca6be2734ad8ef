"""Naive reference engine: filter/sort/group/count/index over a raw
edge list, plus a nested-loop graph-pattern evaluator.

Deliberately knows nothing about streams, layouts, or node records;
it only shares the pattern container type with the engine.
"""
from __future__ import annotations

from collections import Counter

from hexakg.model import Var

_POS = "srd"


def _match(edge, pattern) -> bool:
    binding = {}
    for slot, value in zip(pattern.slots(), edge):
        if isinstance(slot, Var):
            if binding.setdefault(slot.name, value) != value:
                return False
        elif slot != value:
            return False
    return True


class Oracle:
    def __init__(self, id_triples):
        self.edges = sorted(set(id_triples))

    def matches(self, pattern):
        return [e for e in self.edges if _match(e, pattern)]

    def edges_sorted(self, omega, pattern):
        idx = tuple(_POS.index(c) for c in omega)
        return sorted(
            self.matches(pattern), key=lambda e: tuple(e[i] for i in idx)
        )

    def count_edges(self, pattern):
        return len(self.matches(pattern))

    def groups(self, grouping, pattern):
        idx = tuple(_POS.index(c) for c in grouping)
        counts = Counter(
            tuple(e[i] for i in idx) for e in self.matches(pattern)
        )
        return sorted(counts.items())

    def count_groups(self, grouping, pattern):
        return len(self.groups(grouping, pattern))

    def edge_at(self, omega, pattern, index):
        return self.edges_sorted(omega, pattern)[index]

    def bgp(self, patterns, select_vars):
        """Set of projected binding tuples for a pattern conjunction.

        Nested-loop evaluation in input order; per pattern, the edge list
        is pre-filtered on constants and grouped by the already-bound
        variables so the loop stays polynomial.
        """
        bindings = [{}]
        for pattern in patterns:
            candidates = []
            for edge in self.edges:
                local = {}
                ok = True
                for slot, value in zip(pattern, edge):
                    if isinstance(slot, Var):
                        if local.setdefault(slot.name, value) != value:
                            ok = False
                            break
                    elif slot != value:
                        ok = False
                        break
                if ok:
                    candidates.append(local)
            if not bindings:
                return set()
            shared = sorted(
                {v.name for v in pattern if isinstance(v, Var)}
                & set(bindings[0])
            )
            grouped = {}
            for local in candidates:
                grouped.setdefault(
                    tuple(local[name] for name in shared), []
                ).append(local)
            extended = []
            for binding in bindings:
                key = tuple(binding[name] for name in shared)
                for local in grouped.get(key, ()):
                    merged = dict(binding)
                    merged.update(local)
                    extended.append(merged)
            bindings = extended
        return {tuple(b[name] for name in select_vars) for b in bindings}
