"""Core vocabulary: term ids, edges, orderings, and triple patterns.

An edge r(s, d) is stored as the id triple (s, r, d).  Sort orders over
those triples are named by three-character strings over {s, r, d}; the
six full permutations each back one on-disk byte stream.  Partial
orderings (length 0-2) name grouping prefixes.

Everything here is a pure value-level function, safe for unrestricted
concurrent use.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidOrderingError
from .ioutil import MAX_TERM_ID

ORDERINGS = ("srd", "sdr", "drs", "dsr", "rsd", "rds")

PARTIAL_ORDERINGS = ("", "s", "r", "d", "sr", "rs", "sd", "ds", "dr", "rd")

_POSITIONS = "srd"


def check_term_id(value: int) -> int:
    if not 0 <= value <= MAX_TERM_ID:
        raise ValueError(f"term id {value} outside [0, 2^40)")
    return value


@dataclass(frozen=True)
class Var:
    """A named variable slot in a triple pattern."""

    name: str

    def __repr__(self):
        return f"?{self.name}"


# Pattern slots hold either a Var or an int term id.
Slot = "Var | int"


@dataclass(frozen=True)
class TriplePattern:
    s: "Var | int"
    r: "Var | int"
    d: "Var | int"

    def slots(self):
        return (self.s, self.r, self.d)

    def constants(self) -> dict:
        """Position character -> constant id, for the bound slots."""
        return {
            c: v
            for c, v in zip(_POSITIONS, self.slots())
            if not isinstance(v, Var)
        }

    def repeated_var_groups(self) -> list:
        """Position groups that share a variable name, each of size >= 2."""
        by_name: dict = {}
        for c, v in zip(_POSITIONS, self.slots()):
            if isinstance(v, Var):
                by_name.setdefault(v.name, []).append(c)
        return [g for g in by_name.values() if len(g) > 1]


def isprefix(a: str, b: str) -> bool:
    """True iff partial ordering ``a`` is a literal prefix of ``b``."""
    return b.startswith(a)


def ordering_minus(a: str, b: str) -> str:
    """Remove every character of ``b`` from ``a``, keeping a's order."""
    return "".join(c for c in a if c not in b)


def bound(p: TriplePattern) -> str:
    """Positions of the constant slots of ``p``, in s,r,d order."""
    return "".join(
        c for c, v in zip(_POSITIONS, p.slots()) if not isinstance(v, Var)
    )


def select_ordering(p: TriplePattern, omega: str) -> str:
    """Pick the full ordering whose stream can serve ``p`` sorted by ``omega``.

    The result starts with bound(p) (so the constants key a range scan)
    and lists the free positions in the same relative order as ``omega``.
    """
    if omega not in ORDERINGS:
        raise InvalidOrderingError(f"not an ordering: {omega!r}")
    b = bound(p)
    want = ordering_minus(omega, b)
    for candidate in ORDERINGS:
        if isprefix(b, candidate) and ordering_minus(candidate, b) == want:
            return candidate
    # Unreachable for omega in ORDERINGS: the candidates starting with
    # bound(p) realize every relative order of the free positions.
    raise InvalidOrderingError(
        f"no stream serves pattern bound {b!r} sorted by {omega!r}"
    )


def complete_ordering(prefix: str) -> str:
    """Extend a partial ordering to a full one (missing chars in s,r,d order)."""
    full = prefix + ordering_minus("srd", prefix)
    if full not in ORDERINGS:
        raise InvalidOrderingError(f"not a partial ordering: {prefix!r}")
    return full


def sort_key(omega: str):
    """Key function ordering (s, r, d) triples by ``omega``."""
    idx = tuple(_POSITIONS.index(c) for c in omega)
    return lambda t: tuple(t[i] for i in idx)


def permute(triple, omega: str):
    """Reorder an (s, r, d) triple into ``omega`` field order."""
    return tuple(triple[_POSITIONS.index(c)] for c in omega)


def unpermute(fields, omega: str):
    """Inverse of :func:`permute`: fields in ``omega`` order -> (s, r, d)."""
    out = [0, 0, 0]
    for c, v in zip(omega, fields):
        out[_POSITIONS.index(c)] = v
    return tuple(out)
