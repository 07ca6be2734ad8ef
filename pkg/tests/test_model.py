import pytest
from hypothesis import given, strategies as st

from hexakg.errors import InvalidOrderingError
from hexakg.model import (
    ORDERINGS,
    PARTIAL_ORDERINGS,
    TriplePattern,
    Var,
    bound,
    complete_ordering,
    isprefix,
    ordering_minus,
    permute,
    select_ordering,
    sort_key,
    unpermute,
)

X, Y, Z = Var("x"), Var("y"), Var("z")


def test_isprefix():
    assert isprefix("d", "dsr")
    assert isprefix("", "srd")
    assert not isprefix("rs", "srd")


def test_ordering_minus():
    assert ordering_minus("srd", "sd") == "r"
    assert ordering_minus("srd", "") == "srd"
    assert ordering_minus("dsr", "ds") == "r"


def test_bound():
    assert bound(TriplePattern(X, 1, 2)) == "rd"
    assert bound(TriplePattern(X, Y, Z)) == ""
    assert bound(TriplePattern(1, Y, 3)) == "sd"


def test_select_ordering_paper_example():
    # one bound destination, requested srd order -> the dsr stream
    assert select_ordering(TriplePattern(X, Y, 7), "srd") == "dsr"


def test_select_ordering_all_variables():
    p = TriplePattern(X, Y, Z)
    for omega in ORDERINGS:
        assert select_ordering(p, omega) == omega


def test_select_ordering_two_constants():
    # enumerating candidates with prefix "sr" leaves only srd
    assert select_ordering(TriplePattern(1, 2, Z), "srd") == "srd"
    assert select_ordering(TriplePattern(1, 2, Z), "drs") == "srd"


def test_select_ordering_rejects_bad_ordering():
    with pytest.raises(InvalidOrderingError):
        select_ordering(TriplePattern(X, Y, Z), "sss")


@given(
    st.sampled_from(PARTIAL_ORDERINGS),
    st.sampled_from(ORDERINGS),
)
def test_minus_length_under_prefix(a, b):
    if isprefix(a, b):
        assert len(ordering_minus(b, a)) == 3 - len(a)


@given(
    st.sampled_from(ORDERINGS),
    st.tuples(st.booleans(), st.booleans(), st.booleans()),
)
def test_select_ordering_identity_when_bound_is_prefix(omega, mask):
    values = [
        10 + i if const else v
        for i, (const, v) in enumerate(zip(mask, (X, Y, Z)))
    ]
    p = TriplePattern(*values)
    if isprefix(bound(p), omega):
        assert select_ordering(p, omega) == omega


def test_permute_round_trip():
    triple = (5, 6, 7)
    for omega in ORDERINGS:
        assert unpermute(permute(triple, omega), omega) == triple


def test_sort_key_orders_like_permutation():
    triples = [(2, 1, 1), (1, 2, 3), (1, 3, 2)]
    assert sorted(triples, key=sort_key("drs")) == [
        (2, 1, 1),
        (1, 3, 2),
        (1, 2, 3),
    ]


def test_complete_ordering():
    assert complete_ordering("") == "srd"
    assert complete_ordering("d") == "dsr"
    assert complete_ordering("rd") == "rds"
    assert complete_ordering("sr") == "srd"


def test_repeated_var_groups():
    p = TriplePattern(Var("a"), Var("a"), Var("b"))
    assert p.repeated_var_groups() == [["s", "r"]]
    assert TriplePattern(X, Y, Z).repeated_var_groups() == []
