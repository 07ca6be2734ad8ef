import os
import random
from collections import Counter

import pytest

from conftest import build_db, id_triples_of, open_db, random_graph
from hexakg.database import Database
from hexakg.layout import AGGR, unpack_descriptor
from hexakg.model import ORDERINGS, permute
from hexakg.streams import (
    COUNTERPART,
    FLAG_AGGREGATED,
    PRIMED,
    STREAM_FILES,
    STREAM_ORDER,
)


def test_single_edge_table_shapes(tmp_path):
    db = open_db(tmp_path, [("a", "r1", "b")])
    a = db.dictionary.lookup_id(b"a", "entity")
    b = db.dictionary.lookup_id(b"b", "entity")
    r1 = db.dictionary.lookup_id(b"r1", "relation")
    assert db.base.store.table_rows("srd", a) == ((r1, b),)
    assert db.base.store.table_rows("sdr", a) == ((b, r1),)
    assert db.base.store.table_rows("rsd", r1) == ((a, b),)
    assert db.base.store.table_rows("drs", b) == ((r1, a),)
    db.close()


def test_header_entry_per_source(tmp_path, rng):
    triples = random_graph(rng, 400)
    db = open_db(tmp_path, triples)
    sources = {s for s, _, _ in triples}
    assert len(db.base.store.readers["srd"].entries) == len(sources)
    db.close()


def test_scan_orderings_and_table_union(tmp_path, rng):
    triples = random_graph(rng, 2000)
    db = open_db(tmp_path, triples)
    ids = set(id_triples_of(db, triples))
    store = db.base.store
    # union of decoded source tables, re-keyed, equals the edge set
    union = {
        (key, first, second)
        for key, rows in store.scan_tables("srd")
        for first, second in rows
    }
    assert {(s, r, d) for s, r, d in ids} == {(k, f, s2) for k, f, s2 in union}
    baseline = None
    for ordering in ORDERINGS:
        scanned = list(store.scan_edges(ordering))
        assert set(scanned) == ids
        keys = [permute(t, ordering) for t in scanned]
        assert keys == sorted(keys)
        multiset = Counter(scanned)
        if baseline is None:
            baseline = multiset
        else:
            assert multiset == baseline
    db.close()


def test_get_table_matches_bruteforce(tmp_path, rng):
    triples = random_graph(rng, 1500)
    db = open_db(tmp_path, triples)
    ids = id_triples_of(db, triples)
    store = db.base.store
    by_source = {}
    for s, r, d in ids:
        by_source.setdefault(s, []).append((r, d))
    for s, rows in by_source.items():
        assert store.table_rows("srd", s) == tuple(sorted(rows))
    absent = max(x for t in ids for x in t) + 10
    assert store.table_rows("srd", absent) is None
    assert store.table_info("srd", absent) is None
    db.close()


def test_header_nm_coherence_and_counts(tmp_path, rng):
    triples = random_graph(rng, 1200)
    db = open_db(tmp_path, triples)
    store = db.base.store
    edges = db.base.edges
    for ordering in ORDERINGS:
        reader = store.readers[ordering]
        assert sum(e.n for e in reader.entries) == edges
        slot = STREAM_ORDER.index(ordering)
        for entry in reader.entries:
            rec = db.base.nm.get(entry.key)
            assert rec is not None
            assert rec.coords[slot] == entry.offset
            assert rec.descs[slot] == entry.desc_code
    # cardinality sums: each edge has one source, relation, destination
    total_s = total_r = total_d = 0
    for _, rec in db.base.nm.items():
        total_s += rec.card_s
        total_r += rec.card_r
        total_d += rec.card_d
    assert total_s == total_r == total_d == edges
    db.close()


def test_nm_backends_identical(tmp_path, rng):
    triples = random_graph(rng, 800)
    db_b = open_db(tmp_path, triples, name="btree", nm_backend="btree")
    db_a = open_db(tmp_path, triples, name="array", nm_backend="array")
    recs_b = dict(db_b.base.nm.items())
    recs_a = dict(db_a.base.nm.items())
    assert recs_b == recs_a
    rng2 = random.Random(1)
    top = max(recs_b) + 5
    for _ in range(2000):
        probe = rng2.randint(0, top)
        assert db_b.base.nm.get(probe) == db_a.base.nm.get(probe)
    db_b.close()
    db_a.close()


def test_nm_cards_match_roles(tmp_path):
    triples = [("a", "p", "b"), ("a", "p", "c"), ("a", "q", "b")]
    db = open_db(tmp_path, triples)
    a = db.dictionary.lookup_id(b"a", "entity")
    p = db.dictionary.lookup_id(b"p", "relation")
    b = db.dictionary.lookup_id(b"b", "entity")
    rec_a = db.base.nm.get(a)
    assert (rec_a.card_s, rec_a.card_r, rec_a.card_d) == (3, 0, 0)
    rec_p = db.base.nm.get(p)
    assert rec_p.card_r == 2
    rec_b = db.base.nm.get(b)
    assert (rec_b.card_s, rec_b.card_d) == (0, 2)
    db.close()


def test_coord_dereference_yields_card_rows(tmp_path, rng):
    triples = random_graph(rng, 600)
    db = open_db(tmp_path, triples)
    store = db.base.store
    for term_id, rec in db.base.nm.items():
        for ordering, card in (("srd", rec.card_s), ("rsd", rec.card_r),
                               ("drs", rec.card_d)):
            if card == 0:
                assert store.table_info(ordering, term_id) is None
                continue
            rows = store.table_rows(ordering, term_id)
            assert len(rows) == card
    db.close()


# -- on-the-fly reconstruction ------------------------------------------------


def ofr_graph(rng):
    """90% of labels tiny in primed roles, a few heavy hubs."""
    triples = set()
    for hub in range(4):
        for i in range(120):
            triples.add((f"hub{hub}", "r0", f"leaf{hub}_{i}"))
    for i in range(300):
        triples.add((f"s{i}", f"rare{i % 40}", f"t{i}"))
    return sorted(triples)


def test_ofr_prunes_small_primed_tables(tmp_path, rng):
    triples = ofr_graph(rng)
    plain_dir, _ = build_db(tmp_path, triples, name="plain", ofr=False)
    ofr_dir, _ = build_db(tmp_path, triples, name="ofr", ofr=True, eta=20)
    plain = Database(plain_dir)
    pruned = Database(ofr_dir)
    for ordering in PRIMED:
        sibling = COUNTERPART[ordering]
        reader = pruned.base.store.readers[ordering]
        for entry in reader.entries:
            if entry.n < 20:
                assert entry.pruned
            else:
                assert not entry.pruned
            # pruned descriptor mirrors the counterpart's
            if entry.pruned:
                sib = pruned.base.store.table_info(sibling, entry.key)
                assert sib.entry.desc_code == entry.desc_code
    # reconstruction equals the column swap of the counterpart
    for ordering in PRIMED:
        for entry in pruned.base.store.readers[ordering].entries:
            got = pruned.base.store.table_rows(ordering, entry.key)
            want = plain.base.store.table_rows(ordering, entry.key)
            assert got == want
    # scans remain complete
    for ordering in ORDERINGS:
        assert list(pruned.base.store.scan_edges(ordering)) == list(
            plain.base.store.scan_edges(ordering)
        )
    # pruning saves stream bytes
    plain_bytes = sum(
        os.path.getsize(os.path.join(plain_dir, f)) for f in STREAM_FILES.values()
    )
    ofr_bytes = sum(
        os.path.getsize(os.path.join(ofr_dir, f)) for f in STREAM_FILES.values()
    )
    assert ofr_bytes < plain_bytes
    plain.close()
    pruned.close()


def test_ofr_reconstruction_cached(tmp_path, rng):
    triples = ofr_graph(rng)
    db = open_db(tmp_path, triples, name="ofr", ofr=True)
    reader = db.base.store.readers["sdr"]
    key = next(e.key for e in reader.entries if e.pruned)
    first = db.base.store.table_rows("sdr", key)
    before = db.counters.table_bytes_read
    second = db.base.store.table_rows("sdr", key)
    assert first == second
    assert db.counters.table_bytes_read == before  # cache hit, no re-read
    db.close()


# -- aggregate indexing -------------------------------------------------------


def isa_graph():
    triples = []
    for i in range(500):
        triples.append((f"inst{i}", "isA", f"class{i % 4}"))
    for i in range(80):
        triples.append((f"inst{i}", "knows", f"inst{(i + 1) % 80}"))
    return triples


def test_aggregate_dual_build_reads_identical(tmp_path):
    triples = isa_graph()
    plain_dir, _ = build_db(tmp_path, triples, name="plain", aggr=False)
    aggr_dir, _ = build_db(tmp_path, triples, name="aggr", aggr=True)
    plain = Database(plain_dir)
    aggr = Database(aggr_dir)
    reader = aggr.base.store.readers["rds"]
    flagged = [e for e in reader.entries if e.flags & FLAG_AGGREGATED]
    assert flagged, "class-shaped relation should aggregate"
    for entry in flagged:
        assert unpack_descriptor(entry.desc_code).kind == AGGR
    for entry in reader.entries:
        got = aggr.base.store.table_rows("rds", entry.key)
        want = plain.base.store.table_rows("rds", entry.key)
        assert got == want
    aggr_bytes = os.path.getsize(os.path.join(aggr_dir, STREAM_FILES["rds"]))
    plain_bytes = os.path.getsize(os.path.join(plain_dir, STREAM_FILES["rds"]))
    assert aggr_bytes <= plain_bytes
    plain.close()
    aggr.close()


def test_functional_relation_stays_plain(tmp_path):
    triples = [(f"s{i}", "isbn", f"code{i}") for i in range(50)]
    db = open_db(tmp_path, triples, aggr=True)
    reader = db.base.store.readers["rds"]
    assert all(not (e.flags & FLAG_AGGREGATED) for e in reader.entries)
    db.close()


def test_aggregate_random_graphs_read_identical(tmp_path, rng):
    triples = random_graph(rng, 1500, n_rels=3)
    plain_dir, _ = build_db(tmp_path, triples, name="p", aggr=False)
    aggr_dir, _ = build_db(tmp_path, triples, name="a", aggr=True)
    plain = Database(plain_dir)
    aggr = Database(aggr_dir)
    for ordering in ORDERINGS:
        assert list(aggr.base.store.scan_edges(ordering)) == list(
            plain.base.store.scan_edges(ordering)
        )
    plain.close()
    aggr.close()
