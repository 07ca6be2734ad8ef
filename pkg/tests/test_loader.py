import gzip
import hashlib
import os
import random
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest

from conftest import build_db, random_graph, write_ntriples
from hexakg.database import Database, read_manifest
from hexakg.errors import ParseError, UsageError
from hexakg.ioutil import Counters
from hexakg.loader import (
    IoPool,
    LoadConfig,
    external_sort,
    iter_label_triples,
    load,
    parse_ntriples_line,
    parse_snap_line,
    term_to_ntriples,
)


def db_digest(directory):
    """Hash of every database file except the lock."""
    digest = hashlib.sha256()
    for root, dirs, files in sorted(os.walk(directory)):
        dirs.sort()
        for name in sorted(files):
            if name == ".lock":
                continue
            rel = os.path.relpath(os.path.join(root, name), directory)
            digest.update(rel.encode())
            digest.update(Path(root, name).read_bytes())
    return digest.hexdigest()


# -- parsing ------------------------------------------------------------------


def test_parse_ntriples_terms():
    line = b'<http://a/s> <http://a/p> "lit with \\" quote"@en .'
    s, p, o = parse_ntriples_line(line, 1)
    assert s == b"http://a/s"
    assert p == b"http://a/p"
    assert o == b'"lit with \\" quote"@en'


def test_parse_ntriples_blank_and_iri_object():
    assert parse_ntriples_line(b"_:b0 <p> <o> .", 1) == (b"_:b0", b"p", b"o")
    assert parse_ntriples_line(b"# comment", 1) is None
    assert parse_ntriples_line(b"", 1) is None


def test_parse_ntriples_errors_carry_line():
    with pytest.raises(ParseError) as err:
        parse_ntriples_line(b"<s> <p> <o>", 42)
    assert "42" in str(err.value)


def test_parse_snap():
    assert parse_snap_line(b"3\t9", 1) == (b"3", b"edge", b"9")
    with pytest.raises(ParseError):
        parse_snap_line(b"1 2 3", 1)


def test_term_round_trip():
    for label in (b"http://x/y", b'"lit"^^<t>', b"_:node"):
        token = term_to_ntriples(label)
        line = b"<s> <p> " + token + b" ."
        assert parse_ntriples_line(line, 1)[2] == label


def test_gzip_input(tmp_path):
    path = tmp_path / "g.nt.gz"
    with gzip.open(path, "wb") as f:
        f.write(b"<a> <p> <b> .\n")
    assert list(iter_label_triples(str(path), "ntriples")) == [(b"a", b"p", b"b")]


# -- external sort ------------------------------------------------------------


def _write_encoded(path, triples):
    with open(path, "wb") as f:
        for s, r, d in triples:
            f.write(
                s.to_bytes(5, "little")
                + r.to_bytes(5, "little")
                + d.to_bytes(5, "little")
            )


def _read_sorted(path):
    out = []
    data = Path(path).read_bytes()
    for i in range(0, len(data), 15):
        rec = data[i : i + 15]
        out.append(
            tuple(int.from_bytes(rec[j : j + 5], "big") for j in (0, 5, 10))
        )
    return out


def _sort_with_budget(tmp_path, triples, ordering, budget, name):
    enc = str(tmp_path / f"{name}.bin")
    out = str(tmp_path / f"{name}.sorted")
    _write_encoded(enc, triples)
    io = IoPool(1, Counters())
    proc = ThreadPoolExecutor(1)
    try:
        n = external_sort(enc, ordering, out, str(tmp_path), budget, io, proc, 1)
    finally:
        io.shutdown()
        proc.shutdown()
    return n, _read_sorted(out)


def test_external_sort_orders_and_dedups(tmp_path):
    rng = random.Random(5)
    triples = [
        (rng.randint(0, 50), rng.randint(0, 3), rng.randint(0, 50))
        for _ in range(5000)
    ]
    expected = sorted({(r, d, s) for s, r, d in triples})
    n, got = _sort_with_budget(
        tmp_path, triples, "rds", 128 * 4096, "small"
    )
    assert n == len(expected)
    assert got == expected


def test_external_sort_budget_independent(tmp_path):
    rng = random.Random(6)
    triples = [
        (rng.randint(0, 900), rng.randint(0, 5), rng.randint(0, 900))
        for _ in range(30_000)
    ]
    # small budget forces >= 4 runs; big budget sorts in one run
    n1, small = _sort_with_budget(tmp_path, triples, "dsr", 128 * 4096, "a")
    n2, big = _sort_with_budget(tmp_path, triples, "dsr", 128 * 400_000, "b")
    assert small == big
    assert n1 == n2 == len({tuple(t) for t in triples})


# -- whole loads --------------------------------------------------------------


def test_empty_input_yields_valid_empty_db(tmp_path):
    src = tmp_path / "empty.nt"
    src.write_bytes(b"")
    target = str(tmp_path / "db")
    report = load(LoadConfig(), str(src), target)
    assert report.edges == 0
    with Database(target) as db:
        for ordering in ("srd", "rds"):
            assert list(db.base.store.scan_edges(ordering)) == []
        assert db.dictionary.count() == 0


def test_duplicates_dropped(tmp_path):
    triples = [("a", "p", "b")] * 4 + [("a", "p", "c")]
    target, report = build_db(tmp_path, triples)
    assert report.edges == 2
    assert report.skipped_duplicates == 3


def test_dictionary_counts(tmp_path):
    triples = [("a", "p", "b"), ("b", "q", "c"), ("a", "q", "c")]
    target, report = build_db(tmp_path, triples)
    # 5 distinct terms in global mode: a, p, b, q, c
    assert report.entity_labels == 5


def test_load_refuses_nonempty_target(tmp_path):
    src = write_ntriples(tmp_path / "x.nt", [("a", "p", "b")])
    target = tmp_path / "db"
    target.mkdir()
    (target / "junk").write_text("x")
    with pytest.raises(UsageError):
        load(LoadConfig(), src, str(target))


def test_failed_load_removes_partial_dir(tmp_path):
    src = tmp_path / "bad.nt"
    src.write_bytes(b"<a> <p> <b> .\nnot a triple\n")
    target = str(tmp_path / "db")
    with pytest.raises(ParseError):
        load(LoadConfig(), str(src), target)
    assert not os.path.exists(target)


def test_snap_format(tmp_path):
    src = tmp_path / "g.snap"
    src.write_bytes(b"# comment\n1 2\n2 3\n1 3\n")
    target = str(tmp_path / "db")
    report = load(LoadConfig(input_format="snap"), str(src), target)
    assert report.edges == 3
    with Database(target) as db:
        rid = db.dictionary.lookup_id(b"edge", "relation")
        assert rid is not None


def test_encoded_format(tmp_path):
    src = tmp_path / "g.ids"
    src.write_bytes(b"5 0 6\n6 0 7\n5 0 6\n")
    target = str(tmp_path / "db")
    report = load(LoadConfig(input_format="encoded"), str(src), target)
    assert report.edges == 2
    manifest = read_manifest(target)
    assert manifest.next_ids == [8, 8]


def test_deterministic_across_worker_counts(tmp_path, rng):
    triples = random_graph(rng, 3000)
    t1, _ = build_db(
        tmp_path, triples, name="w1", proc_workers=1, io_workers=1,
        sort_mem_bytes=128 * 4096,
    )
    t2, _ = build_db(
        tmp_path, triples, name="w4", proc_workers=4, io_workers=2,
        sort_mem_bytes=128 * 8192,
    )
    assert db_digest(t1) == db_digest(t2)


def test_io_pool_bounds_inflight():
    counters = Counters()
    pool = IoPool(2, counters)
    import time

    def op():
        time.sleep(0.01)

    outer = ThreadPoolExecutor(8)
    futs = [outer.submit(pool.run, op) for _ in range(32)]
    for f in futs:
        f.result()
    outer.shutdown()
    pool.shutdown()
    assert counters.io_max_inflight <= 2
