import json

import pytest
from click.testing import CliRunner

from conftest import random_graph, write_ntriples
from hexakg.cli import main
from hexakg.service import models, ops


@pytest.fixture
def runner():
    return CliRunner()


def _load_cli(runner, tmp_path, triples, name="db", extra=()):
    source = write_ntriples(tmp_path / f"{name}.nt", triples)
    db = str(tmp_path / name)
    result = runner.invoke(main, ["load", db, "--input", source, *extra])
    assert result.exit_code == 0, result.output
    return db


def test_load_and_stats(runner, tmp_path, rng):
    triples = random_graph(rng, 120)
    db = _load_cli(runner, tmp_path, triples)
    result = runner.invoke(main, ["stats", db])
    assert result.exit_code == 0
    assert f"edges: {len(set(triples))}" in result.output
    result = runner.invoke(main, ["stats", db, "--json"])
    body = json.loads(result.output)
    assert body["edges"] == len(set(triples))
    assert sum(body["layout_totals"].values()) == sum(
        sum(v.values()) for v in body["layout_counts"].values()
    )


def test_query_tsv_output_and_determinism(runner, tmp_path):
    db = _load_cli(
        runner, tmp_path,
        [("Eli", "isA", "Professor"), ("Eli", "livesIn", "Rome")],
    )
    args = ["query", db, "--query", "SELECT ?s ?o { ?s isA ?o . ?s livesIn Rome . }"]
    first = runner.invoke(main, args)
    second = runner.invoke(main, args)
    assert first.exit_code == 0
    assert first.stdout == "?s\t?o\nEli\tProfessor\n"
    assert "1 rows" in first.stderr
    assert first.stdout == second.stdout


def test_query_empty_result_is_header_only(runner, tmp_path):
    db = _load_cli(runner, tmp_path, [("a", "p", "b")])
    result = runner.invoke(main, ["query", db, "--query", "SELECT ?x { ?x p Ghost . }"])
    assert result.exit_code == 0
    assert result.stdout == "?x\n"
    assert "0 rows" in result.stderr


def test_cli_equals_service_layer(runner, tmp_path, rng):
    triples = random_graph(rng, 150)
    db = _load_cli(runner, tmp_path, triples)
    query = "SELECT ?x ?y { ?x r0 ?y . }"
    via_cli = runner.invoke(main, ["query", db, "--query", query, "--json"])
    via_ops = ops.do_query(models.QueryRequest(db=db, query=query))
    assert json.loads(via_cli.output) == via_ops.model_dump()


def test_probe_count_and_groups(runner, tmp_path):
    db = _load_cli(runner, tmp_path, [("a", "p", "b"), ("a", "p", "c")])
    result = runner.invoke(
        main, ["probe", db, "--primitive", "count", "--pattern", "?x p ?y"]
    )
    assert result.exit_code == 0
    assert result.stdout.strip() == "2"
    result = runner.invoke(
        main,
        ["probe", db, "--primitive", "groups", "--grouping", "s",
         "--pattern", "?x ?y ?z"],
    )
    assert result.exit_code == 0
    line = result.stdout.strip().split("\t")
    assert line[1] == "2"


def test_probe_edge_at_out_of_range_exits_usage(runner, tmp_path):
    db = _load_cli(runner, tmp_path, [("a", "p", "b")])
    result = runner.invoke(
        main,
        ["probe", db, "--primitive", "edge-at", "--pattern", "?x ?y ?z",
         "--index", "5"],
    )
    assert result.exit_code == 2


def test_update_merge_flow(runner, tmp_path):
    db = _load_cli(runner, tmp_path, [("a", "p", "b")])
    add_file = write_ntriples(tmp_path / "add.nt", [("x", "p", "y")])
    result = runner.invoke(main, ["update", db, "add", "--input", add_file])
    assert result.exit_code == 0
    assert "deltas: 1" in result.output
    rem_file = write_ntriples(
        tmp_path / "rem.nt", [("a", "p", "b"), ("ghost", "p", "b")]
    )
    result = runner.invoke(main, ["update", db, "remove", "--input", rem_file])
    assert result.exit_code == 0
    assert "skipped 1" in result.output
    result = runner.invoke(main, ["merge", db])
    assert result.exit_code == 0
    assert "deltas: 2" in result.output
    result = runner.invoke(main, ["stats", db, "--json"])
    assert len(json.loads(result.output)["deltas"]) == 2


def test_exit_codes(runner, tmp_path):
    db = _load_cli(runner, tmp_path, [("a", "p", "b")])
    # usage: unknown flag value
    source = write_ntriples(tmp_path / "x.nt", [("a", "p", "b")])
    result = runner.invoke(
        main, ["load", str(tmp_path / "db2"), "--input", source, "--format", "xml"]
    )
    assert result.exit_code == 2
    # parse: bad query
    result = runner.invoke(main, ["query", db, "--query", "garbage"])
    assert result.exit_code == 3
    # usage: load over an existing database
    result = runner.invoke(main, ["load", db, "--input", source])
    assert result.exit_code == 2
    # busy: lock held
    from hexakg.database import DbLock

    held = DbLock(db, exclusive=True)
    try:
        add_file = write_ntriples(tmp_path / "a.nt", [("k", "p", "l")])
        result = runner.invoke(main, ["update", db, "add", "--input", add_file])
        assert result.exit_code == 5
    finally:
        held.release()
    # parse: malformed input data
    bad = tmp_path / "bad.nt"
    bad.write_bytes(b"this is not ntriples\n")
    result = runner.invoke(
        main, ["load", str(tmp_path / "db3"), "--input", str(bad)]
    )
    assert result.exit_code == 3


def test_ofr_flag_shrinks_database(runner, tmp_path):
    import os

    triples = [(f"s{i}", f"r{i % 30}", f"d{i}") for i in range(400)]
    src = write_ntriples(tmp_path / "g.nt", triples)
    r1 = runner.invoke(main, ["load", str(tmp_path / "plain"), "--input", src, "--json"])
    r2 = runner.invoke(
        main, ["load", str(tmp_path / "ofr"), "--input", src, "--ofr", "--json"]
    )
    assert r1.exit_code == 0 and r2.exit_code == 0
    plain_bytes = json.loads(r1.output)["file_bytes"]
    ofr_bytes = json.loads(r2.output)["file_bytes"]
    streams = [f for f in plain_bytes if f.endswith(".bin")]
    assert sum(ofr_bytes[f] for f in streams) <= sum(plain_bytes[f] for f in streams)
