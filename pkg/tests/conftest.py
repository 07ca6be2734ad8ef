import random

import pytest

from hexakg.database import Database
from hexakg.loader import LoadConfig, load

ALL_ORDERINGS = ("srd", "sdr", "drs", "dsr", "rsd", "rds")


def random_graph(rng, n_edges, n_nodes=None, n_rels=None, hubby=True):
    """Random labeled digraph as (s, r, d) label-string triples.

    ``hubby`` mixes a skewed hub distribution into the endpoints so that
    some labels get dense tables and most stay sparse.
    """
    n_nodes = n_nodes or max(4, rng.randint(n_edges // 6 + 2, n_edges // 2 + 4))
    n_rels = n_rels or rng.randint(1, 10)

    def node():
        if hubby and rng.random() < 0.35:
            return rng.randint(0, max(0, n_nodes // 20))
        return rng.randint(0, n_nodes - 1)

    edges = set()
    attempts = 0
    while len(edges) < n_edges and attempts < n_edges * 30:
        attempts += 1
        edges.add((node(), rng.randint(0, n_rels - 1), node()))
    return sorted(
        (f"n{s}", f"r{r}", f"n{d}") for s, r, d in edges
    )


def write_ntriples(path, label_triples):
    with open(path, "wb") as f:
        for s, r, d in label_triples:
            f.write(f"<{s}> <{r}> <{d}> .\n".encode())
    return str(path)


def build_db(tmp_path, label_triples, name="db", **config_kwargs):
    source = write_ntriples(tmp_path / f"{name}.nt", label_triples)
    target = str(tmp_path / name)
    config = LoadConfig(**config_kwargs)
    report = load(config, source, target)
    return target, report


def open_db(tmp_path, label_triples, name="db", **config_kwargs):
    target, _ = build_db(tmp_path, label_triples, name=name, **config_kwargs)
    return Database(target)


def id_triples_of(db, label_triples):
    """Map label triples into id space through the open database."""
    out = []
    for s, r, d in label_triples:
        sid = db.dictionary.lookup_id(s.encode(), "entity")
        rid = db.dictionary.lookup_id(r.encode(), "relation")
        did = db.dictionary.lookup_id(d.encode(), "entity")
        assert None not in (sid, rid, did)
        out.append((sid, rid, did))
    return out


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
