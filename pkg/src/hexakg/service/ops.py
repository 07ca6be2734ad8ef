"""Service operations: the one place request models meet the engine.

Both the HTTP endpoints and the CLI go through these functions, so the
two surfaces cannot drift.  Read operations hold a shared database
lock; load/update/merge rely on the exclusive locks the engine takes
itself.
"""
from __future__ import annotations

import os
from typing import Iterator, List, Tuple

from .. import bgp, deltas, loader, primitives
from ..database import Database, locked
from ..errors import ParseError, UsageError
from ..layout import unpack_descriptor
from ..model import ORDERINGS, TriplePattern, Var
from ..streams import FLAG_AGGREGATED, FLAG_PRUNED
from . import models


def do_load(req: models.LoadRequest) -> models.LoadResponse:
    config = loader.LoadConfig(
        input_format=req.format,
        id_mode=req.id_mode,
        nm_backend=req.nm,
        ofr=req.ofr,
        eta=req.eta,
        aggr=req.aggr,
        tau=req.tau,
        upsilon=req.upsilon,
        proc_workers=req.proc_workers,
        io_workers=req.io_workers,
        sort_mem_bytes=req.sort_mem_bytes,
        tmp_dir=req.tmp_dir,
    )
    report = loader.load(config, req.input, req.db)
    return models.LoadResponse(
        db=req.db,
        edges=report.edges,
        entity_labels=report.entity_labels,
        relation_labels=report.relation_labels,
        skipped_duplicates=report.skipped_duplicates,
        layout_counts=report.layout_counts,
        layout_totals=report.layout_totals(),
        file_bytes=report.file_bytes,
    )


def do_query(req: models.QueryRequest) -> models.QueryResponse:
    with locked(req.db, exclusive=False):
        with Database(req.db) as db:
            variables, rows = bgp.answer(db, req.query)
            return models.QueryResponse(
                variables=variables,
                rows=[
                    [models.label_to_str(v) if v is not None else "" for v in row]
                    for row in rows
                ],
                count=len(rows),
            )


def _parse_pattern(db: Database, text: str) -> Tuple[TriplePattern, bool]:
    """Pattern from '?var label ?var' tokens; second value is False when a
    constant label is unknown (empty answers, not an error)."""
    tokens = text.split()
    if len(tokens) != 3:
        raise UsageError("pattern needs three whitespace-separated terms")
    slots = []
    known = True
    for position, token in zip("srd", tokens):
        if token.startswith("?"):
            slots.append(Var(token[1:] or "v"))
            continue
        kind = "relation" if position == "r" else "entity"
        term_id = db.dictionary.lookup_id(models.str_to_label(token), kind)
        if term_id is None:
            known = False
            slots.append(Var(f"_missing_{position}"))
        else:
            slots.append(term_id)
    return TriplePattern(*slots), known


def do_probe(req: models.ProbeRequest) -> models.ProbeResponse:
    with locked(req.db, exclusive=False):
        with Database(req.db) as db:
            return _probe(db, req)


def _probe(db: Database, req: models.ProbeRequest) -> models.ProbeResponse:
    name = req.primitive
    if name in ("node-label", "relation-label"):
        if req.term_id is None:
            raise UsageError(f"{name} needs --id")
        fn = primitives.node_label if name == "node-label" else primitives.relation_label
        return models.ProbeResponse(
            primitive=name, label=models.label_to_str(fn(db, req.term_id))
        )
    if name in ("node-id", "relation-id"):
        if req.label is None:
            raise UsageError(f"{name} needs --label")
        fn = primitives.node_id if name == "node-id" else primitives.relation_id
        return models.ProbeResponse(
            primitive=name, value=fn(db, models.str_to_label(req.label))
        )
    if req.pattern is None:
        raise UsageError(f"{name} needs --pattern")
    pattern, known = _parse_pattern(db, req.pattern)
    if name == "edges":
        ordering = req.ordering or "srd"
        if ordering not in ORDERINGS:
            raise UsageError(f"bad ordering {ordering!r}")
        rows: List[List[str]] = []
        if known:
            for s, r, d in primitives.edges(db, ordering, pattern):
                rows.append(_label_row(db, (s, r, d)))
        return models.ProbeResponse(primitive=name, rows=rows, count=len(rows))
    if name == "groups":
        if not req.grouping:
            raise UsageError("groups needs --grouping")
        groups = []
        if known:
            for key, count in primitives.group_counts(db, req.grouping, pattern):
                groups.append([*key, count])
        return models.ProbeResponse(primitive=name, groups=groups, count=len(groups))
    if name == "count":
        if not known:
            return models.ProbeResponse(primitive=name, count=0)
        if req.grouping:
            value = primitives.count_groups(db, req.grouping, pattern)
        else:
            value = primitives.count_edges(db, pattern)
        return models.ProbeResponse(primitive=name, count=value)
    if name == "edge-at":
        if req.index is None:
            raise UsageError("edge-at needs --index")
        if not known:
            raise primitives.IndexOutOfRangeError(
                f"index {req.index} out of range"
            )
        edge = primitives.edge_at(db, req.ordering or "srd", pattern, req.index)
        return models.ProbeResponse(
            primitive=name, rows=[_label_row(db, edge)], count=1
        )
    raise UsageError(f"unknown primitive {name!r}")


def _label_row(db: Database, edge: tuple) -> List[str]:
    s, r, d = edge
    return [
        models.label_to_str(db.dictionary.lookup_label(s, "entity") or b""),
        models.label_to_str(db.dictionary.lookup_label(r, "relation") or b""),
        models.label_to_str(db.dictionary.lookup_label(d, "entity") or b""),
    ]


def _iter_update_triples(req: models.UpdateRequest) -> Iterator[tuple]:
    if req.triples is not None:
        for row in req.triples:
            if len(row) != 3:
                raise UsageError("inline triples must have three terms")
            yield tuple(models.str_to_label(t) for t in row)
    elif req.input:
        yield from loader.iter_label_triples(req.input, "ntriples")
    else:
        raise UsageError("update needs either input or triples")


def do_update(req: models.UpdateRequest) -> models.UpdateResponse:
    if req.action not in ("add", "remove"):
        raise UsageError("update action must be add or remove")
    kind = deltas.ADD if req.action == "add" else deltas.REM
    report = deltas.apply_update(req.db, _iter_update_triples(req), kind)
    return models.UpdateResponse(
        action=req.action,
        requested=report.requested,
        applied=report.applied,
        skipped=report.skipped,
        delta_name=report.delta_name,
        delta_count=report.delta_count,
        reload_recommended=report.reload_recommended,
    )


def do_merge(db_path: str) -> models.MergeResponse:
    report = deltas.merge_deltas(db_path)
    return models.MergeResponse(
        merged=report.merged,
        delta_count=report.delta_count,
        delta_edges=report.delta_edges,
        reload_recommended=report.reload_recommended,
    )


def do_stats(db_path: str) -> models.StatsResponse:
    with locked(db_path, exclusive=False):
        with Database(db_path) as db:
            layout_counts = {}
            for ordering, reader in sorted(db.base.store.readers.items()):
                counts: dict = {}
                for e in reader.entries:
                    if e.flags & FLAG_PRUNED:
                        kind = "PRUNED"
                    elif e.flags & FLAG_AGGREGATED:
                        kind = "AGGR"
                    else:
                        kind = unpack_descriptor(e.desc_code).kind
                    counts[kind] = counts.get(kind, 0) + 1
                layout_counts[ordering] = counts
            totals: dict = {}
            for counts in layout_counts.values():
                for kind, n in counts.items():
                    totals[kind] = totals.get(kind, 0) + n
            file_bytes = {}
            for root, _, files in os.walk(db_path):
                for fname in files:
                    full = os.path.join(root, fname)
                    rel = os.path.relpath(full, db_path)
                    if rel == ".lock":
                        continue
                    file_bytes[rel] = os.path.getsize(full)
            return models.StatsResponse(
                db=db_path,
                edges=db.visible_edge_count(),
                base_edges=db.base.edges,
                entity_labels=db.dictionary.count("entity"),
                relation_labels=(
                    db.dictionary.count("relation")
                    if db.id_mode == "split"
                    else 0
                ),
                id_mode=db.id_mode,
                nm_backend=db.manifest.nm_backend,
                layout_counts=layout_counts,
                layout_totals=totals,
                file_bytes=dict(sorted(file_bytes.items())),
                deltas=[
                    models.DeltaStats(
                        name=d.name, seq=d.seq, kind=d.kind, edges=d.edges
                    )
                    for d in db.manifest.deltas
                ],
                reload_recommended=db.reload_recommended(),
            )
