"""Incremental updates: timestamped addition/removal overlays.

Each update becomes its own component directory ``delta-<seq>-<kind>``
with streams and a node index (and a dictionary segment when it
introduces new terms, continuing the global id counters).  Applied
invariants: an addition never contains an already-visible triple, a
removal only visible ones; non-removable triples are counted and
skipped.  Merging folds everything into at most one addition and one
removal delta, cancelling add/remove pairs, without touching base
files.  The manifest rewrite is the commit point.
"""
from __future__ import annotations

import os
import shutil
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

from . import primitives
from .database import (
    Database,
    DbLock,
    DeltaInfo,
    read_manifest,
    write_manifest,
)
from .dictionary import ENTITY, RELATION, Dictionary
from .errors import UsageError
from .loader import LoadConfig, build_component_from_ids
from .model import TriplePattern

ADD = "add"
REM = "rem"


@dataclass
class UpdateReport:
    kind: str
    requested: int
    applied: int
    skipped: int
    delta_name: Optional[str]
    delta_count: int
    reload_recommended: bool


@dataclass
class MergeReport:
    merged: bool
    delta_count: int
    delta_edges: int
    reload_recommended: bool


def _delta_config(manifest, workers: int = 1) -> LoadConfig:
    # deltas reuse the stream format but skip pruning/aggregation
    return LoadConfig(
        id_mode=manifest.id_mode,
        nm_backend=manifest.nm_backend,
        ofr=False,
        aggr=False,
        tau=manifest.tau,
        upsilon=manifest.upsilon,
        proc_workers=workers,
        io_workers=workers,
        block_size=manifest.block_size,
    )


def _is_visible(db: Database, triple: Tuple[int, int, int]) -> bool:
    s, r, d = triple
    return primitives.count_edges(db, TriplePattern(s, r, d)) > 0


def apply_update(
    directory: str, label_triples: Iterable[Tuple[bytes, bytes, bytes]], kind: str
) -> UpdateReport:
    """Encode and stage one addition or removal batch."""
    if kind not in (ADD, REM):
        raise UsageError(f"update kind must be add or rem, not {kind!r}")
    lock = DbLock(directory, exclusive=True)
    db = None
    delta_dir = None
    new_dict = None
    try:
        db = Database(directory)
        manifest = db.manifest
        seq = manifest.next_delta_seq
        name = f"delta-{seq:04d}-{kind}"
        delta_dir = os.path.join(directory, name)

        requested = 0
        skipped = 0
        kept: List[Tuple[int, int, int]] = []
        seen = set()
        for s_label, r_label, d_label in label_triples:
            requested += 1
            sid = db.dictionary.lookup_id(s_label, ENTITY)
            rid = db.dictionary.lookup_id(r_label, RELATION)
            did = db.dictionary.lookup_id(d_label, ENTITY)
            if kind == REM:
                if sid is None or rid is None or did is None:
                    skipped += 1
                    continue
            else:
                if sid is None or rid is None or did is None:
                    if new_dict is None:
                        os.makedirs(delta_dir, exist_ok=True)
                        new_dict = Dictionary(
                            delta_dir,
                            manifest.id_mode,
                            writable=True,
                            start_ids=tuple(manifest.next_ids),
                            block_size=manifest.block_size,
                        )
                    sid = sid if sid is not None else new_dict.assign_id(s_label, ENTITY)
                    rid = rid if rid is not None else new_dict.assign_id(r_label, RELATION)
                    did = did if did is not None else new_dict.assign_id(d_label, ENTITY)
            triple = (sid, rid, did)
            if triple in seen:
                skipped += 1
                continue
            visible = _is_visible(db, triple)
            if (kind == ADD and visible) or (kind == REM and not visible):
                skipped += 1
                continue
            seen.add(triple)
            kept.append(triple)

        if new_dict is not None:
            manifest.next_ids = [new_dict.next_entity, new_dict.next_relation]
            new_dict.close()
            new_dict = None

        if not kept:
            if delta_dir and os.path.isdir(delta_dir):
                shutil.rmtree(delta_dir)
            db.close()
            db = Database(directory)
            return UpdateReport(
                kind, requested, 0, skipped, None,
                len(db.manifest.deltas), db.reload_recommended(),
            )

        kept.sort()
        os.makedirs(delta_dir, exist_ok=True)
        edges = build_component_from_ids(delta_dir, kept, _delta_config(manifest))
        manifest.deltas.append(DeltaInfo(name, seq, kind, edges))
        manifest.next_delta_seq = seq + 1
        write_manifest(directory, manifest)
        db.close()
        db = Database(directory)
        return UpdateReport(
            kind, requested, edges, skipped, name,
            len(db.manifest.deltas), db.reload_recommended(),
        )
    except BaseException:
        if new_dict is not None:
            new_dict.close()
        if delta_dir and os.path.isdir(delta_dir):
            shutil.rmtree(delta_dir, ignore_errors=True)
        raise
    finally:
        if db is not None:
            db.close()
        lock.release()


def merge_deltas(directory: str) -> MergeReport:
    """Fold all deltas into at most one addition and one removal."""
    lock = DbLock(directory, exclusive=True)
    db = None
    staged: List[str] = []
    try:
        db = Database(directory)
        manifest = db.manifest
        if not manifest.deltas:
            return MergeReport(False, 0, 0, False)

        net_add: set = set()
        net_rem: set = set()
        for delta in db.deltas:
            for triple in delta.component.store.scan_edges("srd"):
                if delta.info.kind == ADD:
                    if triple in net_rem:
                        net_rem.discard(triple)
                    else:
                        net_add.add(triple)
                else:
                    if triple in net_add:
                        net_add.discard(triple)
                    else:
                        net_rem.add(triple)

        # carry every term the old delta segments introduced
        term_rows: List[Tuple[bytes, int, str]] = []
        for delta in db.deltas:
            seg = delta.component.dictionary
            if seg is None:
                continue
            kinds = (ENTITY, RELATION) if manifest.id_mode == "split" else (ENTITY,)
            for seg_kind in kinds:
                for term_id, label in seg.labels(seg_kind):
                    term_rows.append((label, term_id, seg_kind))

        old_dirs = [os.path.join(directory, d.name) for d in manifest.deltas]
        seq = manifest.next_delta_seq
        new_infos: List[DeltaInfo] = []
        config = _delta_config(manifest)

        for kind, triples in ((ADD, net_add), (REM, net_rem)):
            if not triples:
                continue
            name = f"delta-{seq:04d}-{kind}"
            path = os.path.join(directory, name)
            staged.append(path)
            os.makedirs(path, exist_ok=True)
            if kind == ADD and term_rows:
                starts = [
                    min(
                        d.component.dictionary.start_entity
                        for d in db.deltas
                        if d.component.dictionary is not None
                    ),
                    min(
                        d.component.dictionary.start_relation
                        for d in db.deltas
                        if d.component.dictionary is not None
                    ),
                ]
                seg = Dictionary(
                    path,
                    manifest.id_mode,
                    writable=True,
                    start_ids=tuple(starts),
                    block_size=manifest.block_size,
                )
                for label, term_id, seg_kind in term_rows:
                    seg.put_existing(label, term_id, seg_kind)
                seg.close()
            edges = build_component_from_ids(path, sorted(triples), config)
            new_infos.append(DeltaInfo(name, seq, kind, edges))
            seq += 1

        manifest.deltas = new_infos
        manifest.next_delta_seq = seq
        write_manifest(directory, manifest)
        staged = []
        db.close()
        db = None
        for old in old_dirs:
            shutil.rmtree(old, ignore_errors=True)

        db = Database(directory)
        return MergeReport(
            True,
            len(db.manifest.deltas),
            sum(d.edges for d in db.manifest.deltas),
            db.reload_recommended(),
        )
    except BaseException:
        for path in staged:
            shutil.rmtree(path, ignore_errors=True)
        raise
    finally:
        if db is not None:
            db.close()
        lock.release()
