"""Bidirectional label <-> term-id mapping.

Labels live in ``labels.blk``, an append-only stream of fixed-size
blocks: a label that does not fit the current block's remainder starts
at the next block boundary (oversized labels span blocks).  Two B+Trees
index the mapping: ``dict_l.btree`` (label -> id) and ``dict_i.btree``
(kind tag + big-endian id -> label location).  Split id-mode adds
``rel.btree`` so relation labels get an independent id space; the same
numeric id may then name both an entity and a relation, disambiguated
by the ``kind`` argument.

Ids are dense counters from 0.  A dictionary segment may start its
counters above 0 (delta segments continue the global assignment).
"""
from __future__ import annotations

import json
import os
import struct
from typing import Iterator, Optional, Tuple

from .btree import BPlusTree
from .errors import IdSpaceExhaustedError, StorageError, UsageError
from .ioutil import MAX_TERM_ID, pack_id_be

ENTITY = "entity"
RELATION = "relation"

_TAG = {ENTITY: b"\x00", RELATION: b"\x01"}
_LOC = struct.Struct("<QI")  # offset, length in labels.blk

DEFAULT_BLOCK_SIZE = 4096


class LabelStore:
    """Append-only block stream holding raw label bytes."""

    def __init__(self, path: str, writable: bool, block_size: int):
        self.block_size = block_size
        mode = "r+b" if os.path.exists(path) else "w+b"
        if not writable:
            if not os.path.exists(path):
                raise StorageError(f"missing label store {path}")
            mode = "rb"
        self._f = open(path, mode)
        self._f.seek(0, os.SEEK_END)
        self._size = self._f.tell()

    def append(self, label: bytes) -> Tuple[int, int]:
        rem = -self._size % self.block_size
        if rem and len(label) > rem and len(label) <= self.block_size:
            self._f.seek(0, os.SEEK_END)
            self._f.write(b"\x00" * rem)
            self._size += rem
        offset = self._size
        self._f.seek(0, os.SEEK_END)
        self._f.write(label)
        self._size += len(label)
        return offset, len(label)

    def read(self, offset: int, length: int) -> bytes:
        self._f.seek(offset)
        buf = self._f.read(length)
        if len(buf) != length:
            raise StorageError("label store truncated")
        return buf

    def flush(self) -> None:
        if self._f.writable():
            self._f.flush()
            os.fsync(self._f.fileno())

    def close(self) -> None:
        if not self._f.closed:
            self.flush() if self._f.writable() else None
            self._f.close()


class Dictionary:
    """One dictionary segment (the base database or one delta)."""

    def __init__(
        self,
        directory: str,
        mode: str = "global",
        writable: bool = False,
        start_ids: Tuple[int, int] = (0, 0),
        block_size: int = DEFAULT_BLOCK_SIZE,
    ):
        if mode not in ("global", "split"):
            raise UsageError(f"bad id mode {mode!r}")
        self.directory = directory
        self.mode = mode
        self.writable = writable
        self._meta_path = os.path.join(directory, "dict_meta.json")
        if os.path.exists(self._meta_path):
            with open(self._meta_path) as f:
                meta = json.load(f)
            if meta["mode"] != mode:
                raise UsageError(
                    f"dictionary is {meta['mode']} mode, opened as {mode}"
                )
            self.start_entity, self.start_relation = meta["start_ids"]
            self.next_entity, self.next_relation = meta["next_ids"]
            block_size = meta["block_size"]
        else:
            if not writable:
                raise StorageError(f"no dictionary in {directory}")
            self.start_entity, self.start_relation = start_ids
            self.next_entity, self.next_relation = start_ids
        self.block_size = block_size
        self._labels = LabelStore(
            os.path.join(directory, "labels.blk"), writable, block_size
        )
        self._by_label = BPlusTree(
            os.path.join(directory, "dict_l.btree"), writable
        )
        self._by_id = BPlusTree(
            os.path.join(directory, "dict_i.btree"), writable
        )
        self._rel_by_label = None
        if mode == "split":
            self._rel_by_label = BPlusTree(
                os.path.join(directory, "rel.btree"), writable
            )
        # write-through cache, only while writable: bulk loading does three
        # label lookups per input triple
        self._cache: Optional[dict] = {} if writable else None

    # -- lookups --------------------------------------------------------

    def lookup_id(self, label: bytes, kind: str = ENTITY) -> Optional[int]:
        if self._cache is not None:
            hit = self._cache.get(self._cache_key(label, kind))
            if hit is not None:
                return hit
        value = self._label_tree(kind).get(label)
        if value is None:
            return None
        term_id = int.from_bytes(value, "little")
        if self._cache is not None:
            self._cache[self._cache_key(label, kind)] = term_id
        return term_id

    def _cache_key(self, label: bytes, kind: str) -> tuple:
        if self.mode == "split" and kind == RELATION:
            return (1, label)
        return (0, label)

    def lookup_label(self, term_id: int, kind: str = ENTITY) -> Optional[bytes]:
        value = self._by_id.get(self._id_key(term_id, kind))
        if value is None:
            return None
        offset, length = _LOC.unpack(value)
        return self._labels.read(offset, length)

    def owns_id(self, term_id: int, kind: str = ENTITY) -> bool:
        if self.mode == "split" and kind == RELATION:
            return self.start_relation <= term_id < self.next_relation
        return self.start_entity <= term_id < self.next_entity

    def count(self, kind: str = ENTITY) -> int:
        if self.mode == "split" and kind == RELATION:
            return self.next_relation - self.start_relation
        return self.next_entity - self.start_entity

    def labels(self, kind: str = ENTITY) -> Iterator[Tuple[int, bytes]]:
        tag = _TAG[kind if self.mode == "split" else ENTITY]
        for key, value in self._by_id.items():
            if key[:1] != tag:
                continue
            offset, length = _LOC.unpack(value)
            yield int.from_bytes(key[1:], "big"), self._labels.read(offset, length)

    # -- assignment -------------------------------------------------------

    def assign_id(self, label: bytes, kind: str = ENTITY) -> int:
        if not self.writable:
            raise StorageError("dictionary opened read-only")
        existing = self.lookup_id(label, kind)
        if existing is not None:
            return existing
        if self.mode == "split" and kind == RELATION:
            term_id = self.next_relation
            self.next_relation += 1
        else:
            term_id = self.next_entity
            self.next_entity += 1
        if term_id > MAX_TERM_ID:
            raise IdSpaceExhaustedError("40-bit id space exhausted")
        self._store(label, term_id, kind)
        return term_id

    def put_existing(self, label: bytes, term_id: int, kind: str = ENTITY) -> None:
        """Insert a mapping whose id was assigned elsewhere (delta merge)."""
        self._store(label, term_id, kind)
        if self.mode == "split" and kind == RELATION:
            self.next_relation = max(self.next_relation, term_id + 1)
        else:
            self.next_entity = max(self.next_entity, term_id + 1)

    def _store(self, label: bytes, term_id: int, kind: str) -> None:
        offset, length = self._labels.append(label)
        self._label_tree(kind).put(label, term_id.to_bytes(5, "little"))
        self._by_id.put(self._id_key(term_id, kind), _LOC.pack(offset, length))
        if self._cache is not None:
            self._cache[self._cache_key(label, kind)] = term_id

    # -- plumbing -----------------------------------------------------------

    def _label_tree(self, kind: str) -> BPlusTree:
        if self.mode == "split" and kind == RELATION:
            return self._rel_by_label
        return self._by_label

    def _id_key(self, term_id: int, kind: str) -> bytes:
        tag = _TAG[kind if self.mode == "split" else ENTITY]
        return tag + pack_id_be(term_id)

    def flush(self) -> None:
        if not self.writable:
            return
        self._labels.flush()
        self._by_label.flush()
        self._by_id.flush()
        if self._rel_by_label is not None:
            self._rel_by_label.flush()
        tmp = self._meta_path + ".tmp"
        with open(tmp, "w") as f:
            json.dump(
                {
                    "mode": self.mode,
                    "start_ids": [self.start_entity, self.start_relation],
                    "next_ids": [self.next_entity, self.next_relation],
                    "block_size": self.block_size,
                },
                f,
                sort_keys=True,
            )
        os.replace(tmp, self._meta_path)

    def close(self) -> None:
        self.flush()
        self._labels.close()
        self._by_label.close()
        self._by_id.close()
        if self._rel_by_label is not None:
            self._rel_by_label.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class DictionaryStack:
    """Base dictionary plus delta segments, resolved as one mapping."""

    def __init__(self, segments):
        self.segments = list(segments)

    def lookup_id(self, label: bytes, kind: str = ENTITY) -> Optional[int]:
        for seg in self.segments:
            found = seg.lookup_id(label, kind)
            if found is not None:
                return found
        return None

    def lookup_label(self, term_id: int, kind: str = ENTITY) -> Optional[bytes]:
        for seg in self.segments:
            if seg.owns_id(term_id, kind):
                found = seg.lookup_label(term_id, kind)
                if found is not None:
                    return found
        return None

    def count(self, kind: str = ENTITY) -> int:
        return sum(seg.count(kind) for seg in self.segments)
