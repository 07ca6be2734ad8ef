"""Per-label node records: cardinalities, table coordinates, descriptors.

One 64-byte record per label id:

    card_s u64 + card_r u64 + card_d u64          (24 bytes)
    six coordinates, u40 each                     (30 bytes)
    six descriptor bytes                          (6 bytes)
    padding                                       (4 bytes)

Coordinate/descriptor slots follow the stream order srd, sdr, rsd,
rds, drs, dsr; the all-ones coordinate marks a table that is absent
or pruned.  Backends: a B+Tree keyed by big-endian id (``nm.btree``)
or a dense array indexed by id (``nm.arr``).  Both are immutable
after build and must return identical records.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

from .btree import BPlusTree
from .errors import StorageError, UsageError
from .ioutil import pack_id_be, pack_uint, unpack_uint
from .layout import ABSENT_DESCRIPTOR

BTREE = "btree"
SORTED_ARRAY = "array"

RECORD_SIZE = 64
ABSENT_COORD = (1 << 40) - 1

_CARDS = struct.Struct("<QQQ")


@dataclass(frozen=True)
class NodeRecord:
    card_s: int
    card_r: int
    card_d: int
    coords: Tuple[Optional[int], ...]  # 6 slots, stream order
    descs: Tuple[int, ...]  # 6 packed descriptor bytes

    def is_empty(self) -> bool:
        return not (self.card_s or self.card_r or self.card_d)


def pack_record(rec: NodeRecord) -> bytes:
    out = bytearray(_CARDS.pack(rec.card_s, rec.card_r, rec.card_d))
    for coord in rec.coords:
        out += pack_uint(ABSENT_COORD if coord is None else coord, 5)
    out += bytes(rec.descs)
    out += b"\x00" * (RECORD_SIZE - len(out))
    return bytes(out)


def unpack_record(buf: bytes) -> NodeRecord:
    card_s, card_r, card_d = _CARDS.unpack_from(buf, 0)
    coords = []
    for i in range(6):
        v = unpack_uint(buf, 24 + i * 5, 5)
        coords.append(None if v == ABSENT_COORD else v)
    descs = tuple(buf[54:60])
    return NodeRecord(card_s, card_r, card_d, tuple(coords), descs)


EMPTY_RECORD = NodeRecord(0, 0, 0, (None,) * 6, (ABSENT_DESCRIPTOR,) * 6)


def build(directory: str, backend: str, items) -> str:
    """Write the node index from ascending (id, record) pairs."""
    if backend == BTREE:
        path = os.path.join(directory, "nm.btree")
        with BPlusTree(path, writable=True) as tree:
            for term_id, rec in items:
                tree.put(pack_id_be(term_id), pack_record(rec))
        return path
    if backend == SORTED_ARRAY:
        path = os.path.join(directory, "nm.arr")
        empty = pack_record(EMPTY_RECORD)
        with open(path, "wb") as f:
            next_slot = 0
            for term_id, rec in items:
                if term_id < next_slot:
                    raise UsageError("node records must arrive ascending")
                f.write(empty * (term_id - next_slot))
                f.write(pack_record(rec))
                next_slot = term_id + 1
            f.flush()
            os.fsync(f.fileno())
        return path
    raise UsageError(f"unknown node-index backend {backend!r}")


class NodeManager:
    def __init__(self, directory: str, backend: str):
        self.backend = backend
        if backend == BTREE:
            self._tree = BPlusTree(os.path.join(directory, "nm.btree"))
            self._arr = None
        elif backend == SORTED_ARRAY:
            path = os.path.join(directory, "nm.arr")
            if not os.path.exists(path):
                raise StorageError(f"missing node index {path}")
            with open(path, "rb") as f:
                self._buf = f.read()
            self._tree = None
            self._arr = True
        else:
            raise UsageError(f"unknown node-index backend {backend!r}")

    def get(self, term_id: int) -> Optional[NodeRecord]:
        if self._tree is not None:
            raw = self._tree.get(pack_id_be(term_id))
            if raw is None:
                return None
            rec = unpack_record(raw)
        else:
            off = term_id * RECORD_SIZE
            if term_id < 0 or off + RECORD_SIZE > len(self._buf):
                return None
            rec = unpack_record(self._buf[off : off + RECORD_SIZE])
        return None if rec.is_empty() else rec

    def items(self) -> Iterator[Tuple[int, NodeRecord]]:
        if self._tree is not None:
            for key, raw in self._tree.items():
                yield int.from_bytes(key, "big"), unpack_record(raw)
        else:
            for i in range(len(self._buf) // RECORD_SIZE):
                rec = unpack_record(self._buf[i * RECORD_SIZE : (i + 1) * RECORD_SIZE])
                if not rec.is_empty():
                    yield i, rec

    def close(self) -> None:
        if self._tree is not None:
            self._tree.close()
