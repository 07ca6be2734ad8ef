"""Single-file on-disk B+Tree with byte-string keys and small values.

Page layout (page size fixed at file creation, default 4 KiB):

  page 0        meta: magic "HXBT" + version u8 + page_size u32 +
                root u32 + page_count u32 + height u32 + count u64
  leaf page     type u8 = 0, nkeys u16, next_leaf u32,
                entries of klen u16 + key + vlen u16 + value
  internal page type u8 = 1, nkeys u16, child0 u32,
                entries of klen u16 + key + child u32
                (keys[i] = smallest key reachable under child i+1)

Keys longer than MAX_KEY are replaced by a prefix + SHA-1 digest so a
node always fits one page; exact-match lookups apply the same mapping.
Single writer; dirty pages are cached in memory and flushed on close.
No deletes: the engine only ever appends mappings.
"""
from __future__ import annotations

import hashlib
import os
import struct
from bisect import bisect_left, bisect_right, insort
from typing import Iterator, Optional, Tuple

from .errors import CorruptDataError, StorageError

MAGIC = b"HXBT"
META_FMT = "<4sBIIIIQ"
META_SIZE = struct.calcsize(META_FMT)

LEAF, INTERNAL = 0, 1
MAX_KEY = 1024


def tree_key(raw: bytes) -> bytes:
    if len(raw) <= MAX_KEY:
        return raw
    return raw[: MAX_KEY - 21] + b"\x00" + hashlib.sha1(raw).digest()


class _Node:
    __slots__ = ("page", "kind", "keys", "values", "children", "next_leaf")

    def __init__(self, page: int, kind: int):
        self.page = page
        self.kind = kind
        self.keys: list = []
        self.values: list = []  # leaf only
        self.children: list = []  # internal only
        self.next_leaf = 0

    def serialized_size(self) -> int:
        if self.kind == LEAF:
            return 7 + sum(4 + len(k) + len(v) for k, v in zip(self.keys, self.values))
        return 7 + sum(6 + len(k) for k in self.keys)

    def to_bytes(self, page_size: int) -> bytes:
        out = bytearray()
        out += struct.pack("<BH", self.kind, len(self.keys))
        if self.kind == LEAF:
            out += struct.pack("<I", self.next_leaf)
            for k, v in zip(self.keys, self.values):
                out += struct.pack("<H", len(k)) + k
                out += struct.pack("<H", len(v)) + v
        else:
            out += struct.pack("<I", self.children[0])
            for k, child in zip(self.keys, self.children[1:]):
                out += struct.pack("<H", len(k)) + k
                out += struct.pack("<I", child)
        if len(out) > page_size:
            raise StorageError("btree node overflows page")
        return bytes(out) + b"\x00" * (page_size - len(out))

    @classmethod
    def from_bytes(cls, page: int, buf: bytes) -> "_Node":
        kind, nkeys = struct.unpack_from("<BH", buf, 0)
        node = cls(page, kind)
        off = 3
        if kind == LEAF:
            (node.next_leaf,) = struct.unpack_from("<I", buf, off)
            off += 4
            for _ in range(nkeys):
                (klen,) = struct.unpack_from("<H", buf, off)
                off += 2
                key = bytes(buf[off : off + klen])
                off += klen
                (vlen,) = struct.unpack_from("<H", buf, off)
                off += 2
                node.keys.append(key)
                node.values.append(bytes(buf[off : off + vlen]))
                off += vlen
        elif kind == INTERNAL:
            (child0,) = struct.unpack_from("<I", buf, off)
            off += 4
            node.children.append(child0)
            for _ in range(nkeys):
                (klen,) = struct.unpack_from("<H", buf, off)
                off += 2
                node.keys.append(bytes(buf[off : off + klen]))
                off += klen
                (child,) = struct.unpack_from("<I", buf, off)
                off += 4
                node.children.append(child)
        else:
            raise CorruptDataError(f"bad btree node type {kind}")
        return node


class BPlusTree:
    def __init__(self, path: str, writable: bool = False, page_size: int = 4096):
        self.path = path
        self.writable = writable
        exists = os.path.exists(path)
        mode = "r+b" if (exists and writable) else ("rb" if exists else "w+b")
        if not exists and not writable:
            raise StorageError(f"missing btree file {path}")
        self._f = open(path, mode)
        self._cache: dict = {}
        self._dirty: set = set()
        if exists and os.path.getsize(path) >= META_SIZE:
            self._read_meta()
        else:
            self.page_size = page_size
            self.height = 1
            self.count = 0
            self.page_count = 2
            root = _Node(1, LEAF)
            self._root = 1
            self._cache[1] = root
            self._dirty.add(1)
            self._write_meta()

    # -- public API ---------------------------------------------------------

    def get(self, key: bytes) -> Optional[bytes]:
        key = tree_key(key)
        node = self._node(self._root)
        while node.kind == INTERNAL:
            idx = bisect_right(node.keys, key)
            node = self._node(node.children[idx])
        idx = bisect_left(node.keys, key)
        if idx < len(node.keys) and node.keys[idx] == key:
            return node.values[idx]
        return None

    def put(self, key: bytes, value: bytes) -> None:
        if not self.writable:
            raise StorageError("btree opened read-only")
        key = tree_key(key)
        path = []
        node = self._node(self._root)
        while node.kind == INTERNAL:
            idx = bisect_right(node.keys, key)
            path.append((node, idx))
            node = self._node(node.children[idx])
        idx = bisect_left(node.keys, key)
        if idx < len(node.keys) and node.keys[idx] == key:
            node.values[idx] = value
            self._dirty.add(node.page)
            return
        node.keys.insert(idx, key)
        node.values.insert(idx, value)
        self.count += 1
        self._dirty.add(node.page)
        self._split_up(node, path)

    def items(self) -> Iterator[Tuple[bytes, bytes]]:
        node = self._node(self._root)
        while node.kind == INTERNAL:
            node = self._node(node.children[0])
        while True:
            yield from zip(node.keys, node.values)
            if not node.next_leaf:
                return
            node = self._node(node.next_leaf)

    def stats(self) -> dict:
        heights = self.height
        internal_fanouts = []
        stack = [self._root]
        nodes = 0
        while stack:
            node = self._node(stack.pop())
            nodes += 1
            if node.kind == INTERNAL:
                internal_fanouts.append(len(node.children))
                stack.extend(node.children)
        return {
            "height": heights,
            "nodes": nodes,
            "count": self.count,
            "min_fanout": min(internal_fanouts, default=0),
        }

    def flush(self) -> None:
        if not self.writable:
            return
        for page in sorted(self._dirty):
            node = self._cache[page]
            self._f.seek(page * self.page_size)
            self._f.write(node.to_bytes(self.page_size))
        self._dirty.clear()
        self._write_meta()
        self._f.flush()
        os.fsync(self._f.fileno())

    def close(self) -> None:
        if not self._f.closed:
            self.flush()
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- internals ----------------------------------------------------------

    def _read_meta(self) -> None:
        self._f.seek(0)
        buf = self._f.read(META_SIZE)
        magic, version, page_size, root, page_count, height, count = struct.unpack(
            META_FMT, buf
        )
        if magic != MAGIC or version != 1:
            raise CorruptDataError(f"bad btree header in {self.path}")
        self.page_size = page_size
        self._root = root
        self.page_count = page_count
        self.height = height
        self.count = count

    def _write_meta(self) -> None:
        self._f.seek(0)
        self._f.write(
            struct.pack(
                META_FMT,
                MAGIC,
                1,
                self.page_size,
                self._root,
                self.page_count,
                self.height,
                self.count,
            ).ljust(self.page_size, b"\x00")
        )

    def _node(self, page: int) -> _Node:
        node = self._cache.get(page)
        if node is None:
            self._f.seek(page * self.page_size)
            buf = self._f.read(self.page_size)
            if len(buf) < self.page_size:
                raise CorruptDataError(f"short read of btree page {page}")
            node = _Node.from_bytes(page, buf)
            self._cache[page] = node
        return node

    def _alloc(self, kind: int) -> _Node:
        node = _Node(self.page_count, kind)
        self.page_count += 1
        self._cache[node.page] = node
        self._dirty.add(node.page)
        return node

    def _split_up(self, node: _Node, path: list) -> None:
        limit = self.page_size
        while node.serialized_size() > limit:
            right = self._alloc(node.kind)
            if node.kind == LEAF:
                mid = self._split_point(node)
                right.keys = node.keys[mid:]
                right.values = node.values[mid:]
                node.keys = node.keys[:mid]
                node.values = node.values[:mid]
                right.next_leaf = node.next_leaf
                node.next_leaf = right.page
                sep = right.keys[0]
            else:
                mid = len(node.keys) // 2
                sep = node.keys[mid]
                right.keys = node.keys[mid + 1 :]
                right.children = node.children[mid + 1 :]
                node.keys = node.keys[:mid]
                node.children = node.children[: mid + 1]
            self._dirty.add(node.page)
            if path:
                parent, idx = path.pop()
                parent.keys.insert(idx, sep)
                parent.children.insert(idx + 1, right.page)
                self._dirty.add(parent.page)
                node = parent
            else:
                root = self._alloc(INTERNAL)
                root.keys = [sep]
                root.children = [node.page, right.page]
                self._root = root.page
                self.height += 1
                return

    @staticmethod
    def _split_point(node: _Node) -> int:
        # split a leaf at roughly half its serialized bytes
        total = node.serialized_size()
        acc = 7
        for i, (k, v) in enumerate(zip(node.keys, node.values)):
            acc += 4 + len(k) + len(v)
            if acc >= total // 2:
                return max(1, min(i + 1, len(node.keys) - 1))
        return len(node.keys) // 2
