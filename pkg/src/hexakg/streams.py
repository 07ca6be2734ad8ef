"""The six permutation byte streams of per-label binary tables.

Stream files (inside the database directory):

    ts.bin  srd     tsp.bin sdr     tr.bin  rsd
    trp.bin rds     td.bin  drs     tdp.bin dsr

Each stream holds one binary table per label used in its leading
position: the table rows are the remaining two edge fields, in stream
order.  File layout:

    [count u32] [entries] [table region] [footer]
    entry  = key u40 + offset u40 + rows u64 + descriptor u8 + flags u8
    footer = magic "HXS1" + header_len u64 + count u32

Offsets are relative to the table region start; the all-ones offset
marks a pruned table.  Entries ascend by key and, for materialized
tables, by offset, so a table's byte length is the gap to the next
materialized offset.

Pruning (``sdr``, ``rds``, ``dsr`` streams only): tables under the
row threshold are not serialized and get rebuilt on demand by
column-swapping their counterpart in the sibling stream; rebuilt
tables are cached in memory.

Aggregation (``rds`` stream only): a destination group whose source
list also exists as a contiguous value run inside the matching
``drs`` table may store a reference to that run instead of the values:

    group = key w1 + count u32 + flag u8 +
            (inline: count values of w2 | ref: stream u8 + offset u64 + len u32)
"""
from __future__ import annotations

import os
import struct
import threading
from bisect import bisect_left
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import layout
from .errors import CorruptDataError, StorageError
from .ioutil import Counters, pack_uint, unpack_uint
from .model import ORDERINGS, unpermute

STREAM_FILES = {
    "srd": "ts.bin",
    "sdr": "tsp.bin",
    "rsd": "tr.bin",
    "rds": "trp.bin",
    "drs": "td.bin",
    "dsr": "tdp.bin",
}
STREAM_ORDER = ("srd", "sdr", "rsd", "rds", "drs", "dsr")  # slot order in node records
BUILD_ORDER = ("srd", "sdr", "drs", "dsr", "rsd", "rds")  # drs before rds (aggregation)
PRIMED = frozenset(("sdr", "rds", "dsr"))
COUNTERPART = {
    "srd": "sdr", "sdr": "srd",
    "rsd": "rds", "rds": "rsd",
    "drs": "dsr", "dsr": "drs",
}
AGGR_STREAM = "rds"  # (destination, source) tables per relation
AGGR_REF_STREAM = "drs"  # (relation, source) tables per destination

FLAG_PRUNED = 0x01
FLAG_AGGREGATED = 0x02

ABSENT_OFFSET = (1 << 40) - 1
RECORD = 15  # sorted-file record: three big-endian 5-byte fields

_FOOTER = struct.Struct("<4sQI")
_FOOTER_MAGIC = b"HXS1"
ENTRY_SIZE = 20

_BE_POW = np.array([1 << 32, 1 << 24, 1 << 16, 1 << 8, 1], dtype=np.uint64)


@dataclass(frozen=True)
class HeaderEntry:
    key: int
    offset: int  # relative to table region; ABSENT_OFFSET when pruned
    n: int
    desc_code: int
    flags: int

    @property
    def pruned(self) -> bool:
        return bool(self.flags & FLAG_PRUNED)

    @property
    def aggregated(self) -> bool:
        return bool(self.flags & FLAG_AGGREGATED)


@dataclass(frozen=True)
class TableHandle:
    ordering: str
    key: int
    entry: HeaderEntry
    length: int  # encoded byte length (0 when pruned)


def pack_entry(e: HeaderEntry) -> bytes:
    return (
        pack_uint(e.key, 5)
        + pack_uint(e.offset, 5)
        + pack_uint(e.n, 8)
        + bytes((e.desc_code, e.flags))
    )


def unpack_entry(buf: bytes, off: int) -> HeaderEntry:
    return HeaderEntry(
        key=unpack_uint(buf, off, 5),
        offset=unpack_uint(buf, off + 5, 5),
        n=unpack_uint(buf, off + 10, 8),
        desc_code=buf[off + 18],
        flags=buf[off + 19],
    )


def write_stream_file(path: str, entries: Sequence[HeaderEntry], tables_path: str) -> None:
    """Assemble header + table region (from a temp file) + footer."""
    header = bytearray(pack_uint(len(entries), 4))
    for e in entries:
        header += pack_entry(e)
    with open(path, "wb") as out:
        out.write(header)
        with open(tables_path, "rb") as tables:
            while True:
                chunk = tables.read(1 << 20)
                if not chunk:
                    break
                out.write(chunk)
        out.write(_FOOTER.pack(_FOOTER_MAGIC, len(header), len(entries)))
        out.flush()
        os.fsync(out.fileno())


class StreamReader:
    """Read side of one stream file; header kept in memory."""

    def __init__(self, path: str, ordering: str, counters: Counters):
        self.path = path
        self.ordering = ordering
        self.counters = counters
        self._f = open(path, "rb")
        size = os.fstat(self._f.fileno()).st_size
        if size < _FOOTER.size:
            raise CorruptDataError(f"stream {path} too small")
        self._f.seek(size - _FOOTER.size)
        magic, header_len, count = _FOOTER.unpack(self._f.read(_FOOTER.size))
        if magic != _FOOTER_MAGIC:
            raise CorruptDataError(f"bad stream footer in {path}")
        self._f.seek(0)
        header = self._f.read(header_len)
        if unpack_uint(header, 0, 4) != count:
            raise CorruptDataError(f"stream header/footer disagree in {path}")
        self.region_start = header_len
        self.region_size = size - header_len - _FOOTER.size
        self.entries: List[HeaderEntry] = [
            unpack_entry(header, 4 + i * ENTRY_SIZE) for i in range(count)
        ]
        self.keys = [e.key for e in self.entries]
        self._lengths = self._compute_lengths()
        self._cum_rows: Optional[List[int]] = None

    def _compute_lengths(self) -> List[int]:
        lengths = [0] * len(self.entries)
        materialized = [
            i for i, e in enumerate(self.entries) if not e.pruned
        ]
        for pos, i in enumerate(materialized):
            end = (
                self.entries[materialized[pos + 1]].offset
                if pos + 1 < len(materialized)
                else self.region_size
            )
            lengths[i] = end - self.entries[i].offset
            if lengths[i] < 0:
                raise CorruptDataError(f"non-monotone offsets in {self.path}")
        return lengths

    def find(self, key: int) -> Optional[int]:
        i = bisect_left(self.keys, key)
        if i < len(self.keys) and self.keys[i] == key:
            return i
        return None

    def handle(self, index: int) -> TableHandle:
        e = self.entries[index]
        return TableHandle(self.ordering, e.key, e, self._lengths[index])

    def table_bytes(self, index: int) -> bytes:
        e = self.entries[index]
        if e.pruned:
            raise StorageError("pruned table has no bytes")
        return self.read_range(e.offset, self._lengths[index])

    def read_range(self, offset: int, length: int) -> bytes:
        """Read raw table-region bytes; counted as table I/O."""
        self._f.seek(self.region_start + offset)
        buf = self._f.read(length)
        if len(buf) != length:
            raise CorruptDataError(f"short table read in {self.path}")
        self.counters.add_table_read(length)
        return buf

    def total_rows(self) -> int:
        return sum(e.n for e in self.entries)

    def cumulative_rows(self) -> List[int]:
        """cum[i] = rows in entries[0..i); used to place a global row index."""
        if self._cum_rows is None:
            cum = [0]
            for e in self.entries:
                cum.append(cum[-1] + e.n)
            self._cum_rows = cum
        return self._cum_rows

    def close(self) -> None:
        self._f.close()


class EdgeStore:
    """All six streams of one database component, plus the rebuild cache."""

    def __init__(self, directory: str, counters: Counters):
        self.directory = directory
        self.counters = counters
        self.readers: Dict[str, StreamReader] = {}
        for ordering in ORDERINGS:
            path = os.path.join(directory, STREAM_FILES[ordering])
            if not os.path.exists(path):
                raise StorageError(f"missing stream file {path}")
            self.readers[ordering] = StreamReader(path, ordering, counters)
        self._rebuild_cache: Dict[Tuple[str, int], tuple] = {}
        self._cache_lock = threading.Lock()

    # -- table access ---------------------------------------------------

    def table_info(self, ordering: str, key: int) -> Optional[TableHandle]:
        reader = self.readers[ordering]
        idx = reader.find(key)
        return reader.handle(idx) if idx is not None else None

    def table_rows(self, ordering: str, key: int) -> Optional[tuple]:
        """All rows of one table, as a tuple of (first, second) pairs."""
        reader = self.readers[ordering]
        idx = reader.find(key)
        if idx is None:
            return None
        return self._rows_for(reader, idx)

    def _rows_for(self, reader: StreamReader, idx: int) -> tuple:
        e = reader.entries[idx]
        if e.pruned:
            return self.reconstruct(reader.ordering, e.key)
        buf = reader.table_bytes(idx)
        if e.aggregated:
            return tuple(self._decode_aggregated(buf, e))
        d = layout.unpack_descriptor(e.desc_code)
        return tuple(layout.decode_scan(buf, d, e.n))

    def reconstruct(self, ordering: str, key: int) -> tuple:
        """Column-swap the counterpart table of a pruned one; cached."""
        cache_key = (ordering, key)
        with self._cache_lock:
            cached = self._rebuild_cache.get(cache_key)
        if cached is not None:
            return cached
        sibling = COUNTERPART[ordering]
        rows = self.table_rows(sibling, key)
        if rows is None:
            raise CorruptDataError(
                f"pruned table {ordering}/{key} has no counterpart"
            )
        swapped = tuple(sorted((b, a) for a, b in rows))
        with self._cache_lock:
            self._rebuild_cache[cache_key] = swapped
        return swapped

    def _decode_aggregated(self, buf: bytes, e: HeaderEntry) -> Iterator[tuple]:
        d = layout.unpack_descriptor(e.desc_code)
        off = 0
        seen = 0
        while seen < e.n:
            if off + d.w1 + 5 > len(buf):
                raise CorruptDataError("truncated aggregated table")
            group_key = unpack_uint(buf, off, d.w1)
            count = unpack_uint(buf, off + d.w1, 4)
            flag = buf[off + d.w1 + 4]
            off += d.w1 + 5
            if flag == 0:
                values = [
                    unpack_uint(buf, off + k * d.w2, d.w2) for k in range(count)
                ]
                off += count * d.w2
            elif flag == 1:
                stream_idx = buf[off]
                ref_off = unpack_uint(buf, off + 1, 8)
                ref_len = unpack_uint(buf, off + 9, 4)
                off += 13
                values = self._deref(stream_idx, ref_off, ref_len, count)
            else:
                raise CorruptDataError(f"bad aggregate flag {flag}")
            for v in values:
                yield (group_key, v)
            seen += count

    def _deref(self, stream_idx: int, offset: int, length: int, count: int) -> list:
        ordering = STREAM_ORDER[stream_idx]
        raw = self.readers[ordering].read_range(offset, length)
        if count == 0 or length % count:
            raise CorruptDataError("aggregate reference length mismatch")
        width = length // count
        return [unpack_uint(raw, i * width, width) for i in range(count)]

    # -- scans ------------------------------------------------------------

    def scan_tables(self, ordering: str) -> Iterator[Tuple[int, tuple]]:
        reader = self.readers[ordering]
        for idx in range(len(reader.entries)):
            yield reader.entries[idx].key, self._rows_for(reader, idx)

    def scan_edges(self, ordering: str) -> Iterator[tuple]:
        """All edges as (s, r, d), sorted by ``ordering``."""
        for key, rows in self.scan_tables(ordering):
            for first, second in rows:
                yield unpermute((key, first, second), ordering)

    # -- random access ------------------------------------------------------

    def row_at(self, ordering: str, key: int, index: int) -> Optional[tuple]:
        """Row ``index`` of one table, reading as little as the layout allows."""
        reader = self.readers[ordering]
        idx = reader.find(key)
        if idx is None:
            return None
        e = reader.entries[idx]
        if not 0 <= index < e.n:
            raise IndexError(index)
        if e.pruned:
            return self.reconstruct(ordering, key)[index]
        if e.aggregated:
            return self._rows_for(reader, idx)[index]
        d = layout.unpack_descriptor(e.desc_code)
        if d.kind == layout.ROW:
            stride = d.row_stride()
            buf = reader.read_range(e.offset + index * stride, stride)
            return (unpack_uint(buf, 0, d.w1), unpack_uint(buf, d.w1, d.w2))
        if d.kind == layout.COLUMN:
            length = reader._lengths[idx]
            runs_len = length - e.n * d.w2
            runs = reader.read_range(e.offset, runs_len)
            stride = d.w1 + layout.RUN_LENGTH_WIDTH
            seen = 0
            pos = 0
            value = None
            while pos + stride <= len(runs):
                value = unpack_uint(runs, pos, d.w1)
                count = unpack_uint(runs, pos + d.w1, layout.RUN_LENGTH_WIDTH)
                if count == 0:
                    raise CorruptDataError("zero run length")
                if seen + count > index:
                    break
                seen += count
                pos += stride
            else:
                raise CorruptDataError("row index beyond column runs")
            second_buf = reader.read_range(
                e.offset + runs_len + index * d.w2, d.w2
            )
            return (value, unpack_uint(second_buf, 0, d.w2))
        buf = reader.table_bytes(idx)
        return layout.row_at(buf, d, e.n, index)

    def close(self) -> None:
        for reader in self.readers.values():
            reader.close()


# ---------------------------------------------------------------------------
# Stream construction (used by the bulk loader and the delta builder)
# ---------------------------------------------------------------------------


class StreamBuildResult:
    def __init__(self):
        self.entries: List[HeaderEntry] = []
        self.layout_counts: Dict[str, int] = {}

    def add(self, entry: HeaderEntry) -> None:
        self.entries.append(entry)
        if entry.pruned:
            kind = "PRUNED"
        else:
            d = layout.unpack_descriptor(entry.desc_code)
            kind = d.kind
        self.layout_counts[kind] = self.layout_counts.get(kind, 0) + 1


def parse_fields(buf: bytes) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split packed big-endian records into three uint64 field arrays."""
    arr = np.frombuffer(buf, dtype=np.uint8).reshape(-1, RECORD)
    f1 = arr[:, 0:5].astype(np.uint64) @ _BE_POW
    f2 = arr[:, 5:10].astype(np.uint64) @ _BE_POW
    f3 = arr[:, 10:15].astype(np.uint64) @ _BE_POW
    return f1, f2, f3


def _pack_le_column(values: np.ndarray, width: int) -> bytes:
    out = values.astype("<u8").reshape(-1, 1).view(np.uint8)
    return out[:, :width].tobytes()


def encode_table_np(f2: np.ndarray, f3: np.ndarray, d: layout.LayoutDescriptor) -> bytes:
    """Vectorized encoder; byte-identical to :func:`layout.encode`."""
    n = len(f2)
    if d.kind == layout.ROW:
        a = f2.astype("<u8").reshape(-1, 1).view(np.uint8)[:, : d.w1]
        b = f3.astype("<u8").reshape(-1, 1).view(np.uint8)[:, : d.w2]
        return np.hstack((a, b)).tobytes()
    if d.kind == layout.COLUMN:
        starts = np.flatnonzero(np.r_[True, f2[1:] != f2[:-1]])
        counts = np.diff(np.r_[starts, n]).astype(np.uint64)
        values = f2[starts]
        runs = np.empty((len(starts), d.w1 + 4), dtype=np.uint8)
        runs[:, : d.w1] = values.astype("<u8").reshape(-1, 1).view(np.uint8)[:, : d.w1]
        runs[:, d.w1 :] = counts.astype("<u4").reshape(-1, 1).view(np.uint8)
        return runs.tobytes() + _pack_le_column(f3, d.w2)
    if d.kind == layout.CLUSTER:
        starts = np.flatnonzero(np.r_[True, f2[1:] != f2[:-1]])
        ends = np.r_[starts[1:], n]
        parts = []
        for s, e in zip(starts, ends):
            parts.append(pack_uint(int(f2[s]), d.w1))
            parts.append(pack_uint(int(e - s), d.w3))
            parts.append(_pack_le_column(f3[s:e], d.w2))
        return b"".join(parts)
    raise ValueError(d.kind)


def select_layout_np(
    f2: np.ndarray, f3: np.ndarray, row_threshold: int, group_threshold: int
) -> layout.LayoutDescriptor:
    """Vectorized twin of :func:`layout.select_layout`."""
    n = len(f2)
    if n == 0:
        raise layout.EmptyTableError("empty table")
    starts = np.flatnonzero(np.r_[True, f2[1:] != f2[:-1]])
    distinct = len(starts)
    if n <= row_threshold and distinct <= group_threshold:
        counts = np.diff(np.r_[starts, n])
        w1 = layout.sizeof(int(f2.max()))
        w2 = layout.sizeof(int(f3.max()))
        w3 = layout.sizeof(int(counts.max()))
        t_c = distinct * (w1 + w3) + n * w2
        t_r = n * (w1 + w2)
        if t_r <= t_c:
            return layout.LayoutDescriptor(layout.ROW, w1, w2, 0)
        return layout.LayoutDescriptor(layout.CLUSTER, w1, w2, w3)
    return layout.LayoutDescriptor(layout.COLUMN, 5, 5, 0)
