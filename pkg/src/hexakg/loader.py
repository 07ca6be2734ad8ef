"""Bulk loading: parse, dictionary-encode, external-sort, build streams.

Pipeline stages (all deterministic for a fixed config and input order):

  1. parse + encode: terms get ids in first-appearance order; id triples
     are written as 15-byte little-endian records.
  2. per ordering: disk-based merge sort into 15-byte big-endian records
     permuted to the ordering (byte order = sort order), duplicates
     dropped at run creation and at merge.
  3. per ordering: group the sorted file by leading field, pick a layout
     per table, serialize the stream file.  Streams build in an order
     that puts each prunable stream after its counterpart and the
     aggregation target before the aggregated stream.
  4. node-record assembly and dictionary/manifest finalization.

Two worker classes bound concurrency: processing threads (sorting,
encoding) and I/O threads (every disk read/write of the bulk phases
goes through the I/O pool, which also instruments in-flight counts).
"""
from __future__ import annotations

import gzip
import heapq
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import layout
from .database import LOCK_FILE, DbLock, Manifest, write_manifest
from .dictionary import ENTITY, RELATION, Dictionary
from .errors import ParseError, StorageError, UsageError
from .ioutil import Counters, MAX_TERM_ID, pack_uint
from .model import ORDERINGS
from .nodemgr import BTREE, SORTED_ARRAY, build as build_nm
from .streams import (
    ABSENT_OFFSET,
    AGGR_REF_STREAM,
    AGGR_STREAM,
    BUILD_ORDER,
    COUNTERPART,
    FLAG_AGGREGATED,
    FLAG_PRUNED,
    HeaderEntry,
    PRIMED,
    RECORD,
    STREAM_FILES,
    STREAM_ORDER,
    StreamReader,
    encode_table_np,
    parse_fields,
    select_layout_np,
    write_stream_file,
)

SNAP_RELATION_LABEL = b"edge"  # reserved relation for unlabeled edge lists

# Working bytes per record while a sort run is in flight (raw buffer,
# field arrays, sort indices, output buffer).  Run sizes derive from the
# memory budget through this constant.
RUN_RECORD_WORKING_BYTES = 128

_LE_POW = np.array([1, 1 << 8, 1 << 16, 1 << 24, 1 << 32], dtype=np.uint64)

_SMALL_TABLE_ROWS = 2048  # below this, the pure-python codec is used
_CHUNK_RECORDS = 1 << 20


@dataclass
class LoadConfig:
    input_format: str = "ntriples"  # ntriples | snap | encoded
    id_mode: str = "global"  # global | split
    nm_backend: str = BTREE
    ofr: bool = False
    eta: int = 20
    aggr: bool = False
    tau: int = layout.DEFAULT_ROW_THRESHOLD
    upsilon: int = layout.DEFAULT_GROUP_THRESHOLD
    proc_workers: int = 1
    io_workers: int = 1
    sort_mem_bytes: int = 256 << 20
    tmp_dir: Optional[str] = None
    block_size: int = 4096

    def validate(self) -> None:
        if self.input_format not in ("ntriples", "snap", "encoded"):
            raise UsageError(f"unknown input format {self.input_format!r}")
        if self.id_mode not in ("global", "split"):
            raise UsageError(f"unknown id mode {self.id_mode!r}")
        if self.nm_backend not in (BTREE, SORTED_ARRAY):
            raise UsageError(f"unknown nm backend {self.nm_backend!r}")
        if self.proc_workers < 1 or self.io_workers < 1:
            raise UsageError("worker counts must be >= 1")
        if self.sort_mem_bytes < RUN_RECORD_WORKING_BYTES * 4096:
            raise UsageError("sort memory budget too small for one run")
        if self.eta < 0 or self.tau < 1 or self.upsilon < 1:
            raise UsageError("thresholds must be positive")


@dataclass
class LoadReport:
    target: str
    edges: int
    entity_labels: int
    relation_labels: int
    layout_counts: Dict[str, Dict[str, int]]
    file_bytes: Dict[str, int]
    skipped_duplicates: int = 0

    def layout_totals(self) -> Dict[str, int]:
        totals: Dict[str, int] = {}
        for per_stream in self.layout_counts.values():
            for kind, n in per_stream.items():
                totals[kind] = totals.get(kind, 0) + n
        return totals


class IoPool:
    """Runs disk operations on a bounded pool; tracks in-flight count."""

    def __init__(self, workers: int, counters: Counters):
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._counters = counters

    def run(self, fn, *args):
        return self._pool.submit(self._wrap, fn, *args).result()

    def _wrap(self, fn, *args):
        self._counters.io_enter()
        try:
            return fn(*args)
        finally:
            self._counters.io_exit()

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)


# ---------------------------------------------------------------------------
# Input parsing
# ---------------------------------------------------------------------------


def open_input(path: str):
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _take_term(body: bytes, lineno: int) -> Tuple[bytes, bytes]:
    body = body.lstrip()
    if body.startswith(b"<"):
        end = body.find(b">")
        if end < 0:
            raise ParseError("unterminated IRI", lineno)
        return body[1:end], body[end + 1 :]
    if body.startswith(b"_:"):
        end = len(body)
        for i, c in enumerate(body):
            if c in b" \t":
                end = i
                break
        return body[:end], body[end:]
    raise ParseError("expected IRI or blank node", lineno)


def parse_ntriples_line(line: bytes, lineno: int) -> Optional[Tuple[bytes, bytes, bytes]]:
    line = line.strip()
    if not line or line.startswith(b"#"):
        return None
    if not line.endswith(b"."):
        raise ParseError("missing terminating '.'", lineno)
    body = line[:-1].rstrip()
    s, rest = _take_term(body, lineno)
    rest = rest.lstrip()
    if not rest.startswith(b"<"):
        raise ParseError("predicate must be an IRI", lineno)
    p, rest = _take_term(rest, lineno)
    o = rest.strip()
    if not o:
        raise ParseError("missing object", lineno)
    if o.startswith(b"<"):
        if not o.endswith(b">"):
            raise ParseError("unterminated IRI", lineno)
        o = o[1:-1]
    elif not (o.startswith(b"_:") or o.startswith(b'"')):
        raise ParseError("bad object term", lineno)
    return s, p, o


def parse_snap_line(line: bytes, lineno: int) -> Optional[Tuple[bytes, bytes, bytes]]:
    line = line.strip()
    if not line or line.startswith(b"#"):
        return None
    parts = line.split()
    if len(parts) != 2:
        raise ParseError("expected 'source destination'", lineno)
    return parts[0], SNAP_RELATION_LABEL, parts[1]


def iter_label_triples(path: str, fmt: str) -> Iterator[Tuple[bytes, bytes, bytes]]:
    parse = parse_ntriples_line if fmt == "ntriples" else parse_snap_line
    with open_input(path) as f:
        for lineno, line in enumerate(f, 1):
            triple = parse(line, lineno)
            if triple is not None:
                yield triple


def term_to_ntriples(label: bytes) -> bytes:
    if label.startswith(b'"') or label.startswith(b"_:"):
        return label
    return b"<" + label + b">"


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def encode_input(
    source: str,
    fmt: str,
    dictionary: Optional[Dictionary],
    out_path: str,
    io: IoPool,
    proc: ThreadPoolExecutor,
    proc_workers: int,
) -> int:
    """Assign ids in first-appearance order; write 15-byte id triples."""

    def parse_chunk(lines: List[bytes], start_line: int):
        parse = parse_ntriples_line if fmt == "ntriples" else parse_snap_line
        out = []
        for i, line in enumerate(lines):
            t = parse(line, start_line + i)
            if t is not None:
                out.append(t)
        return out

    def encode_chunk_ids(lines: List[bytes], start_line: int) -> bytes:
        out = bytearray()
        for i, line in enumerate(lines):
            line = line.strip()
            if not line or line.startswith(b"#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError("expected three ids", start_line + i)
            for part in parts:
                try:
                    v = int(part)
                except ValueError:
                    raise ParseError("bad id", start_line + i) from None
                if not 0 <= v <= MAX_TERM_ID:
                    raise ParseError("id out of range", start_line + i)
                out += pack_uint(v, 5)
        return bytes(out)

    total = 0
    window: deque = deque()
    max_window = max(2, proc_workers * 2)
    with open_input(source) as f, open(out_path, "wb") as out:
        lineno = 1
        buf = bytearray()

        def flush_one():
            nonlocal total
            fut = window.popleft()
            if fmt == "encoded":
                data = fut.result()
                total += len(data) // RECORD
                io.run(out.write, data)
                return
            encoded = bytearray()
            for s, p, o in fut.result():
                sid = dictionary.assign_id(s, ENTITY)
                rid = dictionary.assign_id(p, RELATION)
                oid = dictionary.assign_id(o, ENTITY)
                encoded += pack_uint(sid, 5)
                encoded += pack_uint(rid, 5)
                encoded += pack_uint(oid, 5)
                total += 1
            io.run(out.write, bytes(encoded))

        while True:
            chunk = io.run(f.read, 4 << 20)
            if not chunk:
                break
            buf += chunk
            cut = buf.rfind(b"\n")
            if cut < 0:
                continue
            lines = bytes(buf[: cut + 1]).splitlines()
            del buf[: cut + 1]
            task = encode_chunk_ids if fmt == "encoded" else parse_chunk
            window.append(proc.submit(task, lines, lineno))
            lineno += len(lines)
            while len(window) >= max_window:
                flush_one()
        if buf:
            task = encode_chunk_ids if fmt == "encoded" else parse_chunk
            window.append(proc.submit(task, [bytes(buf)], lineno))
        while window:
            flush_one()
        io.run(out.flush)
    return total


# ---------------------------------------------------------------------------
# External sort
# ---------------------------------------------------------------------------


def _sort_run(buf: bytes, perm: Tuple[int, int, int]) -> bytes:
    """Sort one run of little-endian id triples into big-endian permuted
    records; consecutive duplicates are dropped."""
    if not buf:
        return b""
    arr = np.frombuffer(buf, dtype=np.uint8).reshape(-1, RECORD)
    fields = [
        arr[:, i * 5 : (i + 1) * 5].astype(np.uint64) @ _LE_POW for i in range(3)
    ]
    k1, k2, k3 = (fields[perm[0]], fields[perm[1]], fields[perm[2]])
    idx = np.lexsort((k3, k2, k1))
    k1, k2, k3 = k1[idx], k2[idx], k3[idx]
    keep = np.empty(len(k1), dtype=bool)
    keep[0] = True
    keep[1:] = (k1[1:] != k1[:-1]) | (k2[1:] != k2[:-1]) | (k3[1:] != k3[:-1])
    k1, k2, k3 = k1[keep], k2[keep], k3[keep]
    out = np.empty((len(k1), RECORD), dtype=np.uint8)
    for j, k in enumerate((k1, k2, k3)):
        out[:, j * 5 : (j + 1) * 5] = (
            k.astype(">u8").reshape(-1, 1).view(np.uint8)[:, 3:]
        )
    return out.tobytes()


def _run_records(path: str, io: IoPool) -> Iterator[bytes]:
    with open(path, "rb") as f:
        while True:
            chunk = io.run(f.read, RECORD * 65536)
            if not chunk:
                return
            for i in range(0, len(chunk), RECORD):
                yield chunk[i : i + RECORD]


def external_sort(
    encoded_path: str,
    ordering: str,
    out_path: str,
    tmp_dir: str,
    sort_mem_bytes: int,
    io: IoPool,
    proc: ThreadPoolExecutor,
    proc_workers: int,
) -> int:
    """Sort the encoded triples into ``ordering``; returns unique triples."""
    perm = tuple("srd".index(c) for c in ordering)
    per_run = max(4096, sort_mem_bytes // (RUN_RECORD_WORKING_BYTES * proc_workers))
    run_paths: List[str] = []
    window: deque = deque()

    def finish_one():
        fut, path = window.popleft()
        data = fut.result()
        with open(path, "wb") as f:
            io.run(f.write, data)
        run_paths.append(path)

    with open(encoded_path, "rb") as f:
        i = 0
        while True:
            buf = io.run(f.read, per_run * RECORD)
            if not buf:
                break
            path = os.path.join(tmp_dir, f"run-{ordering}-{i}.tmp")
            i += 1
            window.append((proc.submit(_sort_run, buf, perm), path))
            while len(window) >= max(2, proc_workers):
                finish_one()
        while window:
            finish_one()

    count = 0
    if len(run_paths) == 1:
        os.replace(run_paths[0], out_path)
        count = os.path.getsize(out_path) // RECORD
    else:
        iters = [_run_records(p, io) for p in run_paths]
        with open(out_path, "wb") as out:
            pending = bytearray()
            last = None
            for rec in heapq.merge(*iters):
                if rec == last:
                    continue
                last = rec
                pending += rec
                count += 1
                if len(pending) >= 4 << 20:
                    io.run(out.write, bytes(pending))
                    pending.clear()
            if pending:
                io.run(out.write, bytes(pending))
        for p in run_paths:
            os.remove(p)
    if not run_paths:
        open(out_path, "wb").close()
    return count


# ---------------------------------------------------------------------------
# Stream building
# ---------------------------------------------------------------------------


def _scan_table_directory(path: str, io: IoPool) -> List[Tuple[int, int]]:
    """(leading key, row count) per table, in file order."""
    tables: List[Tuple[int, int]] = []
    last_key = None
    last_count = 0
    with open(path, "rb") as f:
        while True:
            buf = io.run(f.read, _CHUNK_RECORDS * RECORD)
            if not buf:
                break
            f1, _, _ = parse_fields(buf)
            starts = np.flatnonzero(np.r_[True, f1[1:] != f1[:-1]])
            counts = np.diff(np.r_[starts, len(f1)])
            for s, c in zip(starts, counts):
                key = int(f1[s])
                if key == last_key:
                    last_count += int(c)
                else:
                    if last_key is not None:
                        tables.append((last_key, last_count))
                    last_key = key
                    last_count = int(c)
    if last_key is not None:
        tables.append((last_key, last_count))
    return tables


def _encode_small_table(buf: bytes, tau: int, upsilon: int):
    """Encode one in-memory table region; returns (n, descriptor, bytes)."""
    n = len(buf) // RECORD
    _, f2, f3 = parse_fields(buf)
    if n <= _SMALL_TABLE_ROWS:
        rows = list(zip(f2.tolist(), f3.tolist()))
        d = layout.select_layout(rows, tau, upsilon)
        return n, d, layout.encode(rows, d)
    d = select_layout_np(f2, f3, tau, upsilon)
    return n, d, encode_table_np(f2, f3, d)


class _BigColumnWriter:
    """Streams a table larger than the row threshold as COLUMN(5, 5)."""

    def __init__(self, tmp_dir: str, key: int, io: IoPool):
        self.io = io
        self._runs_path = os.path.join(tmp_dir, f"col-runs-{key}.tmp")
        self._secs_path = os.path.join(tmp_dir, f"col-secs-{key}.tmp")
        self._runs = open(self._runs_path, "wb")
        self._secs = open(self._secs_path, "wb")
        self._carry_value: Optional[int] = None
        self._carry_count = 0
        self.rows = 0

    def feed(self, buf: bytes) -> None:
        _, f2, f3 = parse_fields(buf)
        n = len(f2)
        self.rows += n
        starts = np.flatnonzero(np.r_[True, f2[1:] != f2[:-1]])
        counts = np.diff(np.r_[starts, n]).astype(np.uint64)
        values = f2[starts]
        if self._carry_value is not None and int(values[0]) == self._carry_value:
            counts = counts.copy()
            counts[0] += self._carry_count
            self._carry_value = None
        elif self._carry_value is not None:
            self._emit_run(self._carry_value, self._carry_count)
        self._carry_value = int(values[-1])
        self._carry_count = int(counts[-1])
        if len(values) > 1:
            runs = np.empty((len(values) - 1, 9), dtype=np.uint8)
            runs[:, :5] = values[:-1].astype("<u8").reshape(-1, 1).view(np.uint8)[:, :5]
            runs[:, 5:] = counts[:-1].astype("<u4").reshape(-1, 1).view(np.uint8)
            self.io.run(self._runs.write, runs.tobytes())
        secs = f3.astype("<u8").reshape(-1, 1).view(np.uint8)[:, :5]
        self.io.run(self._secs.write, secs.tobytes())

    def _emit_run(self, value: int, count: int) -> None:
        self.io.run(self._runs.write, pack_uint(value, 5) + pack_uint(count, 4))

    def finish(self, sink) -> int:
        """Copy runs then seconds into ``sink``; returns bytes written."""
        if self._carry_value is not None:
            self._emit_run(self._carry_value, self._carry_count)
        self._runs.close()
        self._secs.close()
        written = 0
        for path in (self._runs_path, self._secs_path):
            with open(path, "rb") as f:
                while True:
                    chunk = f.read(4 << 20)
                    if not chunk:
                        break
                    self.io.run(sink.write, chunk)
                    written += len(chunk)
            os.remove(path)
        return written


def _partition_byte_range(
    reader: StreamReader, idx: int, rel_key: int
) -> Optional[Tuple[int, int, int, list]]:
    """Byte range inside a reference table holding the value run of one
    partition (first field == rel_key); None when not contiguous."""
    e = reader.entries[idx]
    d = layout.unpack_descriptor(e.desc_code)
    length = reader._lengths[idx]
    buf = reader.read_range(e.offset, length)
    span = layout.search_first(buf, d, e.n, rel_key)
    if span is None:
        return None
    i, j = span
    count = j - i
    if d.kind == layout.ROW:
        if count != 1:
            return None
        off = i * d.row_stride() + d.w1
        run = buf[off : off + d.w2]
        values = [int.from_bytes(run, "little")]
        return (e.offset + off, d.w2, count, values)
    if d.kind == layout.COLUMN:
        runs_len = length - e.n * d.w2
        off = runs_len + i * d.w2
        run = buf[off : off + count * d.w2]
        values = [
            int.from_bytes(run[k * d.w2 : (k + 1) * d.w2], "little")
            for k in range(count)
        ]
        return (e.offset + off, count * d.w2, count, values)
    if d.kind == layout.CLUSTER:
        off = 0
        while off < len(buf):
            first = int.from_bytes(buf[off : off + d.w1], "little")
            gcount = int.from_bytes(buf[off + d.w1 : off + d.w1 + d.w3], "little")
            body = off + d.w1 + d.w3
            if first == rel_key:
                run = buf[body : body + gcount * d.w2]
                values = [
                    int.from_bytes(run[k * d.w2 : (k + 1) * d.w2], "little")
                    for k in range(gcount)
                ]
                return (e.offset + body, gcount * d.w2, gcount, values)
            if first > rel_key:
                return None
            off = body + gcount * d.w2
        return None
    return None


def _try_aggregate(
    rel_key: int, buf: bytes, ref_reader: StreamReader, plain_size: int
) -> Optional[Tuple[layout.LayoutDescriptor, bytes]]:
    """Aggregated encoding of one (destination, source) table, if smaller."""
    _, f2, f3 = parse_fields(buf)
    n = len(f2)
    w1 = layout.sizeof(int(f2.max()))
    w2 = layout.sizeof(int(f3.max()))
    starts = np.flatnonzero(np.r_[True, f2[1:] != f2[:-1]])
    ends = np.r_[starts[1:], n]
    parts: List[bytes] = []
    total = 0
    ref_used = False
    for s, e in zip(starts, ends):
        dest = int(f2[s])
        members = [int(v) for v in f3[s:e]]
        count = len(members)
        head = pack_uint(dest, w1) + pack_uint(count, 4)
        ref = None
        if count * w2 > 13:
            idx = ref_reader.find(dest)
            if idx is not None and not ref_reader.entries[idx].pruned:
                found = _partition_byte_range(ref_reader, idx, rel_key)
                if found is not None and found[2] == count and found[3] == members:
                    ref = found
        if ref is not None:
            off, ln, _, _ = ref
            body = (
                bytes((1, STREAM_ORDER.index(AGGR_REF_STREAM)))
                + pack_uint(off, 8)
                + pack_uint(ln, 4)
            )
            ref_used = True
        else:
            body = bytes((0,)) + b"".join(pack_uint(v, w2) for v in members)
        parts.append(head + body)
        total += len(head) + len(body)
        if total >= plain_size:
            return None
    if not ref_used:
        return None
    return layout.LayoutDescriptor(layout.AGGR, w1, w2), b"".join(parts)


def build_stream(
    sorted_path: str,
    ordering: str,
    target_dir: str,
    tmp_dir: str,
    config: LoadConfig,
    counterpart_desc: Optional[Dict[int, int]],
    io: IoPool,
    proc: ThreadPoolExecutor,
    counters: Counters,
) -> Tuple[List[HeaderEntry], Dict[str, int]]:
    """Serialize one stream file from its sorted triple file."""
    tables = _scan_table_directory(sorted_path, io)
    out_path = os.path.join(target_dir, STREAM_FILES[ordering])
    tables_tmp = os.path.join(tmp_dir, f"tables-{ordering}.tmp")
    entries: List[HeaderEntry] = []
    layout_counts: Dict[str, int] = {}
    prune = config.ofr and ordering in PRIMED
    aggregate = config.aggr and ordering == AGGR_STREAM
    ref_reader: Optional[StreamReader] = None
    if aggregate:
        ref_reader = StreamReader(
            os.path.join(target_dir, STREAM_FILES[AGGR_REF_STREAM]),
            AGGR_REF_STREAM,
            counters,
        )

    def bump(kind: str) -> None:
        layout_counts[kind] = layout_counts.get(kind, 0) + 1

    src = open(sorted_path, "rb")
    sink = open(tables_tmp, "wb")
    try:
        offset = 0
        window: deque = deque()
        max_window = max(2, config.proc_workers * 2)

        def drain_one():
            nonlocal offset
            key, fut = window.popleft()
            n, d, data = fut.result()
            desc_code = layout.pack_descriptor(d)
            flags = 0
            if aggregate and ref_reader is not None:
                # re-read the region for the aggregation candidate
                agg = _try_aggregate(key, fut.buf, ref_reader, len(data))
                if agg is not None:
                    d_agg, data_agg = agg
                    desc_code = layout.pack_descriptor(d_agg)
                    data = data_agg
                    flags = FLAG_AGGREGATED
            io.run(sink.write, data)
            entries.append(HeaderEntry(key, offset, n, desc_code, flags))
            bump("AGGR" if flags & FLAG_AGGREGATED else d.kind)
            offset += len(data)

        pos = 0
        for key, n in tables:
            region_bytes = n * RECORD
            if prune and n < config.eta:
                while window:
                    drain_one()
                pos += region_bytes
                src.seek(pos)
                entries.append(
                    HeaderEntry(
                        key, ABSENT_OFFSET, n, counterpart_desc[key], FLAG_PRUNED
                    )
                )
                bump("PRUNED")
                continue
            if n > config.tau:
                while window:
                    drain_one()
                writer = _BigColumnWriter(tmp_dir, key, io)
                remaining = region_bytes
                while remaining:
                    take = min(remaining, _CHUNK_RECORDS * RECORD)
                    buf = io.run(src.read, take)
                    if len(buf) != take:
                        raise StorageError("sorted file truncated")
                    writer.feed(buf)
                    remaining -= take
                pos += region_bytes
                written = writer.finish(sink)
                d = layout.LayoutDescriptor(layout.COLUMN, 5, 5, 0)
                entries.append(
                    HeaderEntry(key, offset, n, layout.pack_descriptor(d), 0)
                )
                bump(layout.COLUMN)
                offset += written
                continue
            buf = io.run(src.read, region_bytes)
            if len(buf) != region_bytes:
                raise StorageError("sorted file truncated")
            pos += region_bytes
            fut = proc.submit(_encode_small_table, buf, config.tau, config.upsilon)
            fut.buf = buf  # kept for the aggregation candidate
            window.append((key, fut))
            while len(window) >= max_window:
                drain_one()
        while window:
            drain_one()
        if offset >= ABSENT_OFFSET:
            raise StorageError("stream table region exceeds 2^40 bytes")
    finally:
        src.close()
        sink.close()
        if ref_reader is not None:
            ref_reader.close()
    io.run(write_stream_file, out_path, entries, tables_tmp)
    os.remove(tables_tmp)
    return entries, layout_counts


# ---------------------------------------------------------------------------
# Whole-database load
# ---------------------------------------------------------------------------


class _NodeAccumulator:
    """Node-record fields gathered stream by stream, in flat arrays.

    Ids are dense counters, so array indexing beats a dict of records
    at bulk-load scale.
    """

    _CARD_ROLE = {"srd": 0, "rsd": 1, "drs": 2}

    def __init__(self):
        self._top = -1
        self._cap = 0
        self._cards = None
        self._coords = None
        self._descs = None

    def _ensure(self, key: int) -> None:
        if key >= self._cap:
            new_cap = max(1024, self._cap * 2, key + 1)
            cards = np.zeros((3, new_cap), dtype=np.uint64)
            coords = np.full((6, new_cap), ABSENT_OFFSET, dtype=np.uint64)
            descs = np.full(
                (6, new_cap), layout.ABSENT_DESCRIPTOR, dtype=np.uint8
            )
            if self._cap:
                cards[:, : self._cap] = self._cards
                coords[:, : self._cap] = self._coords
                descs[:, : self._cap] = self._descs
            self._cards, self._coords, self._descs = cards, coords, descs
            self._cap = new_cap
        if key > self._top:
            self._top = key

    def add_entries(self, ordering: str, entries: List[HeaderEntry]) -> None:
        slot = STREAM_ORDER.index(ordering)
        role = self._CARD_ROLE.get(ordering)
        for e in entries:
            self._ensure(e.key)
            if role is not None:
                self._cards[role, e.key] = e.n
            if not e.pruned:
                self._coords[slot, e.key] = e.offset
            self._descs[slot, e.key] = e.desc_code

    @property
    def max_key(self) -> int:
        return self._top

    def records(self):
        """Ascending (id, record) pairs for every label used in any role."""
        from .nodemgr import NodeRecord

        for key in range(self._top + 1):
            cards = self._cards[:, key]
            if not cards.any():
                continue
            coords = tuple(
                None if v == ABSENT_OFFSET else int(v)
                for v in self._coords[:, key]
            )
            yield key, NodeRecord(
                int(cards[0]),
                int(cards[1]),
                int(cards[2]),
                coords,
                tuple(int(v) for v in self._descs[:, key]),
            )


def _build_all_streams(
    encoded: str,
    target: str,
    tmp_dir: str,
    config: LoadConfig,
    io: IoPool,
    proc: ThreadPoolExecutor,
    counters: Counters,
) -> Tuple[int, _NodeAccumulator, Dict[str, Dict[str, int]]]:
    edges = None
    acc = _NodeAccumulator()
    layout_counts: Dict[str, Dict[str, int]] = {}
    desc_maps: Dict[str, Dict[int, int]] = {}
    for ordering in BUILD_ORDER:
        sorted_path = os.path.join(tmp_dir, f"sorted-{ordering}.bin")
        count = external_sort(
            encoded,
            ordering,
            sorted_path,
            tmp_dir,
            config.sort_mem_bytes,
            io,
            proc,
            config.proc_workers,
        )
        if edges is None:
            edges = count
        elif edges != count:
            raise StorageError("orderings disagree on edge count")
        counterpart = (
            desc_maps.get(COUNTERPART[ordering]) if ordering in PRIMED else None
        )
        entries, counts = build_stream(
            sorted_path,
            ordering,
            target,
            tmp_dir,
            config,
            counterpart,
            io,
            proc,
            counters,
        )
        acc.add_entries(ordering, entries)
        layout_counts[ordering] = counts
        if COUNTERPART[ordering] in PRIMED:
            desc_maps[ordering] = {e.key: e.desc_code for e in entries}
        del entries
        os.remove(sorted_path)
    return edges or 0, acc, layout_counts


def build_component_from_ids(
    target_dir: str, id_triples, config: LoadConfig
) -> int:
    """Streams plus node index for an in-memory id-triple set (delta builds)."""
    os.makedirs(target_dir, exist_ok=True)
    counters = Counters()
    io = IoPool(config.io_workers, counters)
    proc = ThreadPoolExecutor(max_workers=config.proc_workers)
    tmp_dir = os.path.join(target_dir, "_tmp")
    try:
        os.makedirs(tmp_dir, exist_ok=True)
        encoded = os.path.join(tmp_dir, "encoded.bin")
        with open(encoded, "wb") as f:
            for s, r, d in id_triples:
                f.write(pack_uint(s, 5) + pack_uint(r, 5) + pack_uint(d, 5))
        edges, acc, _ = _build_all_streams(
            encoded, target_dir, tmp_dir, config, io, proc, counters
        )
        build_nm(target_dir, config.nm_backend, acc.records())
        shutil.rmtree(tmp_dir, ignore_errors=True)
        return edges
    finally:
        io.shutdown()
        proc.shutdown(wait=True)


def load(config: LoadConfig, source: str, target: str) -> LoadReport:
    """Build a complete database directory from an input file."""
    config.validate()
    if not os.path.exists(source):
        raise UsageError(f"input {source} does not exist")
    if os.path.exists(target) and os.listdir(target):
        raise UsageError(f"target {target} exists and is not empty")
    os.makedirs(target, exist_ok=True)
    lock = DbLock(target, exclusive=True)
    counters = Counters()
    io = IoPool(config.io_workers, counters)
    proc = ThreadPoolExecutor(max_workers=config.proc_workers)
    tmp_dir = config.tmp_dir or os.path.join(target, "_tmp")
    try:  # noqa: the except clause removes partial output, see below
        os.makedirs(tmp_dir, exist_ok=True)
        dictionary = None
        if config.input_format != "encoded":
            dictionary = Dictionary(
                target,
                config.id_mode,
                writable=True,
                block_size=config.block_size,
            )
        encoded = os.path.join(tmp_dir, "encoded.bin")
        raw_triples = encode_input(
            source,
            config.input_format,
            dictionary,
            encoded,
            io,
            proc,
            config.proc_workers,
        )
        edges, acc, layout_counts = _build_all_streams(
            encoded, target, tmp_dir, config, io, proc, counters
        )
        os.remove(encoded)

        build_nm(target, config.nm_backend, acc.records())

        next_ids = [0, 0]
        entity_labels = relation_labels = 0
        if dictionary is not None:
            next_ids = [dictionary.next_entity, dictionary.next_relation]
            entity_labels = dictionary.count(ENTITY)
            relation_labels = (
                dictionary.count(RELATION) if config.id_mode == "split" else 0
            )
            dictionary.close()
        else:
            next_ids = [acc.max_key + 1, acc.max_key + 1]

        manifest = Manifest(
            id_mode=config.id_mode,
            nm_backend=config.nm_backend,
            tau=config.tau,
            upsilon=config.upsilon,
            ofr=config.ofr,
            eta=config.eta,
            aggr=config.aggr,
            block_size=config.block_size,
            edges=edges or 0,
            next_ids=next_ids,
        )
        write_manifest(target, manifest)
        shutil.rmtree(tmp_dir, ignore_errors=True)

        file_bytes = {
            name: os.path.getsize(os.path.join(target, name))
            for name in sorted(os.listdir(target))
            if os.path.isfile(os.path.join(target, name)) and name != LOCK_FILE
        }
        return LoadReport(
            target=target,
            edges=edges or 0,
            entity_labels=entity_labels,
            relation_labels=relation_labels,
            layout_counts=layout_counts,
            file_bytes=file_bytes,
            skipped_duplicates=raw_triples - (edges or 0),
        )
    except BaseException:
        shutil.rmtree(target, ignore_errors=True)
        raise
    finally:
        lock.release()
        io.shutdown()
        proc.shutdown(wait=True)
