"""Binary-table serialization: the three physical layouts and the selector.

A binary table is a sorted, duplicate-free list of (first, second) id
pairs.  Wire formats (little-endian, widths from the descriptor):

  ROW      n records of first(w1) + second(w2), in row order.
  COLUMN   first column as RLE runs of value(w1) + run_length(u32),
           then the second column as n values of w2, in row order.
           Widths are fixed at (5, 5): this layout is only picked for
           tables too large to measure exactly.
  CLUSTER  groups ascending by first value, each serialized as
           first(w1) + group_size(w3) + group_size values of w2.

The selector compares the exact ROW and CLUSTER byte costs for small
tables and falls back to COLUMN for large ones.  A descriptor packs
into one byte (see pack_descriptor) so it can live inside a node
record; code 255 marks "no table".
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

from .errors import (
    CorruptDataError,
    EmptyTableError,
    ValueTooLargeError,
    WidthOverflowError,
)
from .ioutil import MAX_TERM_ID, pack_uint, unpack_uint

ROW = "ROW"
COLUMN = "COLUMN"
CLUSTER = "CLUSTER"
# Aggregated variant of CLUSTER used only by the stream writer for the
# destination-grouped relation tables; group counts are fixed u32 there.
AGGR = "AGGR"

RUN_LENGTH_WIDTH = 4  # u32 run length in COLUMN layout

DEFAULT_ROW_THRESHOLD = 1_000_000  # max rows for exact layout costing
DEFAULT_GROUP_THRESHOLD = 32  # max distinct first values for CLUSTER

ABSENT_DESCRIPTOR = 0xFF

Row = Tuple[int, int]


def sizeof(value: int) -> int:
    """Minimal byte width in [1, 5] holding ``value``."""
    if value < 0 or value > MAX_TERM_ID:
        raise ValueTooLargeError(f"{value} outside [0, 2^40)")
    width = 1
    while value >> (8 * width):
        width += 1
    return width


@dataclass(frozen=True)
class LayoutDescriptor:
    kind: str
    w1: int
    w2: int
    w3: int = 0

    def row_stride(self) -> int:
        return self.w1 + self.w2


def select_layout(
    rows: Sequence[Row],
    row_threshold: int = DEFAULT_ROW_THRESHOLD,
    group_threshold: int = DEFAULT_GROUP_THRESHOLD,
) -> LayoutDescriptor:
    """Choose the cheapest layout for a sorted table.

    Small tables (by rows and by distinct first values) get the exact
    ROW-vs-CLUSTER byte comparison; ties go to ROW.  Everything else is
    COLUMN at full width, without re-measuring.
    """
    n = len(rows)
    if n == 0:
        raise EmptyTableError("cannot select a layout for an empty table")
    distinct_first = 0
    m1 = m2 = m3 = 0
    group_size = 0
    prev_first = None
    for first, second in rows:
        if first != prev_first:
            distinct_first += 1
            if group_size > m3:
                m3 = group_size
            group_size = 0
            prev_first = first
        group_size += 1
        if first > m1:
            m1 = first
        if second > m2:
            m2 = second
    if group_size > m3:
        m3 = group_size
    if n <= row_threshold and distinct_first <= group_threshold:
        w1, w2, w3 = sizeof(m1), sizeof(m2), sizeof(m3)
        t_c = distinct_first * (w1 + w3) + n * w2
        t_r = n * (w1 + w2)
        if t_r <= t_c:
            return LayoutDescriptor(ROW, w1, w2, 0)
        return LayoutDescriptor(CLUSTER, w1, w2, w3)
    return LayoutDescriptor(COLUMN, 5, 5, 0)


def encode(rows: Sequence[Row], d: LayoutDescriptor) -> bytes:
    """Serialize a sorted table under ``d``; overflow checks per width."""
    if d.kind == ROW:
        return b"".join(
            _pack_pair(first, second, d) for first, second in rows
        )
    if d.kind == COLUMN:
        out = bytearray()
        run_value = None
        run_len = 0
        for first, _ in rows:
            if first == run_value:
                run_len += 1
            else:
                if run_value is not None:
                    out += _pack(run_value, d.w1)
                    out += pack_uint(run_len, RUN_LENGTH_WIDTH)
                run_value = first
                run_len = 1
        if run_value is not None:
            out += _pack(run_value, d.w1)
            out += pack_uint(run_len, RUN_LENGTH_WIDTH)
        for _, second in rows:
            out += _pack(second, d.w2)
        return bytes(out)
    if d.kind == CLUSTER:
        out = bytearray()
        i, n = 0, len(rows)
        while i < n:
            first = rows[i][0]
            j = i
            while j < n and rows[j][0] == first:
                j += 1
            out += _pack(first, d.w1)
            out += _pack(j - i, d.w3)
            for k in range(i, j):
                out += _pack(rows[k][1], d.w2)
            i = j
        return bytes(out)
    raise ValueError(f"unknown layout kind {d.kind!r}")


def encoded_size(rows: Sequence[Row], d: LayoutDescriptor) -> int:
    n = len(rows)
    if d.kind == ROW:
        return n * (d.w1 + d.w2)
    if d.kind == CLUSTER:
        groups = len({first for first, _ in rows})
        return groups * (d.w1 + d.w3) + n * d.w2
    if d.kind == COLUMN:
        runs = len({first for first, _ in rows})
        return runs * (d.w1 + RUN_LENGTH_WIDTH) + n * d.w2
    raise ValueError(f"unknown layout kind {d.kind!r}")


def decode_scan(buf: bytes, d: LayoutDescriptor, n: int) -> Iterator[Row]:
    """Yield the table's rows in order; inverse of :func:`encode`."""
    if d.kind == ROW:
        stride = d.row_stride()
        _check_len(buf, n * stride)
        for i in range(n):
            off = i * stride
            yield (
                unpack_uint(buf, off, d.w1),
                unpack_uint(buf, off + d.w1, d.w2),
            )
        return
    if d.kind == COLUMN:
        firsts, seconds_off = _column_firsts(buf, d, n)
        _check_len(buf, seconds_off + n * d.w2)
        for i in range(n):
            yield firsts[i], unpack_uint(buf, seconds_off + i * d.w2, d.w2)
        return
    if d.kind == CLUSTER:
        off = 0
        seen = 0
        while seen < n:
            _check_len(buf, off + d.w1 + d.w3)
            first = unpack_uint(buf, off, d.w1)
            count = unpack_uint(buf, off + d.w1, d.w3)
            if count == 0 or seen + count > n:
                raise CorruptDataError("bad cluster group size")
            off += d.w1 + d.w3
            _check_len(buf, off + count * d.w2)
            for k in range(count):
                yield first, unpack_uint(buf, off + k * d.w2, d.w2)
            off += count * d.w2
            seen += count
        return
    raise ValueError(f"unknown layout kind {d.kind!r}")


def search_first(
    buf: bytes, d: LayoutDescriptor, n: int, key: int
) -> Optional[Tuple[int, int]]:
    """Row interval [start, stop) whose first field equals ``key``.

    ROW and COLUMN binary-search (fixed-width cells / fixed-width runs);
    CLUSTER walks group headers and exits early once past the key.
    """
    if d.kind == ROW:
        stride = d.row_stride()
        lo = _bisect(lambda i: unpack_uint(buf, i * stride, d.w1), n, key)
        hi = _bisect(lambda i: unpack_uint(buf, i * stride, d.w1), n, key + 1)
        return (lo, hi) if lo < hi else None
    if d.kind == COLUMN:
        run_stride = d.w1 + RUN_LENGTH_WIDTH
        runs_len = len(buf) - n * d.w2
        if runs_len < 0 or runs_len % run_stride:
            raise CorruptDataError("column table length mismatch")
        num_runs = runs_len // run_stride
        idx = _bisect(
            lambda i: unpack_uint(buf, i * run_stride, d.w1), num_runs, key
        )
        if idx == num_runs or unpack_uint(buf, idx * run_stride, d.w1) != key:
            return None
        start = 0
        for i in range(idx):
            start += unpack_uint(buf, i * run_stride + d.w1, RUN_LENGTH_WIDTH)
        length = unpack_uint(buf, idx * run_stride + d.w1, RUN_LENGTH_WIDTH)
        return (start, start + length)
    if d.kind == CLUSTER:
        off = 0
        row = 0
        while row < n:
            _check_len(buf, off + d.w1 + d.w3)
            first = unpack_uint(buf, off, d.w1)
            count = unpack_uint(buf, off + d.w1, d.w3)
            if first == key:
                return (row, row + count)
            if first > key:
                return None
            off += d.w1 + d.w3 + count * d.w2
            row += count
        return None
    raise ValueError(f"unknown layout kind {d.kind!r}")


def row_at(buf: bytes, d: LayoutDescriptor, n: int, index: int) -> Row:
    """Random access to row ``index``; O(1) for ROW, O(runs/groups) otherwise."""
    if not 0 <= index < n:
        raise IndexError(index)
    if d.kind == ROW:
        off = index * d.row_stride()
        return (
            unpack_uint(buf, off, d.w1),
            unpack_uint(buf, off + d.w1, d.w2),
        )
    if d.kind == COLUMN:
        run_stride = d.w1 + RUN_LENGTH_WIDTH
        off = 0
        seen = 0
        while True:
            _check_len(buf, off + run_stride)
            value = unpack_uint(buf, off, d.w1)
            count = unpack_uint(buf, off + d.w1, RUN_LENGTH_WIDTH)
            if seen + count > index:
                break
            seen += count
            off += run_stride
        seconds_off = len(buf) - n * d.w2
        return (value, unpack_uint(buf, seconds_off + index * d.w2, d.w2))
    if d.kind == CLUSTER:
        off = 0
        seen = 0
        while True:
            _check_len(buf, off + d.w1 + d.w3)
            first = unpack_uint(buf, off, d.w1)
            count = unpack_uint(buf, off + d.w1, d.w3)
            if seen + count > index:
                k = index - seen
                return (
                    first,
                    unpack_uint(buf, off + d.w1 + d.w3 + k * d.w2, d.w2),
                )
            seen += count
            off += d.w1 + d.w3 + count * d.w2
    raise ValueError(f"unknown layout kind {d.kind!r}")


# descriptor byte codes:
#   0..24    ROW, w1/w2 in base 5
#   25       COLUMN (always 5, 5)
#   26..150  CLUSTER, w1/w2/w3 in base 5
#   151..175 AGGR, w1/w2 in base 5 (group counts fixed u32)
#   255      absent


def pack_descriptor(d: LayoutDescriptor) -> int:
    if d.kind == ROW:
        return (d.w1 - 1) * 5 + (d.w2 - 1)
    if d.kind == COLUMN:
        return 25
    if d.kind == CLUSTER:
        return 26 + (d.w1 - 1) * 25 + (d.w2 - 1) * 5 + (d.w3 - 1)
    if d.kind == AGGR:
        return 151 + (d.w1 - 1) * 5 + (d.w2 - 1)
    raise ValueError(f"unknown layout kind {d.kind!r}")


def unpack_descriptor(code: int) -> LayoutDescriptor:
    if 0 <= code < 25:
        return LayoutDescriptor(ROW, code // 5 + 1, code % 5 + 1, 0)
    if code == 25:
        return LayoutDescriptor(COLUMN, 5, 5, 0)
    if 26 <= code < 151:
        c = code - 26
        return LayoutDescriptor(CLUSTER, c // 25 + 1, c % 25 // 5 + 1, c % 5 + 1)
    if 151 <= code < 176:
        c = code - 151
        return LayoutDescriptor(AGGR, c // 5 + 1, c % 5 + 1, 0)
    raise CorruptDataError(f"bad descriptor byte {code}")


def _pack(value: int, width: int) -> bytes:
    try:
        return pack_uint(value, width)
    except ValueError as exc:
        raise WidthOverflowError(str(exc)) from None


def _pack_pair(first: int, second: int, d: LayoutDescriptor) -> bytes:
    return _pack(first, d.w1) + _pack(second, d.w2)


def _column_firsts(buf: bytes, d: LayoutDescriptor, n: int) -> Tuple[list, int]:
    """Expand the RLE runs; returns (first values, offset of second column)."""
    firsts: list = []
    off = 0
    run_stride = d.w1 + RUN_LENGTH_WIDTH
    while len(firsts) < n:
        _check_len(buf, off + run_stride)
        value = unpack_uint(buf, off, d.w1)
        count = unpack_uint(buf, off + d.w1, RUN_LENGTH_WIDTH)
        if count == 0 or len(firsts) + count > n:
            raise CorruptDataError("bad run length in column table")
        firsts.extend([value] * count)
        off += run_stride
    return firsts, off


def _bisect(read, n: int, key: int) -> int:
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if read(mid) < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


def _check_len(buf: bytes, need: int) -> None:
    if len(buf) < need:
        raise CorruptDataError(
            f"truncated table: need {need} bytes, have {len(buf)}"
        )
