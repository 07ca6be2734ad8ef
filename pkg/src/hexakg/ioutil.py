"""Byte-level helpers and I/O instrumentation.

All multi-byte integers on disk are little-endian unless a B+Tree key
needs lexicographic = numeric order, in which case big-endian is used
and said so at the call site.
"""
from __future__ import annotations

import os
import threading

MAX_TERM_ID = (1 << 40) - 1
ID_WIDTH = 5  # bytes per term id on disk


def pack_uint(value: int, width: int) -> bytes:
    if value < 0 or value >> (8 * width):
        raise ValueError(f"{value} does not fit in {width} bytes")
    return value.to_bytes(width, "little")


def unpack_uint(buf: bytes, offset: int, width: int) -> int:
    return int.from_bytes(buf[offset : offset + width], "little")


def pack_id_be(value: int) -> bytes:
    # big-endian so B+Tree byte order equals numeric order
    return value.to_bytes(ID_WIDTH, "big")


def unpack_id_be(buf: bytes) -> int:
    return int.from_bytes(buf, "big")


class Counters:
    """Instrumentation shared by one open database.

    ``table_bytes_read`` counts bytes fetched from the table region of any
    byte stream; header, NM and dictionary reads do not count.  Fast-path
    assertions in the tests rely on this split.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.table_bytes_read = 0
        self.io_inflight = 0
        self.io_max_inflight = 0

    def add_table_read(self, n: int) -> None:
        with self._lock:
            self.table_bytes_read += n

    def io_enter(self) -> None:
        with self._lock:
            self.io_inflight += 1
            if self.io_inflight > self.io_max_inflight:
                self.io_max_inflight = self.io_inflight

    def io_exit(self) -> None:
        with self._lock:
            self.io_inflight -= 1

    def reset(self) -> None:
        with self._lock:
            self.table_bytes_read = 0
            self.io_inflight = 0
            self.io_max_inflight = 0


def fsync_dir(path: str) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)
