"""Database directory handling: manifest, locks, and open handles.

A database directory holds the base component (dictionary, six streams,
node index) plus zero or more delta components in ``delta-<seq>-<kind>``
subdirectories.  ``manifest.json`` records the configuration and the
ordered list of active deltas; rewriting it (atomic rename) is the
commit point for updates and merges.

A ``Database`` instance is a snapshot: it reads the manifest once at
open time.  Writers take the exclusive file lock on ``.lock``; readers
take it shared.
"""
from __future__ import annotations

import fcntl
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import List, Optional

from .dictionary import Dictionary, DictionaryStack
from .errors import BusyError, StorageError, UsageError
from .ioutil import Counters
from .nodemgr import NodeManager
from .streams import EdgeStore

FORMAT_VERSION = 1
LOCK_FILE = ".lock"
MANIFEST = "manifest.json"

RELOAD_FRACTION = 0.25  # merged-delta size above this fraction of base -> advise reload


@dataclass
class DeltaInfo:
    name: str
    seq: int
    kind: str  # "add" | "rem"
    edges: int


@dataclass
class Manifest:
    id_mode: str = "global"
    nm_backend: str = "btree"
    tau: int = 1_000_000
    upsilon: int = 32
    ofr: bool = False
    eta: int = 20
    aggr: bool = False
    block_size: int = 4096
    edges: int = 0
    next_ids: List[int] = field(default_factory=lambda: [0, 0])
    next_delta_seq: int = 1
    deltas: List[DeltaInfo] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "id_mode": self.id_mode,
            "nm_backend": self.nm_backend,
            "tau": self.tau,
            "upsilon": self.upsilon,
            "ofr": self.ofr,
            "eta": self.eta,
            "aggr": self.aggr,
            "block_size": self.block_size,
            "edges": self.edges,
            "next_ids": self.next_ids,
            "next_delta_seq": self.next_delta_seq,
            "deltas": [
                {"name": d.name, "seq": d.seq, "kind": d.kind, "edges": d.edges}
                for d in self.deltas
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise StorageError(
                f"unsupported database format {doc.get('format_version')!r}"
            )
        return cls(
            id_mode=doc["id_mode"],
            nm_backend=doc["nm_backend"],
            tau=doc["tau"],
            upsilon=doc["upsilon"],
            ofr=doc["ofr"],
            eta=doc["eta"],
            aggr=doc["aggr"],
            block_size=doc["block_size"],
            edges=doc["edges"],
            next_ids=list(doc["next_ids"]),
            next_delta_seq=doc["next_delta_seq"],
            deltas=[DeltaInfo(**d) for d in doc["deltas"]],
        )


def read_manifest(directory: str) -> Manifest:
    path = os.path.join(directory, MANIFEST)
    if not os.path.exists(path):
        raise UsageError(f"no database at {directory}")
    with open(path) as f:
        return Manifest.from_json(f.read())


def write_manifest(directory: str, manifest: Manifest) -> None:
    path = os.path.join(directory, MANIFEST)
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(manifest.to_json())
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


class DbLock:
    def __init__(self, directory: str, exclusive: bool):
        path = os.path.join(directory, LOCK_FILE)
        try:
            self._fd = os.open(path, os.O_CREAT | os.O_RDWR, 0o644)
        except FileNotFoundError:
            raise UsageError(f"no database at {directory}") from None
        op = (fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH) | fcntl.LOCK_NB
        try:
            fcntl.flock(self._fd, op)
        except OSError:
            os.close(self._fd)
            raise BusyError(
                f"database {directory} is locked by another operation"
            ) from None

    def release(self) -> None:
        if self._fd is not None:
            fcntl.flock(self._fd, fcntl.LOCK_UN)
            os.close(self._fd)
            self._fd = None


@contextmanager
def locked(directory: str, exclusive: bool):
    lock = DbLock(directory, exclusive)
    try:
        yield
    finally:
        lock.release()


class ComponentDb:
    """One dictionary + six streams + node index bundle (base or delta)."""

    def __init__(
        self,
        directory: str,
        id_mode: str,
        nm_backend: str,
        counters: Counters,
        edges: int,
        has_dictionary: bool = True,
    ):
        self.directory = directory
        self.edges = edges
        self.counters = counters
        self.store = EdgeStore(directory, counters)
        self.nm = NodeManager(directory, nm_backend)
        self.dictionary: Optional[Dictionary] = None
        if has_dictionary and os.path.exists(
            os.path.join(directory, "dict_meta.json")
        ):
            self.dictionary = Dictionary(directory, id_mode, writable=False)

    def close(self) -> None:
        self.store.close()
        self.nm.close()
        if self.dictionary is not None:
            self.dictionary.close()


class DeltaComponent:
    def __init__(self, info: DeltaInfo, component: ComponentDb):
        self.info = info
        self.component = component

    @property
    def is_addition(self) -> bool:
        return self.info.kind == "add"


class Database:
    """Open handle over one database snapshot."""

    def __init__(self, directory: str):
        self.directory = directory
        self.manifest = read_manifest(directory)
        self.counters = Counters()
        self.base = ComponentDb(
            directory,
            self.manifest.id_mode,
            self.manifest.nm_backend,
            self.counters,
            self.manifest.edges,
        )
        self.deltas: List[DeltaComponent] = []
        for info in self.manifest.deltas:
            comp = ComponentDb(
                os.path.join(directory, info.name),
                self.manifest.id_mode,
                self.manifest.nm_backend,
                self.counters,
                info.edges,
            )
            self.deltas.append(DeltaComponent(info, comp))
        segments = []
        for delta in reversed(self.deltas):
            if delta.component.dictionary is not None:
                segments.append(delta.component.dictionary)
        if self.base.dictionary is not None:
            segments.append(self.base.dictionary)
        self.dictionary = DictionaryStack(segments)

    @property
    def id_mode(self) -> str:
        return self.manifest.id_mode

    def components(self):
        """Base plus deltas in timestamp order, tagged with their kind."""
        yield ("base", -1, self.base)
        for delta in self.deltas:
            yield (delta.info.kind, delta.info.seq, delta.component)

    def visible_edge_count(self) -> int:
        total = self.base.edges
        for delta in self.deltas:
            if delta.is_addition:
                total += delta.info.edges
            else:
                total -= delta.info.edges
        return total

    def reload_recommended(self) -> bool:
        delta_edges = sum(d.info.edges for d in self.deltas)
        return self.base.edges > 0 and delta_edges > RELOAD_FRACTION * self.base.edges

    def close(self) -> None:
        self.base.close()
        for delta in self.deltas:
            delta.component.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
