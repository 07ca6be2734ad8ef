"""Request/response models for the HTTP service (and the CLI client).

Labels travel as strings; arbitrary label bytes round-trip through
UTF-8 with surrogate escapes.
"""
from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


def label_to_str(label: bytes) -> str:
    return label.decode("utf-8", "surrogateescape")


def str_to_label(text: str) -> bytes:
    return text.encode("utf-8", "surrogateescape")


class ErrorBody(BaseModel):
    category: str
    message: str


class LoadRequest(BaseModel):
    db: str
    input: str
    format: str = "ntriples"
    id_mode: str = "global"
    nm: str = "btree"
    ofr: bool = False
    eta: int = 20
    aggr: bool = False
    tau: int = 1_000_000
    upsilon: int = 32
    proc_workers: int = 1
    io_workers: int = 1
    sort_mem_bytes: int = 256 << 20
    tmp_dir: Optional[str] = None


class LoadResponse(BaseModel):
    db: str
    edges: int
    entity_labels: int
    relation_labels: int
    skipped_duplicates: int
    layout_counts: Dict[str, Dict[str, int]]
    layout_totals: Dict[str, int]
    file_bytes: Dict[str, int]


class QueryRequest(BaseModel):
    db: str
    query: str


class QueryResponse(BaseModel):
    variables: List[str]
    rows: List[List[str]]
    count: int


class ProbeRequest(BaseModel):
    db: str
    primitive: str
    pattern: Optional[str] = None  # e.g. "?x isA ?y"
    ordering: Optional[str] = None
    grouping: Optional[str] = None
    index: Optional[int] = None
    term_id: Optional[int] = None
    label: Optional[str] = None


class ProbeResponse(BaseModel):
    primitive: str
    value: Optional[int] = None
    label: Optional[str] = None
    rows: Optional[List[List[str]]] = None
    groups: Optional[List[List[int]]] = None  # [key..., count]
    count: Optional[int] = None


class UpdateRequest(BaseModel):
    db: str
    action: str  # add | remove
    input: Optional[str] = None  # N-Triples file
    triples: Optional[List[List[str]]] = None  # inline [s, p, o] label rows


class UpdateResponse(BaseModel):
    action: str
    requested: int
    applied: int
    skipped: int
    delta_name: Optional[str]
    delta_count: int
    reload_recommended: bool


class MergeResponse(BaseModel):
    merged: bool
    delta_count: int
    delta_edges: int
    reload_recommended: bool


class DeltaStats(BaseModel):
    name: str
    seq: int
    kind: str
    edges: int


class StatsResponse(BaseModel):
    db: str
    edges: int
    base_edges: int
    entity_labels: int
    relation_labels: int
    id_mode: str
    nm_backend: str
    layout_counts: Dict[str, Dict[str, int]]
    layout_totals: Dict[str, int]
    file_bytes: Dict[str, int]
    deltas: List[DeltaStats] = Field(default_factory=list)
    reload_recommended: bool = False
