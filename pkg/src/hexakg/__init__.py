"""Adaptive six-permutation storage engine for labeled directed graphs."""

from .database import Database
from .deltas import apply_update, merge_deltas
from .loader import LoadConfig, load
from .model import TriplePattern, Var

__all__ = [
    "Database",
    "LoadConfig",
    "TriplePattern",
    "Var",
    "apply_update",
    "load",
    "merge_deltas",
]

__version__ = "0.1.0"
