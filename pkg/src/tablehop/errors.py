"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
BackendError -> 3.
"""

from __future__ import annotations


class TablehopError(Exception):
    """Base class for all package errors."""


class ConfigError(TablehopError):
    """Bad configuration or command-line usage."""


class DataError(TablehopError):
    """Invalid or inconsistent data (corpus files, joins, persisted artifacts)."""


class CorpusError(DataError):
    """Corpus ingestion or consistency failure."""


class PersistenceError(DataError):
    """Saved index or store is unreadable, corrupted, or from another version."""


class BackendError(TablehopError):
    """A model backend (embedder or generator) failed."""
