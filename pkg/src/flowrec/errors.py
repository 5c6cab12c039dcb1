"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3, numeric failures exit 4. Plain ``ValueError`` is used for
caller bugs (bad arguments) and also exits 2.
"""


class FlowrecError(Exception):
    """Base class for package errors."""


class ConfigError(FlowrecError):
    """Bad or inconsistent configuration (unknown keys, invalid values)."""


class DataError(FlowrecError):
    """Problem with on-disk inputs (manifests, frames, caches)."""


class ManifestError(DataError):
    """Malformed or inconsistent manifest record."""


class IngestionError(DataError):
    """Frame directory does not match its clip record."""


class FlowCacheError(DataError):
    """Flow cache file is corrupt (bad magic, truncation, CRC mismatch)."""


class FlowCacheShapeError(FlowCacheError):
    """Flow cache header disagrees with the expected field geometry."""


class InfeasiblePlanError(FlowrecError):
    """A sampling scheme cannot satisfy its frame budget."""


class NumericError(FlowrecError):
    """Non-finite values or degenerate inputs in numeric code."""


class EvaluationError(FlowrecError):
    """Metric undefined for the given inputs (e.g. no positive labels)."""
