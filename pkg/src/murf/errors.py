"""Exception hierarchy shared across the package.

Split into data errors (bad files, bad shapes, bad configs) and numeric
errors (degenerate or diverging computations) so the CLI can map them to
stable exit codes.
"""


class MurfError(Exception):
    """Base class for all package-specific errors."""


class DataError(MurfError):
    """Malformed input: files, manifests, shapes, or option values."""


class TensorFormatError(DataError):
    """Base for tensor-file decoding failures."""


class BadMagicError(TensorFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedFormatError(TensorFormatError):
    """Unknown version or dtype code."""


class TruncatedFileError(TensorFormatError):
    """Payload shorter (or longer) than the header declares."""


class ManifestError(DataError):
    """Manifest parse failure; message carries the offending line number."""


class ShapeError(DataError):
    """Array shape incompatible with the requested operation."""


class NumericError(MurfError):
    """Computation failed numerically (degenerate input, divergence)."""


class DegenerateFeaturesError(NumericError):
    """Feature matrix has no variance to decompose."""


class NonFiniteLossError(NumericError):
    """Training loss became NaN or infinite."""
