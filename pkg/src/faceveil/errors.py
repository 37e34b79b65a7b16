"""Exception types shared across the package."""


class FaceveilError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(FaceveilError):
    """Bad configuration: incompatible shapes, missing weights, invalid options."""


class DataError(FaceveilError):
    """Malformed external data: image files, weight files, label files."""


class DegenerateInputError(FaceveilError):
    """An input admits no meaningful result (all-zero vector, empty box, ...)."""


class InvariantError(FaceveilError):
    """An internal invariant failed; indicates a bug, mapped to exit code 3."""


class TrainingDiverged(FaceveilError):
    """Toy training hit a non-finite loss."""


class WeightLoadError(DataError):
    """A weight file could not be loaded."""


class BadMagicError(WeightLoadError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(WeightLoadError):
    """File ended before the declared contents."""


class DuplicateTensorError(WeightLoadError):
    """Two tensors in one file share a name."""
