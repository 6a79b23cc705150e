"""Exception hierarchy shared by all truetop modules."""


class TrueTopError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(TrueTopError):
    """Invalid configuration, parameters, or input data."""


class EmptyGraphError(ValidationError):
    """An operation that requires a non-empty graph received no edges."""


class SnapshotFormatError(ValidationError):
    """A graph snapshot file is malformed or uses an unknown version."""


class ScenarioError(ValidationError):
    """An attack scenario cannot be realized on the given honest graph."""


class SeedingError(TrueTopError):
    """Seed selection failed (e.g. fewer verified users than requested seeds)."""
