"""Exception types shared across modules."""


class OntomineError(Exception):
    """Base class for all errors raised by this package."""


class TransportError(OntomineError):
    """A remote endpoint could not be reached or returned garbage, retries exhausted."""
