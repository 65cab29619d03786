"""Exception types shared across the package."""


class DomchainError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(DomchainError, ValueError):
    """A caller-supplied parameter is outside its documented range."""


class ValidationError(DomchainError):
    """Data violates a structural invariant (bad vertex id, malformed set, ...)."""


class ProtocolError(DomchainError):
    """A protocol-level precondition does not hold."""


class PartitionError(ProtocolError):
    """A vertex-to-worker assignment leaves vertices uncovered."""

    def __init__(self, missing):
        self.missing = sorted(int(v) for v in missing)
        shown = ", ".join(str(v) for v in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"unassigned vertices: {shown}{more}")


class GuardError(DomchainError):
    """An operation was refused by a safety guard (instance too large, ...)."""


class DecodeError(DomchainError):
    """Malformed bytes. ``offset`` points at the first offending byte when known."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class ApprovalError(ProtocolError):
    """Committee approval could not be produced (quorum not reached, ...)."""


class StoreError(DomchainError):
    """An instance could not be fetched from or written to the instance store."""


class GenerationAbort(DomchainError):
    """Block generation gave up; ``reason`` is a machine-readable code."""

    def __init__(self, reason, message=""):
        self.reason = reason
        super().__init__(message or reason)
