"""Exception types raised by the library."""


class NFSTError(Exception):
    """Base class for domain errors (CLI exit code 2)."""


class FormatError(NFSTError, ValueError):
    """A feature, label or model file does not match its format."""


class NoNullSpace(NFSTError):
    """Fewer than C-1 null projecting directions were found.

    Usually means the small-sample-size condition does not hold (feature
    dimension too low for the number of samples) or identities duplicate
    each other.
    """

    def __init__(self, found, required, message=None):
        self.found = found
        self.required = required
        if message is None:
            message = (f"found {found} null directions below threshold, "
                       f"need {required}")
        super().__init__(message)


class DegenerateKernel(NFSTError):
    """Kernel width is zero or the centered kernel has numerical rank 0."""


class ProtocolError(NFSTError, ValueError):
    """Evaluation inputs violate the matching protocol."""
