"""Exception hierarchy shared by all modules."""


class OctReconError(Exception):
    """Base class for errors raised by octrecon."""


class InvalidArgumentError(OctReconError, ValueError):
    """An argument violates a documented precondition."""


class ResourceError(OctReconError, MemoryError):
    """A dense object would exceed the configured memory budget."""


class SpectraFormatError(InvalidArgumentError):
    """A spectra file is malformed.

    The message names the line number or byte offset of the problem.
    """
