"""Exception types shared across the toolkit."""


class RidgekitError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(RidgekitError, ValueError):
    """An argument violates an operation's preconditions."""


class FormatError(RidgekitError, ValueError):
    """A file or record does not conform to its documented format."""
