"""Exception types shared across the toolkit.

Shape and argument problems raise plain ValueError. The classes below exist
so the command line can map failures to distinct exit codes.
"""


class TransnetError(Exception):
    """Base class for toolkit-specific failures."""


class FormatError(TransnetError):
    """A file or byte stream does not match its declared format."""


class NumericError(TransnetError):
    """A computation produced or received non-finite values."""
