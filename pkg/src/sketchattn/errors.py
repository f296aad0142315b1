# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Exception types raised by sketchattn."""


class SketchAttentionError(Exception):
    """Base class for all sketchattn errors."""


class InvalidArgumentError(SketchAttentionError, ValueError):
    """An argument is outside the domain of the operation."""


class MatrixFormatError(SketchAttentionError):
    """A MATF file is malformed.

    Attributes:
        offset: Byte offset in the file where the problem was detected
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ResourceLimitError(SketchAttentionError):
    """An O(n²) computation was requested above the configured oracle cap."""


class NumericalError(SketchAttentionError):
    """A non-finite or underflowed intermediate appeared where none may."""


class SanityCheckError(SketchAttentionError):
    """A benchmark result fell outside its sanity ceiling."""
