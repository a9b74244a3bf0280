"""Exception types shared across the package."""

from __future__ import annotations


class CbxError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(CbxError):
    def __init__(self, layer_index: int, expected, got):
        self.layer_index = layer_index
        self.expected = expected
        self.got = got
        super().__init__(
            f"layer {layer_index}: expected shape {expected}, got {got}"
        )


class NonFiniteValue(CbxError):
    def __init__(self, layer_index: int, context: str = "activation"):
        self.layer_index = layer_index
        super().__init__(f"non-finite {context} at layer {layer_index}")


class CannotFold(CbxError):
    def __init__(self, layer_index: int):
        self.layer_index = layer_index
        super().__init__(
            f"batch-norm at layer {layer_index} has no preceding conv layer"
        )


class NotCanonized(CbxError):
    def __init__(self, layer_index: int):
        self.layer_index = layer_index
        super().__init__(
            f"network still contains batch-norm at layer {layer_index}; fold first"
        )


class EmptyDataset(CbxError):
    pass


class LengthMismatch(CbxError):
    def __init__(self, lhs: int, rhs: int):
        super().__init__(f"length mismatch: {lhs} vs {rhs}")


class IndexOutOfRange(CbxError):
    def __init__(self, index: int, arity: int):
        self.index = index
        self.arity = arity
        super().__init__(f"index {index} out of range for arity {arity}")


class EmptyGrid(CbxError):
    pass


class NotVisible(CbxError):
    pass


class OutOfBounds(CbxError):
    pass


class ConfigInvalid(CbxError):
    pass


class BadMagic(CbxError):
    def __init__(self, got: str):
        super().__init__(f"bad manifest magic {got!r}")


class CorruptOffsets(CbxError):
    pass
