"""Exception types shared across the package."""


class ToolforgeError(Exception):
    """Base class for all domain errors."""


# persistence

class SerializationError(ToolforgeError):
    pass


class FormatError(ToolforgeError):
    """Malformed toolset file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InvariantError(ToolforgeError):
    """A domain invariant was violated; ``field`` names the offender."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


# embedding

class EmptyTextError(ToolforgeError):
    pass


class DimMismatchError(ToolforgeError):
    pass


# sampling

class CorpusTooSmallError(ToolforgeError):
    pass


class EmptySelectionError(ToolforgeError):
    pass


# llm gateway

class ProviderError(ToolforgeError):
    """Remote provider failed; ``status`` carries the HTTP status if known."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class BudgetExceededError(ToolforgeError):
    pass


class MissingSlotError(ToolforgeError):
    def __init__(self, slot: str):
        super().__init__(f"missing template slot: {slot}")
        self.slot = slot


class UnknownSlotError(ToolforgeError):
    def __init__(self, slot: str):
        super().__init__(f"unknown template slot: {slot}")
        self.slot = slot


class NoCodeFoundError(ToolforgeError):
    pass


# snippet parsing

class NoFunctionError(ToolforgeError):
    pass


class SyntaxShapeError(ToolforgeError):
    pass


# sandbox

class ShimMissingError(ToolforgeError):
    pass


class ProtocolError(ToolforgeError):
    pass


# retrieval / analysis

class UnknownToolError(ToolforgeError):
    pass


class MissingEpochMetaError(ToolforgeError):
    pass
