"""Exception hierarchy shared by every module."""


class FlowVariantsError(Exception):
    """Base class for all library errors."""


class ZeroTranslation(FlowVariantsError):
    """Translation magnitude too small for the invariants to be defined."""


class DimensionMismatch(FlowVariantsError):
    pass


class BadBandEdges(FlowVariantsError):
    pass


class TooFewPoints(FlowVariantsError):
    pass


class DegeneratePoint(FlowVariantsError):
    pass


class BadMagic(FlowVariantsError):
    pass


class TruncatedPayload(FlowVariantsError):
    pass


class OversizeDims(FlowVariantsError):
    pass


class ParseError(FlowVariantsError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotonicTime(FlowVariantsError):
    pass
