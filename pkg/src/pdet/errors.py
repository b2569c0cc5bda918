"""Exception hierarchy shared by every pdet module."""


class PdetError(Exception):
    """Base class for all errors raised by pdet."""


class SignalTooShort(PdetError, ValueError):
    pass


class ZeroVariance(PdetError, ValueError):
    pass


class BandOutOfRange(PdetError, ValueError):
    pass


class BadNfft(PdetError, ValueError):
    pass


class EmptyBand(PdetError, ValueError):
    pass


class ZeroBandPower(PdetError, ValueError):
    pass


class ZeroTotalPower(PdetError, ValueError):
    pass


class BinMismatch(PdetError, ValueError):
    pass


class DegenerateOutput(PdetError, ArithmeticError):
    """The model output carries no usable spectral power (a collapsed or silent output)."""


class NonFiniteLoss(PdetError, ArithmeticError):
    pass


class ShapeMismatch(PdetError, ValueError):
    pass


class InputTooShort(PdetError, ValueError):
    pass


class GraphConsumed(PdetError, RuntimeError):
    """``backward`` was called twice on the same recorded graph."""


class BadLength(PdetError, ValueError):
    pass


class BadMagic(PdetError, ValueError):
    pass


class UnsupportedVersion(PdetError, ValueError):
    pass


class CorruptCheckpoint(PdetError, ValueError):
    pass


class Truncated(PdetError, ValueError):
    pass


class BadFrequency(PdetError, ValueError):
    pass


class ParseError(PdetError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class EmptyFile(PdetError, ValueError):
    pass


class LengthMismatch(PdetError, ValueError):
    pass


class ZeroTruth(PdetError, ValueError):
    pass


class ConstantSequence(PdetError, ValueError):
    pass


class AllSamplesFailed(PdetError, RuntimeError):
    pass
