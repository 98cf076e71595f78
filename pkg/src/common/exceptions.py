# src/common/exceptions.py
"""
Errores con nombre del proyecto. Todos heredan de ValueError para que el código
que ya captura ValueError (y los tests con pytest.raises(ValueError)) sigan funcionando.
"""


class FairClipError(ValueError):
    """Error base de fairclip."""


# numerics
class NonFiniteInput(FairClipError):
    pass


class InvalidStdDev(FairClipError):
    pass


# model
class ShapeMismatch(FairClipError):
    pass


class NonFiniteLoss(FairClipError):
    pass


class EmptySplit(FairClipError):
    pass


# clip
class InvalidBound(FairClipError):
    pass


class EmptyBatch(FairClipError):
    pass


class NotAdaptive(FairClipError):
    pass


# privacy
class AccountingOverflow(FairClipError):
    pass


class NoFiniteOrder(FairClipError):
    pass


class CalibrationOutOfRange(FairClipError):
    pass


# engine
class DivergedStep(FairClipError):
    pass


# analysis
class NonBinaryAttribute(FairClipError):
    pass


class NoAttributes(FairClipError):
    pass


class InvalidBaseline(FairClipError):
    pass


class DegeneratePairs(FairClipError):
    pass


class UnpairedData(FairClipError):
    def __init__(self, message: str, missing_keys: list = None):
        super().__init__(message)
        self.missing_keys = missing_keys or []


# data
class StratumTooSmall(FairClipError):
    pass


class DataFormatError(FairClipError):
    pass


class SchemaMismatch(FairClipError):
    pass


# cli / configuración
class ConfigError(FairClipError):
    pass


class MissingTraces(FairClipError):
    pass
