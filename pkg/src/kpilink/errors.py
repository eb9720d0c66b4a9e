"""Exception hierarchy shared across the package."""


class KpilinkError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(KpilinkError):
    """A call violated a documented precondition."""


class ShapeError(ContractError):
    """Tensor or array dimensions are incompatible."""


class MaskError(ContractError):
    """A boolean mask is malformed (wrong length or no surviving entry)."""


class ConfigError(KpilinkError):
    """A configuration value is missing, malformed, or out of range."""


class DataError(KpilinkError):
    """Input data violates the annotation or tagging contract."""


class FormatError(DataError):
    """A file could not be parsed; carries location information."""

    def __init__(self, message, path=None, line=None, field=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field}")
        prefix = ": ".join(loc)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.field = field


class AlignmentError(DataError):
    """Predictions refer to a sentence id absent from the gold data."""


class TrainingDiverged(KpilinkError):
    """Training hit a non-finite loss; carries the offending batch."""

    def __init__(self, message, batch_dump=None):
        super().__init__(message)
        self.batch_dump = batch_dump
