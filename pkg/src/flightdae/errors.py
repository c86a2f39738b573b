"""Exception types shared across the package."""


class FlightDaeError(Exception):
    """Base class for all package-specific errors."""


class EmptyInputError(FlightDaeError):
    """No usable rows / points were found in the input."""


class ContractError(FlightDaeError):
    """A caller violated an API precondition (shape, ordering, key...)."""


class NumericError(FlightDaeError):
    """A numerical computation produced NaN/Inf or failed to converge."""


class UndefinedBearingError(NumericError):
    """Bearing requested between coincident points."""


class DegenerateFeatureError(FlightDaeError):
    """A feature has zero variance and cannot be standardized."""

    def __init__(self, feature: str):
        super().__init__(f"feature {feature!r} has zero variance")
        self.feature = feature


class RecordParseError(FlightDaeError):
    """A serialized window record could not be parsed."""

    def __init__(self, index: int, path, reason: str):
        super().__init__(f"record {index} in {path}: {reason}")
        self.index = index
        self.path = path


class CalibrationError(FlightDaeError):
    """Threshold calibration impossible (too few windows, missing decoder...)."""


class TrainingDivergedError(NumericError):
    """Training loss became non-finite."""


class PipelineStageError(FlightDaeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
