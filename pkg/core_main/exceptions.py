"""Error hierarchy shared by every pipeline app."""


class PipelineError(Exception):
    """Base class for all pipeline failures"""


class RecordParseError(PipelineError, ValueError):
    """A record could not be parsed (carries the 1-based line number when known)"""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class RecordValidationError(PipelineError, ValueError):
    """A parsed value violates the invariants of its domain type"""


class FormatError(PipelineError, ValueError):
    """A binary file has the wrong magic, header or payload size"""


class BundleVersionError(PipelineError):
    """A model bundle was written by an incompatible format version"""


class BundleCorruptionError(PipelineError):
    """A model bundle payload does not match its recorded checksum"""


class ConfigError(PipelineError, ValueError):
    """Configuration or hyperparameters are out of bounds"""


class DimensionMismatchError(PipelineError, ValueError):
    """Array shapes of two inputs are incompatible"""


class ConvergenceError(PipelineError):
    """An iterative solver hit its iteration cap"""


class TrainingDivergedError(PipelineError):
    """Training produced a non-finite loss"""


class MissingArtifactError(PipelineError):
    """A stage input is absent on disk"""

    def __init__(self, path, stage=None):
        self.path = path
        self.stage = stage
        prefix = f"[{stage}] " if stage else ""
        super().__init__(f"{prefix}missing artifact: {path}")


class StageFailedError(PipelineError):
    """A pipeline stage raised; carries the stage name and the original error"""

    def __init__(self, stage, error):
        self.stage = stage
        self.error = error
        super().__init__(f"{stage}: {error}")
