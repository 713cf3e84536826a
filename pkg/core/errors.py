"""Exception hierarchy shared by every module of the toolkit."""


class FairnessToolkitError(Exception):
    """Base class for all errors raised on purpose by the toolkit."""


class SchemaError(FairnessToolkitError):
    """A dataset schema is malformed or does not match a CSV header."""


class DatasetError(FairnessToolkitError):
    """A dataset cell or row cannot be ingested."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        if row is not None or column is not None:
            message = f"row {row}, column '{column}': {message}"
        super().__init__(message)
        self.row = row
        self.column = column


class UnsupportedInputError(FairnessToolkitError):
    """An operation was handed an input it cannot work with."""


class InvalidConfigError(FairnessToolkitError):
    """A hyperparameter configuration does not validate against its space."""


class TrainingError(FairnessToolkitError):
    """A classifier could not be trained on the given data."""


class FairnessError(FairnessToolkitError):
    """Group rates cannot be computed (for example a protected group is absent)."""


class TraceFormatError(FairnessToolkitError):
    """A trace file is malformed."""


class IncompatibleSpaceError(FairnessToolkitError):
    """Two HP space snapshots (or a config and a space) do not agree."""


class SurrogateError(FairnessToolkitError):
    """A surrogate failed to fit or was used with the wrong inputs."""


class EvaluationError(FairnessToolkitError):
    """A benchmark or shift evaluation cannot be carried out."""


class UndefinedMetricError(EvaluationError):
    """A metric's denominator is zero (constant truth or zero mean)."""


class ConfigError(FairnessToolkitError):
    """A study configuration is invalid. Carries every problem found."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid study configuration:\n  - " + "\n  - ".join(problems))
        self.problems = list(problems)


class StageInputError(FairnessToolkitError):
    """A pipeline stage could not find the file an earlier stage should have written."""

    def __init__(self, path, stage: str):
        super().__init__(f"stage '{stage}' expected input at {path}, but it does not exist")
        self.path = path
        self.stage = stage
