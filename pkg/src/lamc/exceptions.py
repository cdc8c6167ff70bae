"""Exception hierarchy shared by all lamc modules."""


class LamcError(Exception):
    """Base class for every error raised by lamc."""


class ConfigurationError(LamcError, ValueError):
    """Invalid parameters or an experiment configuration that cannot run."""


class DatasetError(LamcError, ValueError):
    """A dataset violates its invariants (labels not binary, non-finite features, ...)."""


class ParseError(DatasetError):
    """A dataset file could not be parsed.

    ``line`` is the 1-based line number of the offending row, or None when the
    problem is not tied to a line (empty file).
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyViewError(DatasetError):
    """No instance carries a positive label, so no single-positive view exists."""


class ShapeError(LamcError, ValueError):
    """Array dimensions do not agree."""


class NonFiniteLossError(LamcError, FloatingPointError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch, batch, value):
        super().__init__(
            f"non-finite loss {value!r} at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch
        self.value = value


class UndefinedMetricError(LamcError, ValueError):
    """Every instance was skipped, so the metric has no value."""


class ExperimentError(LamcError, RuntimeError):
    """A run of the experiment harness aborted.

    Carries the run index and the pipeline stage that failed.
    """

    def __init__(self, run, stage, message):
        super().__init__(f"run {run}, stage '{stage}': {message}")
        self.run = run
        self.stage = stage
