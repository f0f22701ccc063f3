"""Error types raised by the pipeline stages."""


class PipelineError(Exception):
    """Base class for all pipeline errors."""


class EmptyRecording(PipelineError):
    """Raw recording contains no samples."""


class AllMissing(PipelineError):
    """Signal has no present value to fill from."""


class TooShort(PipelineError):
    """Signal shorter than the smoothing window."""


class InvalidTrim(PipelineError):
    """Manual trim point lies beyond the signal."""


class EmptySignal(PipelineError):
    """Operation would produce a signal with no values."""


class DegenerateScale(PipelineError):
    """Scaler fit on fewer than two values or zero variance."""


class PadOverflow(PipelineError):
    """Segment history longer than the fixed padded length."""


class EmptyHistory(PipelineError):
    """Forecaster called with an empty history."""


class NumericalDivergence(PipelineError):
    """A non-finite value appeared in a forward or backward pass."""


class ShapeError(PipelineError):
    """Vector lengths disagree."""


class EmptyEvaluation(PipelineError):
    """No segment scores to aggregate."""


class DegenerateFit(PipelineError):
    """Least-squares design matrix is singular (all variances equal)."""


class TooFewPatients(PipelineError):
    """Fewer patients than requested folds."""


class DatasetMismatch(PipelineError):
    """Two datasets were preprocessed under different configurations."""


class AdapterError(PipelineError):
    """Base class for external-adapter failures."""


class AdapterProtocolError(AdapterError):
    """Adapter broke the line protocol (bad JSON, missing or duplicate ids)."""


class AdapterTimeout(AdapterError):
    """Adapter did not answer within the deadline."""


class BadPrediction(AdapterError):
    """Adapter returned a prediction of the wrong length."""
