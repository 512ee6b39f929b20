"""Exception and warning types, one per pipeline stage.

Every error carries the stage name and an exit code so the command line
front end can map failures to distinct process exit statuses.
"""


class PipelineError(Exception):
    stage = "pipeline"
    exit_code = 1

    def __init__(self, message, hint=None):
        super().__init__(message)
        self.hint = hint

    def __str__(self):
        msg = f"[{self.stage}] {self.args[0]}"
        if self.hint:
            msg += f" (hint: {self.hint})"
        return msg


class IngestError(PipelineError):
    stage = "ingest"
    exit_code = 2


class AlignmentError(PipelineError):
    stage = "alignment"
    exit_code = 3


class SmoothingError(PipelineError):
    stage = "smoothing"
    exit_code = 4


class ScaleError(PipelineError):
    stage = "scale"
    exit_code = 5


class EvaluationError(PipelineError):
    stage = "evaluation"
    exit_code = 6


class PipelineWarning(UserWarning):
    """Base class for non-fatal diagnostics."""


class IngestWarning(PipelineWarning):
    pass


class AlignmentWarning(PipelineWarning):
    pass


class SmoothingWarning(PipelineWarning):
    pass


class ScaleWarning(PipelineWarning):
    pass


class EvaluationWarning(PipelineWarning):
    pass
