"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(EngineError):
    """Invalid configuration: bad template, bad block parameters, missing worker."""


class GapError(EngineError):
    """Frame directory has a hole in its index sequence."""


class EmptyError(EngineError):
    """A sequence that must contain at least one frame is empty."""


class DimensionError(EngineError):
    """Width/height/channel mismatch between items that must agree."""


class LengthError(EngineError):
    """Sequence lengths that must agree do not."""


class DecoderError(EngineError):
    """External decoder command failed."""

    def __init__(self, message: str, exit_code: int | None = None, diagnostics: str = ""):
        super().__init__(message)
        self.exit_code = exit_code
        self.diagnostics = diagnostics


class CorruptRleError(EngineError):
    """Run-length data does not reconstruct a mask of the declared size."""


class ParamError(EngineError):
    """Color transform parameters are malformed (non-finite)."""


class PromptError(EngineError):
    """Spatial prompt is invalid for the target sequence."""


class UninpaintableError(EngineError):
    """A mask covers an entire frame, leaving no boundary to fill from."""


class DegeneratePoseError(EngineError):
    """Target pose anchors coincide; no similarity transform exists."""


class ProtocolError(EngineError):
    """Worker wire protocol violation: bad handshake, malformed message."""


class ContractViolationError(EngineError):
    """Worker produced artifacts that break the stage contract."""


class WorkerTimeoutError(EngineError):
    """Worker did not answer within its configured timeout."""


class StageError(EngineError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str, code: str | None = None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.code = code
