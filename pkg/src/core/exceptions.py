"""
Custom exception classes for the stylisation toolkit.
"""

from typing import Any, Dict, Iterable, Optional, Sequence


# Process exit codes used by the command line surface.
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class StylisationError(Exception):
    """Base exception class for the toolkit."""

    def __init__(self, message: str, exit_code: int = EXIT_RUNTIME, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class UsageError(StylisationError):
    """Raised when the command line is malformed."""

    def __init__(self, message: str = "Invalid usage", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_USAGE, details)


class ConfigurationError(StylisationError):
    """Raised when a setting, profile or backbone choice cannot be honoured."""

    def __init__(self, message: str = "Configuration error", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_RUNTIME, details)


class DomainError(StylisationError):
    """Raised when an operation's precondition on its inputs is violated."""

    def __init__(self, message: str = "Invalid input", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_RUNTIME, details)

    @classmethod
    def shape_mismatch(cls, first: Sequence[int], second: Sequence[int], what: str = "inputs"):
        return cls(
            f"Shape mismatch between {what}: {tuple(first)} vs {tuple(second)}",
            details={"first": list(first), "second": list(second)},
        )


class IndivisibleResolutionError(DomainError):
    """Raised when a frame cannot pass through the stride-4 network unpadded."""

    def __init__(self, height: int, width: int, multiple: int = 4):
        message = (
            f"Resolution {height}x{width} is not divisible by {multiple}; "
            f"pad or resize the frame so height and width are multiples of {multiple}"
        )
        super().__init__(message, {"height": height, "width": width, "multiple": multiple})


class IngestionError(StylisationError):
    """Raised when a corpus cannot be read."""

    def __init__(self, message: str = "Corpus ingestion failed", bad_paths: Iterable[str] = ()):
        bad = [str(p) for p in bad_paths]
        if bad:
            message = f"{message}: {', '.join(bad)}"
        super().__init__(message, EXIT_RUNTIME, {"bad_paths": bad})
        self.bad_paths = bad


class EpochExhausted(StylisationError):
    """Signals the end of an epoch. Not a failure."""

    def __init__(self, epoch: int = 0):
        super().__init__(f"Epoch {epoch} exhausted", EXIT_OK, {"epoch": epoch})
        self.epoch = epoch


class TrainingStepError(StylisationError):
    """Raised when a loss component is not finite."""

    def __init__(self, component: str, value: float, step: Optional[int] = None,
                 last_good_checkpoint: Optional[str] = None):
        message = f"Non-finite loss component '{component}' ({value})"
        if step is not None:
            message += f" at step {step}"
        super().__init__(message, EXIT_RUNTIME, {
            "component": component,
            "value": str(value),
            "step": step,
            "last_good_checkpoint": last_good_checkpoint,
        })
        self.component = component


class CheckpointError(StylisationError):
    """Base class for checkpoint problems."""

    def __init__(self, message: str = "Checkpoint error", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_RUNTIME, details)


class CheckpointMismatchError(CheckpointError):
    """Raised when a checkpoint was written by another format version or config."""

    def __init__(self, field: str, expected: Any, found: Any):
        message = f"Checkpoint {field} mismatch: expected {expected}, found {found}"
        super().__init__(message, {"field": field, "expected": str(expected), "found": str(found)})


class CheckpointCorruptError(CheckpointError):
    """Raised when a checkpoint file cannot be decoded."""

    def __init__(self, path: str, reason: str = ""):
        message = f"Checkpoint file is corrupt or truncated: {path}"
        if reason:
            message += f" ({reason})"
        super().__init__(message, {"path": str(path), "reason": reason})


class ExportError(StylisationError):
    """Raised when a model cannot be exported to the inference graph format."""

    def __init__(self, message: str = "Export refused", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_RUNTIME, details)


class StorageError(StylisationError):
    """Raised when an artifact cannot be read or written."""

    def __init__(self, message: str = "Storage error", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, EXIT_RUNTIME, details)
