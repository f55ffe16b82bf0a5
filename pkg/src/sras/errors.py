"""Exception hierarchy shared across the package."""


class SrasError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SrasError, ValueError):
    """Tensor dimensions do not match an operation's contract."""


class FormatError(SrasError, ValueError):
    """A serialized file is malformed (bad magic, version, dims, truncation)."""


class DataError(SrasError, ValueError):
    """A dataset record violates an invariant (missing field, bad reference)."""


class TrainingError(SrasError, RuntimeError):
    """Training aborted: non-finite gradient or loss."""


class RewardError(SrasError, RuntimeError):
    """Reward computation failed; carries the offending example id."""

    def __init__(self, message: str, example_id: str | None = None):
        super().__init__(message if example_id is None else f"{message} (example {example_id})")
        self.example_id = example_id
