"""Exception types shared across the toolkit."""


class TruncationError(ValueError):
    """A Hilbert-space cutoff is too small for the requested states."""

    def __init__(self, message: str, min_cutoff: int | None = None):
        super().__init__(message)
        self.min_cutoff = min_cutoff


class IllConditionedError(ValueError):
    """A linear inversion was refused because the matrix is near singular."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(message)
        self.condition_number = condition_number


class MultiFrequencyError(RuntimeError):
    """A Ramsey trace has more spectral components than the model supports."""

    flag = "multi-frequency"

    def __init__(self, message: str, peaks=None):
        super().__init__(message)
        self.peaks = peaks if peaks is not None else []


class NoPeaksError(RuntimeError):
    """A Ramsey trace has no spectral component above threshold."""

    flag = "no-peaks"
