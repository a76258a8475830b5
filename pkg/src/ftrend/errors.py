class DimensionError(ValueError):
    """Array shapes do not conform."""


class ConvergenceError(RuntimeError):
    """An iterative routine stopped before reaching its tolerance.

    The last iterate and the final residual are kept for diagnostics.
    """

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class CoverageError(ValueError):
    """A held-out vertex has no retained neighbour to predict from."""
