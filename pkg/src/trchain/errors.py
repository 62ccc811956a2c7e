"""Exception hierarchy shared by every module."""


class TRChainError(Exception):
    """Base class for all domain errors."""


class InvalidModulusError(TRChainError, ValueError):
    pass


class NotInvertibleError(TRChainError, ValueError):
    pass


class InvalidDifficultyError(TRChainError, ValueError):
    pass


class InPastError(TRChainError, ValueError):
    pass


class IntegrityError(TRChainError):
    """Ciphertext tag did not match: wrong key or corrupted data."""


class FormatError(TRChainError, ValueError):
    """Malformed wire blob, record, or config file."""


class NonceTooLargeError(TRChainError, ValueError):
    pass


class DegenerateCollisionError(TRChainError):
    pass


class MiningExhaustedError(TRChainError):
    pass


class TemplateTrappedError(MiningExhaustedError):
    """Every start on this header falls into the same degenerate cycle."""

    steps = 0


class InvalidSolutionError(TRChainError):
    """Raised by validation; ``step`` names the failing check."""

    def __init__(self, step: str, message: str):
        super().__init__(f"[{step}] {message}")
        self.step = step


class NoKeyError(TRChainError):
    pass


class EmptyBlockError(TRChainError, ValueError):
    pass


class InvalidBlockError(TRChainError):
    pass
