from typing import Any, Dict, Optional


class GapflowError(Exception):
    """Base class; every error maps onto a CLI exit code and a JSON record."""

    exit_code = 1
    kind = 'error'

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_record(self) -> Dict[str, Any]:
        return {
            'error': type(self).__name__,
            'kind': self.kind,
            'message': self.message,
            'details': self.details,
        }


class ValidationError(GapflowError):
    exit_code = 2
    kind = 'validation'


class DimensionBudgetError(ValidationError):
    pass


class NumericalError(GapflowError):
    exit_code = 3
    kind = 'numerical'


class ConvergenceError(NumericalError):
    pass


class PatchNotIsolatedError(NumericalError):
    def __init__(self, message: str, spectrum_head):
        super().__init__(message, {'spectrum_head': [float(e) for e in spectrum_head]})
        self.spectrum_head = list(spectrum_head)


class GapClosedError(NumericalError):
    def __init__(self, lam: float, patch_gap: float, gamma: float, reason: Optional[str] = None):
        super().__init__(
            f"gap closed along path at lambda={lam:.6g} "
            + (f"({reason})" if reason else f"(patch gap {patch_gap:.3e} < gamma {gamma:.3e})"),
            {'lambda': lam, 'patch_gap': patch_gap, 'gamma': gamma},
        )
        self.lam = lam


class FitError(NumericalError):
    pass
