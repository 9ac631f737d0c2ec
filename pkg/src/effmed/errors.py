"""Exception and warning classes.

Every error carries a machine-readable ``code`` and the process exit status
the command line front end uses for it (2 = validation, 3 = numerical).
"""


class EffmedError(Exception):
    code = "E_INTERNAL"
    exit_status = 3

    def to_json(self):
        return {"code": self.code, "type": type(self).__name__, "message": str(self)}


class ValidationError(EffmedError, ValueError):
    code = "E_VALIDATION"
    exit_status = 2


class InputError(ValidationError):
    code = "E_INPUT"


class ManifestError(ValidationError):
    code = "E_MANIFEST"


class PackingViolation(ValidationError):
    code = "E_PACKING"


class DivisionByZeroSupport(ValidationError):
    code = "E_SUPPORT"


class InvalidRadius(ValidationError):
    code = "E_RADIUS"


class CellOverflow(ValidationError):
    code = "E_CELL_OVERFLOW"


class RegionOutsideDomain(ValidationError):
    code = "E_REGION"


class OverlapError(ValidationError):
    code = "E_OVERLAP"


class KaTooLarge(ValidationError):
    code = "E_KA"


class ResolutionError(ValidationError):
    code = "E_RESOLUTION"


class GridTooSmall(ValidationError):
    code = "E_GRID"


class MissingForwardDirection(ValidationError):
    code = "E_FORWARD_DIRECTION"


class InvalidKappa(ValidationError):
    code = "E_KAPPA"


class NumericalError(EffmedError, ArithmeticError):
    code = "E_NUMERICAL"
    exit_status = 3


class SingularSystem(NumericalError):
    """Linear system could not be solved to the residual contract.

    ``condition`` is a 1-norm condition estimate when one is available
    (dense path), otherwise ``None``.
    """

    code = "E_SINGULAR"

    def __init__(self, message, condition=None, residual=None):
        super().__init__(message)
        self.condition = condition
        self.residual = residual

    def to_json(self):
        out = super().to_json()
        out["condition"] = self.condition
        out["residual"] = self.residual
        return out


class IllConditioned(SingularSystem):
    code = "E_ILL_CONDITIONED"


class SingularDispersion(NumericalError):
    code = "E_DISPERSION"


class KaWarning(UserWarning):
    pass


class ResolutionWarning(UserWarning):
    pass


class DivergenceWarning(UserWarning):
    pass
