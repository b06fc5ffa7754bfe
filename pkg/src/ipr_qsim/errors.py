"""Exception hierarchy shared by every subpackage."""


class IprQsimError(Exception):
    """Base class for all errors raised by ipr_qsim."""


class InvalidBasisIndexError(IprQsimError, ValueError):
    pass


class GateShapeError(IprQsimError, ValueError):
    pass


class BlockShapeError(IprQsimError, ValueError):
    pass


class NumericalDriftError(IprQsimError, ArithmeticError):
    """State norm drifted away from 1 beyond the allowed tolerance."""


class SizeCapError(IprQsimError, ValueError):
    pass


class UnsupportedTermError(IprQsimError, ValueError):
    pass


class UnsupportedRegisterError(IprQsimError, ValueError):
    pass


class HermiticityError(IprQsimError, ValueError):
    pass


class NormalizationError(IprQsimError, ValueError):
    pass


class NoGapError(IprQsimError, ValueError):
    pass


class DomainError(IprQsimError, ValueError):
    pass


class ThermalMatchError(IprQsimError, RuntimeError):
    pass


class ConfigError(IprQsimError, ValueError):
    pass
