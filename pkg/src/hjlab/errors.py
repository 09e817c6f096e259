"""Exception types raised by the solvers and experiment runners."""


class HJLabError(Exception):
    pass


class PecletViolation(HJLabError):
    """Viscosity too small for the mesh: the transposed step loses nonnegativity."""


class CflViolation(HJLabError):
    pass


class MonotonicityViolation(HJLabError):
    """Lax-Friedrichs dissipation below the measured characteristic speed."""


class MissingStates(HJLabError):
    pass


class StepRejected(HJLabError):
    pass


class NotConverged(HJLabError):
    pass


class InsufficientSpread(HJLabError):
    """Parameter ladder spans less than one decade."""


class ConfigError(HJLabError):
    pass
