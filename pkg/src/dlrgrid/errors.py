"""Exception types shared across the package."""


class DlrGridError(Exception):
    """Base class for all package errors."""


# -- network construction -------------------------------------------------

class SelfLoop(DlrGridError):
    pass


class UnknownBus(DlrGridError):
    pass


class DisconnectedNetwork(DlrGridError):
    pass


# -- autodiff --------------------------------------------------------------

class ShapeMismatch(DlrGridError):
    def __init__(self, op, shape_a, shape_b):
        super().__init__(f"{op}: incompatible shapes {shape_a} and {shape_b}")
        self.shapes = (shape_a, shape_b)


class NonScalarLoss(DlrGridError):
    pass


class NonFiniteGradient(DlrGridError):
    pass


# -- data / forecasting ----------------------------------------------------

class MissingData(DlrGridError):
    pass


class LevelOutOfRange(DlrGridError):
    pass


# -- metrics ----------------------------------------------------------------

class ZeroNormalizer(DlrGridError):
    pass


class EmptyCosts(DlrGridError):
    pass


# -- thermal -----------------------------------------------------------------

class NoCoolingMargin(DlrGridError):
    pass


# -- optimization -------------------------------------------------------------

class Infeasible(DlrGridError):
    pass


class IterationLimit(DlrGridError):
    pass


# -- pipeline -------------------------------------------------------------------

class MissingArtifact(DlrGridError):
    pass
