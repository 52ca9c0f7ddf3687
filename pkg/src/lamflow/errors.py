"""Exception hierarchy shared by all lamflow modules."""


class LamflowError(Exception):
    """Base class for every error raised by this package."""


class MeshError(LamflowError):
    """Invalid mesh topology or geometry."""


class NonManifold(MeshError):
    pass


class OrientationMismatch(MeshError):
    pass


class TriangleInequalityViolation(MeshError):
    def __init__(self, face, lengths=None):
        self.face = int(face)
        self.lengths = None if lengths is None else tuple(float(x) for x in lengths)
        msg = f"face {self.face} violates the strict triangle inequality"
        if self.lengths is not None:
            msg += f" (lengths {self.lengths})"
        super().__init__(msg)

    def __reduce__(self):
        return (type(self), (self.face, self.lengths), self.__dict__)


class NoConvergence(LamflowError):
    def __init__(self, msg, residual=None, worst_vertex=None):
        self.residual = residual
        self.worst_vertex = worst_vertex
        super().__init__(msg)

    def __reduce__(self):
        return (type(self), (self.args[0], self.residual, self.worst_vertex), self.__dict__)


class NonHyperbolic(LamflowError):
    pass


class StepFloorHit(LamflowError):
    def __init__(self, msg, face=None, t=None):
        self.face = face
        self.t = t
        super().__init__(msg)

    def __reduce__(self):
        return (type(self), (self.args[0], self.face, self.t), self.__dict__)


class NonNegativeR(LamflowError):
    pass


class InsufficientHistory(LamflowError):
    pass


class MissingHistory(InsufficientHistory):
    pass


class DomainError(LamflowError):
    pass


class InvalidGenerator(LamflowError):
    pass


class FamilyRangeError(LamflowError):
    pass


class NotConverged(LamflowError):
    pass


class ConfigError(LamflowError):
    pass
