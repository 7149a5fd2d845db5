"""Exception types raised across the package.

Everything derives from QCRegError so callers can catch library failures
as one family; the CLI maps QCRegError to a nonzero exit code.
"""


class QCRegError(Exception):
    """Base class for all library errors."""


class InvalidDimensionError(QCRegError):
    """A size, count, or index parameter is out of its valid range."""


class DegenerateMeshError(QCRegError):
    """A mesh face has non-positive or near-zero area."""


class FieldShapeError(QCRegError):
    """An array argument does not match the mesh or image it belongs to."""


class SingularFaceError(QCRegError):
    """Derivative denominator vanished on a face; the map is singular there."""

    def __init__(self, face_index, message=None):
        self.face_index = int(face_index)
        super().__init__(message or f"singular map derivative on face {face_index}")


class NonQuasiconformalError(QCRegError):
    """A Beltrami coefficient has modulus >= 1 where it must not."""


class NearSingularError(QCRegError):
    """A Beltrami coefficient is too close to modulus 1 for stable coefficients."""

    def __init__(self, face_index, message=None):
        self.face_index = int(face_index)
        super().__init__(message or f"|mu| too close to 1 on face {face_index}")


class SolverFailureError(QCRegError):
    """A sparse linear solve failed or returned a non-finite solution."""


class PartitionError(QCRegError):
    """An image cannot be partitioned into the requested patch grid."""


class ZeroVectorError(QCRegError):
    """A feature vector has zero norm and cannot be cosine-normalized."""

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"feature vector {index} has zero norm")


class StageError(QCRegError):
    """A correlation-pipeline op was applied at the wrong stage."""


class DegeneratePerturbationError(QCRegError):
    """A map perturbation makes a face derivative vanish."""

    def __init__(self, face_index, message=None):
        self.face_index = int(face_index)
        super().__init__(message or f"perturbed map derivative vanishes on face {face_index}")


class DegenerateImageError(QCRegError):
    """An image sum needed as a denominator is zero."""

    def __init__(self, which, message=None):
        self.which = str(which)
        super().__init__(message or f"degenerate image: {which} is zero")


class FormatError(QCRegError):
    """A file does not conform to its declared format."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class UsageError(QCRegError):
    """Invalid command-line invocation."""
