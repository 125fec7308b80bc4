"""Exception types.

Input problems derive from :class:`ValidationError` (also a ``ValueError``);
problems reading or parsing files derive from :class:`ContainerError`
(also an ``OSError``). The CLI maps the two families to exit codes 1 and 2.
"""


class AtaError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AtaError, ValueError):
    pass


class ZeroNormVector(ValidationError):
    pass


class EmptyVector(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyBatch(ValidationError):
    pass


class MissingClass(ValidationError):
    pass


class MissingSupportLabel(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class SinkhornNotConverged(AtaError):
    """Sinkhorn stopped at the iteration cap before reaching the tolerance.

    The partial result is attached so callers can still use it.
    """

    def __init__(self, residual, plan=None, score=None, n_iter=None):
        super().__init__(
            f"Sinkhorn did not converge: marginal error {residual:.3e} after {n_iter} iterations"
        )
        self.residual = residual
        self.plan = plan
        self.score = score
        self.n_iter = n_iter


class ContainerError(AtaError, OSError):
    pass


class BadMagic(ContainerError):
    pass


class DimMismatch(ContainerError):
    pass


class CorruptRecord(ContainerError):
    def __init__(self, index, reason):
        super().__init__(f"corrupt record {index}: {reason}")
        self.index = index
        self.reason = reason
