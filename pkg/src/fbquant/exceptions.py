class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class UnsupportedModelError(ValueError):
    """Channel model parameters for which a quantity is undefined."""


class OutageTargetError(ValueError):
    """Codebook whose first level does not realise the outage probability."""


class InfeasibleCodebookError(ValueError):
    """Direction codebook whose cap opening leaves no usable beamforming gain."""


class NoTransmission(RuntimeError):
    """Raised when a beamformer is requested for a channel in outage."""


class ConvergenceWarning(UserWarning):
    pass
