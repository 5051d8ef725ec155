"""Exception types shared across the package."""


class NumericalFailure(RuntimeError):
    """A numerical procedure failed (singular boundary matrix, shooting
    divergence, state overflow, ...).  Configuration and input validation
    problems raise ValueError instead."""
