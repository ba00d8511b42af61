"""Exception types shared across the package."""

from __future__ import annotations


class ContractError(ValueError):
    """An argument violates an operation's precondition."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (non-SPD matrix, non-finite value, no convergence).

    Extra diagnostic fields are kept on ``details`` so callers such as the
    Monte Carlo harness can record them without parsing the message.
    """

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details
