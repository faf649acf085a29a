"""Exception types shared across the package."""


class PoleError(ValueError):
    """A gamma-type function was evaluated at (or a contour passes through) a pole."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ConvergenceError(ArithmeticError):
    """A series, quadrature or iteration failed to converge within its cap."""


class InfeasibleError(ValueError):
    """An optimisation problem has an empty feasible set."""
