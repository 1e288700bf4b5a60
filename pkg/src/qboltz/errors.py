"""Exception hierarchy shared by all solver modules."""


class QBoltzError(Exception):
    """Base class for everything raised deliberately by this package."""


class ConfigError(QBoltzError):
    """Invalid or inconsistent configuration input."""


class DomainError(QBoltzError, ValueError):
    """Argument outside the mathematically valid range (e.g. fugacity)."""


class NumericalError(QBoltzError):
    """Base class for runtime numerical failures."""


class ConvergenceError(NumericalError):
    """An iterative method failed to reach its tolerance."""


class NoSolutionError(NumericalError):
    """The (density, energy) pair has no equilibrium parameters.

    For a Bose gas this signals proximity to the condensation regime,
    for a Fermi gas the fully degenerate bound.
    """

    def __init__(self, msg, cell=None):
        super().__init__(msg if cell is None else f"{msg} (cell {cell})")
        self.cell = cell


class NonPositiveDensityError(NumericalError):
    """Velocity moments produced rho <= 0 or e <= 0."""


class SingularDenominatorError(NumericalError):
    """Equilibrium time-derivative coefficients are singular here."""


class PositivityLossError(NumericalError):
    """A fluid-solver cell lost positivity of density or internal energy."""


class VacuumError(NumericalError):
    """The Riemann problem generates a vacuum region."""


class GridMismatchError(QBoltzError, ValueError):
    """Field shape does not match the grid it is paired with."""


class MemoryBudgetError(QBoltzError):
    """A precomputed table would exceed the configured memory cap."""


class AllNodesExcludedError(NumericalError):
    """No velocity node satisfied the pointwise validity requirements."""
