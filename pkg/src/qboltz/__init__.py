"""qboltz: kinetic solver for quantum (Bose/Fermi) gases.

Solves the spatially one-dimensional kinetic equation for a quantum gas on
a two-dimensional velocity grid, with an exponential Runge-Kutta time
integration that stays accurate and stable uniformly in the Knudsen number,
and a reference compressible-Euler solver for the fluid limit.
"""

__version__ = "0.1.0"

from .errors import (
    AllNodesExcludedError,
    ConfigError,
    ConvergenceError,
    DomainError,
    GridMismatchError,
    MemoryBudgetError,
    NoSolutionError,
    NonPositiveDensityError,
    NumericalError,
    PositivityLossError,
    QBoltzError,
    SingularDenominatorError,
    VacuumError,
)
from .statistics import (
    EquilibriumParams,
    GasKind,
    GasStatistics,
    eval_mn,
    eval_q_nu,
    eval_q_nu_derivative,
    fugacity_from_density,
    invert_moments,
    invert_moments_field,
    moments_from_equilibrium,
)
from .phase_space import (
    BoundaryCondition,
    ButcherTableau,
    DistributionField,
    MacroState,
    SpatialGrid,
    VelocityGrid,
)
from .collision import CollisionKernelConfig, CollisionWorkspace, build_workspace
from .transport import TransportScheme
from .integrator import (
    FORWARD_EULER,
    HEUN_RK3,
    MIDPOINT_RK2,
    MuRule,
    SolverConfig,
    Trajectory,
    run_simulation,
)
