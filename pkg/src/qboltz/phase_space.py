"""Grids, distribution storage, moments, and equilibrium construction.

The solver state is a distribution f(x, v) sampled on a tensor product of a
uniform 1D spatial grid and a uniform cell-centered 2D velocity grid.  All
velocity integrals are midpoint-rule sums, which for smooth rapidly decaying
integrands on a symmetric grid are spectrally accurate up to the tail
truncation of the box.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, GridMismatchError, NonPositiveDensityError
from .statistics import (
    EquilibriumParams,
    GasKind,
    GasStatistics,
    eval_mn,
    invert_moments_field,
)

__all__ = [
    "VelocityGrid",
    "BoundaryCondition",
    "SpatialGrid",
    "DistributionField",
    "MacroState",
    "ButcherTableau",
    "moments",
    "moments_field",
    "moments_full",
    "conserved_moments",
    "primitives_from_conserved",
    "quantum_maxwellian",
    "classical_maxwellian",
    "maxwellian_field",
    "equilibrium_from_f",
    "equilibrium_field_from_f",
    "dt_maxwellian",
    "dt_maxwellian_field",
    "save_distribution",
    "load_distribution",
]


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cell-centered velocity grid on [-L, L)^2.

    Nodes sit at -L + (j + 1/2) dv so the node set is symmetric under
    v -> -v and no node lies on the box boundary.
    """

    n_per_dim: int
    half_width: float
    d: int = 2

    def __post_init__(self):
        if self.n_per_dim < 4:
            raise DomainError("need at least 4 velocity points per direction")
        if self.half_width <= 0:
            raise DomainError("velocity half-width must be positive")
        if self.d != 2:
            raise DomainError("only d = 2 velocity grids are supported")

    @classmethod
    def for_temperature(cls, t_max: float, n_per_dim: int = 32) -> "VelocityGrid":
        """Default box sizing: tails of a T <= t_max Maxwellian below ~1e-14."""
        return cls(n_per_dim, 8.0 * max(1.0, np.sqrt(t_max)))

    @property
    def dv(self) -> float:
        return 2.0 * self.half_width / self.n_per_dim

    @property
    def size(self) -> int:
        return self.n_per_dim ** self.d

    @property
    def weight(self) -> float:
        """Quadrature weight of one node (midpoint rule)."""
        return self.dv ** self.d

    @property
    def coords(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.n_per_dim) + 0.5) * self.dv

    @property
    def vx(self) -> np.ndarray:
        """x-velocity of every node, flattened row-major (x index outer)."""
        return np.repeat(self.coords, self.n_per_dim)

    @property
    def vy(self) -> np.ndarray:
        return np.tile(self.coords, self.n_per_dim)

    @property
    def vsq(self) -> np.ndarray:
        return self.vx ** 2 + self.vy ** 2

    def invariants_matrix(self) -> np.ndarray:
        """Rows (1, vx, vy, |v|^2/2) on the nodes: the collision invariants."""
        return np.stack([np.ones(self.size), self.vx, self.vy, 0.5 * self.vsq])


class BoundaryCondition(Enum):
    PERIODIC = "periodic"
    OUTFLOW = "outflow"


@dataclass(frozen=True)
class SpatialGrid:
    n_x: int
    x_lo: float = 0.0
    x_hi: float = 1.0
    bc: BoundaryCondition = BoundaryCondition.PERIODIC

    def __post_init__(self):
        if self.n_x < 4:
            raise DomainError("need at least 4 spatial cells")
        if self.x_hi <= self.x_lo:
            raise DomainError("empty spatial domain")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_x

    @property
    def centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.n_x) + 0.5) * self.dx


@dataclass
class DistributionField:
    """f(x, v) as an (n_x, n_nodes) array plus the grids it lives on."""

    values: np.ndarray
    sgrid: SpatialGrid
    vgrid: VelocityGrid

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != (self.sgrid.n_x, self.vgrid.size):
            raise GridMismatchError(
                f"field shape {self.values.shape} does not match grids "
                f"({self.sgrid.n_x}, {self.vgrid.size})")

    def copy(self) -> "DistributionField":
        return DistributionField(self.values.copy(), self.sgrid, self.vgrid)


@dataclass
class MacroState:
    """Per-cell macroscopic state: moments plus equilibrium parameters.

    Every component is either a scalar (single cell) or an array over cells;
    u carries the two velocity components in its trailing axis.
    """

    rho: np.ndarray
    u: np.ndarray
    e: np.ndarray
    z: np.ndarray
    T: np.ndarray


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients of an explicit Runge-Kutta method."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    name: str = ""

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        k = b.size
        if a.shape != (k, k) or c.shape != (k,):
            raise DomainError("inconsistent tableau dimensions")
        if np.any(np.abs(np.triu(a)) > 0):
            raise DomainError("tableau must be strictly lower triangular (explicit)")
        if not np.allclose(a.sum(axis=1), c, atol=1e-14):
            raise DomainError("row sums of A must equal the abscissae c")
        if abs(b.sum() - 1.0) > 1e-14:
            raise DomainError("weights b must sum to 1")
        if c[0] < 0 or c[-1] > 1 or np.any(np.diff(c) <= 0):
            raise DomainError(
                "abscissae must satisfy 0 <= c_1 < ... < c_k <= 1; equal "
                "abscissae are outside the supported stiff-limit analysis")

    @property
    def stages(self) -> int:
        return self.b.size


def _check_slice(f_cell: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    f_cell = np.asarray(f_cell, dtype=float)
    if f_cell.shape != (grid.size,):
        raise GridMismatchError(
            f"velocity slice length {f_cell.shape} does not match grid ({grid.size},)")
    return f_cell


def conserved_moments(values: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Conserved vector (rho, rho ux, rho uy, E) per cell; E = int |v|^2/2 f."""
    values = np.atleast_2d(values)
    w = grid.weight
    m0 = values.sum(axis=1) * w
    m1x = values @ grid.vx * w
    m1y = values @ grid.vy * w
    m2 = 0.5 * (values @ grid.vsq) * w
    return np.stack([m0, m1x, m1y, m2], axis=1)


def primitives_from_conserved(U: np.ndarray):
    """(rho, u, e) from the conserved vector, guarding positivity."""
    U = np.atleast_2d(U)
    rho = U[:, 0]
    if np.any(rho <= 0):
        bad = int(np.argmax(rho <= 0))
        raise NonPositiveDensityError(f"rho <= 0 in cell {bad}: {rho[bad]}")
    u = U[:, 1:3] / rho[:, None]
    e = U[:, 3] / rho - 0.5 * (u ** 2).sum(axis=1)
    if np.any(e <= 0):
        bad = int(np.argmax(e <= 0))
        raise NonPositiveDensityError(f"e <= 0 in cell {bad}: {e[bad]}")
    return rho, u, e


def moments(f_cell: np.ndarray, grid: VelocityGrid):
    """Midpoint-rule (rho, u, e) of one velocity slice."""
    f_cell = _check_slice(f_cell, grid)
    rho, u, e = primitives_from_conserved(conserved_moments(f_cell, grid))
    return float(rho[0]), u[0], float(e[0])


def moments_field(values: np.ndarray, grid: VelocityGrid):
    rho, u, e = primitives_from_conserved(conserved_moments(values, grid))
    return rho, u, e


def moments_full(f_cell: np.ndarray, grid: VelocityGrid):
    """(rho, u, e) plus stress tensor and heat flux of one slice."""
    f_cell = _check_slice(f_cell, grid)
    rho, u, e = moments(f_cell, grid)
    w = grid.weight
    cx = grid.vx - u[0]
    cy = grid.vy - u[1]
    P = np.empty((2, 2))
    P[0, 0] = (cx * cx) @ f_cell * w
    P[0, 1] = P[1, 0] = (cx * cy) @ f_cell * w
    P[1, 1] = (cy * cy) @ f_cell * w
    csq = cx ** 2 + cy ** 2
    q = np.array([0.5 * ((cx * csq) @ f_cell) * w,
                  0.5 * ((cy * csq) @ f_cell) * w])
    return rho, u, e, P, q


def quantum_maxwellian(params: EquilibriumParams, u, stat: GasStatistics,
                       grid: VelocityGrid) -> np.ndarray:
    """Bose-Einstein / Fermi-Dirac equilibrium slice for (z, T, u).

    Evaluated as w/(1 -+ w) with w = z exp(-|v-u|^2/(2T)), which never
    overflows and underflows cleanly to zero in the far tails.
    """
    params.validate(stat)
    u = np.asarray(u, dtype=float)
    ex = np.exp(-((grid.vx - u[0]) ** 2 + (grid.vy - u[1]) ** 2) / (2.0 * params.T))
    w = params.z * ex
    return w / (1.0 - stat.sign * w) / stat.theta0


def classical_maxwellian(rho: float, u, T: float, grid: VelocityGrid) -> np.ndarray:
    if rho <= 0 or T <= 0:
        raise DomainError("classical Maxwellian needs rho > 0 and T > 0")
    u = np.asarray(u, dtype=float)
    csq = (grid.vx - u[0]) ** 2 + (grid.vy - u[1]) ** 2
    return rho / (2.0 * np.pi * T) * np.exp(-csq / (2.0 * T))


def maxwellian_field(z, T, u, stat: GasStatistics, grid: VelocityGrid) -> np.ndarray:
    """Vectorized equilibrium slices for per-cell (z, T, u) arrays."""
    z = np.atleast_1d(np.asarray(z, dtype=float))[:, None]
    T = np.atleast_1d(np.asarray(T, dtype=float))[:, None]
    u = np.atleast_2d(np.asarray(u, dtype=float))
    csq = (grid.vx[None, :] - u[:, 0:1]) ** 2 + (grid.vy[None, :] - u[:, 1:2]) ** 2
    w = z * np.exp(-csq / (2.0 * T))
    return w / (1.0 - stat.sign * w) / stat.theta0


def equilibrium_from_f(f_cell: np.ndarray, stat: GasStatistics, grid: VelocityGrid):
    """Moments of f, inversion to (z, T), and the matching equilibrium slice."""
    f_cell = _check_slice(f_cell, grid)
    rho, u, e = moments(f_cell, grid)
    z, T = invert_moments_field(rho, e, stat)
    state = MacroState(rho=rho, u=u, e=e, z=float(z[0]), T=float(T[0]))
    m_q = quantum_maxwellian(EquilibriumParams(state.z, state.T), u, stat, grid)
    return state, m_q


def equilibrium_field_from_f(values: np.ndarray, stat: GasStatistics,
                             grid: VelocityGrid):
    """Field version of equilibrium_from_f: one inversion per spatial cell."""
    rho, u, e = moments_field(values, grid)
    z, T = invert_moments_field(rho, e, stat)
    state = MacroState(rho=rho, u=u, e=e, z=z, T=T)
    return state, maxwellian_field(z, T, u, stat, grid)


def _dt_factor(stat: GasStatistics, grid: VelocityGrid,
               drho_dt, du_dt, de_dt, z, T, rho, e, u):
    m, n = eval_mn(z, T, e, stat)
    d = float(stat.d)
    cx = grid.vx[None, :] - np.atleast_2d(u)[:, 0:1]
    cy = grid.vy[None, :] - np.atleast_2d(u)[:, 1:2]
    csq = cx ** 2 + cy ** 2
    col = lambda a: np.atleast_1d(np.asarray(a, dtype=float))[:, None]
    A = (m[..., None] + csq / (d * col(T)) * (1.0 - n[..., None])) / col(rho)
    B = csq / (2.0 * col(e) * col(T)) * n[..., None] - (d / (2.0 * col(e))) * m[..., None]
    du = np.atleast_2d(np.asarray(du_dt, dtype=float))
    C_dot = (cx * du[:, 0:1] + cy * du[:, 1:2]) / col(T)
    return A * col(drho_dt) + B * col(de_dt) + C_dot


def dt_maxwellian(state: MacroState, drho_dt: float, du_dt, de_dt: float,
                  stat: GasStatistics, grid: VelocityGrid) -> np.ndarray:
    """Time derivative of the equilibrium slice, closed in (drho, du, de)."""
    m_q = quantum_maxwellian(EquilibriumParams(float(state.z), float(state.T)),
                             state.u, stat, grid)
    bracket = _dt_factor(stat, grid, drho_dt, du_dt, de_dt,
                         np.atleast_1d(state.z), np.atleast_1d(state.T),
                         np.atleast_1d(state.rho), np.atleast_1d(state.e), state.u)
    return (m_q * (1.0 + stat.sign * stat.theta0 * m_q) * bracket[0])


def dt_maxwellian_field(state: MacroState, m_q: np.ndarray, drho_dt, du_dt, de_dt,
                        stat: GasStatistics, grid: VelocityGrid) -> np.ndarray:
    """Vectorized dt_maxwellian over cells, reusing the equilibrium slices."""
    bracket = _dt_factor(stat, grid, drho_dt, du_dt, de_dt,
                         state.z, state.T, state.rho, state.e, state.u)
    return m_q * (1.0 + stat.sign * stat.theta0 * m_q) * bracket


def discrete_equilibrium_field(targets: np.ndarray, stat: GasStatistics,
                               grid: VelocityGrid, rtol: float = 1e-12,
                               max_iter: int = 40):
    """Equilibrium slices whose *discrete* moments match the targets.

    targets is the conserved vector (rho, rho ux, rho uy, E) per cell.  The
    continuum inversion leaves a quadrature-truncation mismatch between the
    prescribed moments and the grid sums of the constructed slice (largest
    for cold, under-resolved cores); a Newton iteration on (z, T, u) closes
    that gap to roundoff, which is what makes equilibria exact fixed points
    of the solver.  Steps are accepted only when they reduce the residual
    (backtracking line search: on marginally resolved cores the discrete
    moments are not monotone in T and raw Newton can run away).  Cells
    where the iteration stalls fall back to the continuum-inverted slice
    corrected by an exact moment projection.  Returns (MacroState, slices).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    rho_t, u_t, e_t = primitives_from_conserved(targets)
    z0, T0 = invert_moments_field(rho_t, e_t, stat)
    z, T = z0.copy(), T0.copy()
    u = u_t.copy()
    w = grid.weight
    psi = np.stack([np.ones(grid.size), grid.vx, grid.vy, 0.5 * grid.vsq])
    scale = np.abs(targets).sum(axis=1)

    def residual(zc, Tc, uc):
        m = maxwellian_field(zc, Tc, uc, stat, grid)
        r = (m * w) @ psi.T - targets
        return m, r, np.abs(r).max(axis=1)

    m_q, res, err = residual(z, T, u)
    for _ in range(max_iter):
        if np.all(err <= rtol * scale):
            break
        cx = grid.vx[None, :] - u[:, 0:1]
        cy = grid.vy[None, :] - u[:, 1:2]
        csq = cx ** 2 + cy ** 2
        g = m_q * (1.0 + stat.sign * stat.theta0 * m_q)
        # columns: dM/dln z, dM/dT, dM/dux, dM/duy
        dcols = (g, g * csq / (2.0 * T[:, None] ** 2),
                 g * cx / T[:, None], g * cy / T[:, None])
        jac = np.empty((targets.shape[0], 4, 4))
        for c, dc in enumerate(dcols):
            jac[:, :, c] = (dc * w) @ psi.T
        bad = ~np.isfinite(jac).all(axis=(1, 2)) | (np.abs(np.linalg.det(jac)) < 1e-300)
        if np.any(bad):
            jac[bad] = np.eye(4)
        step = np.linalg.solve(jac, res[:, :, None])[:, :, 0]
        step[bad] = 0.0

        alpha = np.where(err > rtol * scale, 1.0, 0.0)
        best = (z, T, u, m_q, res, err)
        for _ in range(10):
            zc = np.clip(z * np.exp(np.clip(-alpha * step[:, 0], -1.0, 1.0)),
                         1e-300, stat.z_max)
            Tc = T * np.clip(1.0 - alpha * step[:, 1] / T, 0.5, 2.0)
            uc = u - alpha[:, None] * step[:, 2:4]
            m_c, r_c, e_c = residual(zc, Tc, uc)
            improved = e_c < best[5]
            if np.any(improved):
                zb, Tb, ub, mb, rb, eb = best
                best = (np.where(improved, zc, zb),
                        np.where(improved, Tc, Tb),
                        np.where(improved[:, None], uc, ub),
                        np.where(improved[:, None], m_c, mb),
                        np.where(improved[:, None], r_c, rb),
                        np.where(improved, e_c, eb))
            still = (e_c >= best[5]) & (alpha > 0)
            if not np.any(still):
                break
            alpha = np.where(still, 0.5 * alpha, alpha)
        if np.all(best[5] >= err):
            break   # stalled everywhere that still matters
        z, T, u, m_q, res, err = best

    miss = err > rtol * scale
    if np.any(miss):
        # projection fallback: exact moments, near-equilibrium shape
        idx = np.where(miss)[0]
        from .collision import project_to_moments  # local: avoids module cycle

        m_q = m_q.copy()
        m_q[idx] = project_to_moments(m_q[idx], targets[idx], grid)
        z = np.where(miss, z0, z)
        T = np.where(miss, T0, T)
    state = MacroState(rho=rho_t, u=u_t, e=e_t, z=z, T=T)
    return state, m_q


# --- snapshot serialization ---------------------------------------------
#
# CSV layout: one header line
#     n_x,n_per_dim,L,x_lo,x_hi,theta0,kind
# followed by n_x rows of n_per_dim^2 comma-separated f values, row-major in
# the node index (x-velocity index outer, y inner), 17 significant digits.

def save_distribution(path, f: DistributionField, stat: GasStatistics) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{f.sgrid.n_x},{f.vgrid.n_per_dim},{f.vgrid.half_width!r},"
                 f"{f.sgrid.x_lo!r},{f.sgrid.x_hi!r},{stat.theta0!r},"
                 f"{stat.kind.value}\n")
        np.savetxt(fh, f.values, fmt="%.17g", delimiter=",")


def load_distribution(path, bc: BoundaryCondition = BoundaryCondition.PERIODIC):
    with open(path, encoding="ascii") as fh:
        head = fh.readline().strip().split(",")
        n_x, n_per_dim = int(head[0]), int(head[1])
        L, x_lo, x_hi, theta0 = map(float, head[2:6])
        kind = GasKind(head[6])
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    sgrid = SpatialGrid(n_x, x_lo, x_hi, bc)
    vgrid = VelocityGrid(n_per_dim, L)
    return DistributionField(values, sgrid, vgrid), GasStatistics(kind, theta0)
