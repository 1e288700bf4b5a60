"""Direct quadrature of the quantum collision operator.

The operator is evaluated on the velocity grid by summing over partner
nodes and a uniform angular rule on the unit circle, with post-collision
values obtained by bilinear interpolation; discrete conservation of mass,
momentum and energy is then enforced exactly by projection onto the
collision invariants.  Setting theta0 -> 0 recovers the classical operator
through the same code path.

Complexity is O(nodes^2 * n_sigma) per spatial cell; the compiled kernel
cuts the constant with the pair and angle symmetries plus tail screening
(see _collision_kernels).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _collision_kernels as _ck
from .errors import AllNodesExcludedError, DomainError, MemoryBudgetError
from .phase_space import VelocityGrid
from .statistics import GasStatistics

__all__ = [
    "CollisionKernelConfig",
    "CollisionWorkspace",
    "build_workspace",
    "collide_direct",
    "collide_field",
    "conserve_project",
    "project_to_moments",
    "entropy_production",
]

log = logging.getLogger(__name__)

_N_SHELLS = 64


@dataclass(frozen=True)
class CollisionKernelConfig:
    """Collision kernel B = c_gamma |v - v_*|^gamma and angular resolution.

    gamma = 0 (Maxwell molecules) is the validated configuration; other
    exponents run through the same quadrature but are untested physics.
    The default constant normalizes the total cross section to one.
    """

    gamma: float = 0.0
    c_gamma: float = 1.0 / (2.0 * np.pi)
    n_sigma: int = 16
    screen_rel: float = 1e-17
    memory_budget_bytes: int = 2 << 30

    def __post_init__(self):
        if self.n_sigma < 4 or self.n_sigma % 2:
            raise DomainError("n_sigma must be even and at least 4")
        if self.c_gamma <= 0:
            raise DomainError("kernel constant must be positive")
        if self.screen_rel < 0:
            raise DomainError("screening threshold must be >= 0")


@dataclass
class CollisionWorkspace:
    """Precomputed geometry shared by every collision evaluation on a grid.

    Holds the pair radii |v_j - v_k|/2, the angular nodes, and the radial
    shell partition used by the tail screening.  Read-only after
    construction; safe to share across threads.
    """

    grid: VelocityGrid
    kernel: CollisionKernelConfig
    r_pair: np.ndarray
    cos_half: np.ndarray
    sin_half: np.ndarray
    sigma: np.ndarray          # full angle table (n_sigma, 2), for inspection
    shell_of: np.ndarray
    shell_dilate: np.ndarray
    inv_de: float
    pref: float

    def stencil(self, j: int, k: int, m: int):
        """Interpolation footprint of the post-collision pair (v', v_*').

        Returns (points, bases, weights, valid): two 2-vectors, two flat
        base node ids, two length-4 weight rows (corner order 00,01,10,11),
        and the validity flag (False when either point leaves the node hull,
        in which case the triple contributes zero).
        """
        g = self.grid
        cx = 0.5 * (g.vx[j] + g.vx[k])
        cy = 0.5 * (g.vy[j] + g.vy[k])
        r = self.r_pair[j, k]
        out_pts = np.empty((2, 2))
        bases = np.empty(2, dtype=np.int64)
        weights = np.zeros((2, 4))
        valid = True
        inv_dv = 1.0 / g.dv
        bgx = (cx + g.half_width) * inv_dv - 0.5
        bgy = (cy + g.half_width) * inv_dv - 0.5
        rho = r * inv_dv
        for s, sgn in enumerate((1.0, -1.0)):
            px = cx + sgn * r * self.sigma[m, 0]
            py = cy + sgn * r * self.sigma[m, 1]
            out_pts[s] = (px, py)
            gx = bgx + sgn * rho * self.sigma[m, 0]
            gy = bgy + sgn * rho * self.sigma[m, 1]
            if not (0.0 <= gx <= g.n_per_dim - 1 and 0.0 <= gy <= g.n_per_dim - 1):
                valid = False
                bases[s] = -1
                continue
            ix = min(int(gx), g.n_per_dim - 2)
            iy = min(int(gy), g.n_per_dim - 2)
            wx, wy = gx - ix, gy - iy
            bases[s] = ix * g.n_per_dim + iy
            weights[s] = ((1 - wx) * (1 - wy), (1 - wx) * wy,
                          wx * (1 - wy), wx * wy)
        return out_pts, bases, weights, valid


def build_workspace(grid: VelocityGrid,
                    kernel: CollisionKernelConfig | None = None) -> CollisionWorkspace:
    """Precompute pair geometry and screening tables for a velocity grid."""
    kernel = kernel or CollisionKernelConfig()
    n_nodes = grid.size
    need = 8 * n_nodes * n_nodes
    if need > kernel.memory_budget_bytes:
        raise MemoryBudgetError(
            f"pair-radius table needs {need} bytes, over the configured "
            f"budget {kernel.memory_budget_bytes}")
    vx, vy = grid.vx, grid.vy
    r_pair = 0.5 * np.hypot(vx[:, None] - vx[None, :], vy[:, None] - vy[None, :])
    half = kernel.n_sigma // 2
    phi = 2.0 * np.pi * np.arange(half) / kernel.n_sigma
    sig_half = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    # snap multiples of a quarter turn to exact values (the compiled kernel
    # takes a cheaper unrolled path for the axis-aligned two-angle rule)
    for m in range(half):
        if (4 * m) % kernel.n_sigma == 0:
            quarter = (4 * m) // kernel.n_sigma
            sig_half[m] = [(1.0, 0.0), (0.0, 1.0)][quarter % 2]
    # second half by exact negation, so sigma(m + n/2) == -sigma(m) holds
    # bitwise (evaluating cos(phi + pi) instead would break the pairing of
    # boundary-grazing post-collision points)
    sigma = np.concatenate([sig_half, -sig_half], axis=0)

    vsq = grid.vsq
    de = vsq.max() / _N_SHELLS * (1.0 + 1e-12)
    shell_of = np.minimum((vsq / de).astype(np.int64), _N_SHELLS - 1)
    # energy slack of a bilinearly interpolated point: its footprint nodes
    # sit within dv per axis, i.e. within (sqrt(E) + sqrt(2) dv)^2 - E
    e_hi = (np.arange(_N_SHELLS) + 1.0) * de
    slack = 2.0 * np.sqrt(2.0 * e_hi) * grid.dv + 2.0 * grid.dv ** 2
    shell_dilate = np.ceil(slack / de).astype(np.int64)

    # angular weight 2 pi / n_sigma, doubled by the sigma -> -sigma fold
    pref = (2.0 * np.pi / kernel.n_sigma) * 2.0 * kernel.c_gamma * grid.weight
    return CollisionWorkspace(
        grid=grid, kernel=kernel, r_pair=r_pair,
        cos_half=np.ascontiguousarray(sigma[:half, 0]),
        sin_half=np.ascontiguousarray(sigma[:half, 1]),
        sigma=sigma, shell_of=shell_of, shell_dilate=shell_dilate,
        inv_de=1.0 / de, pref=pref)


def _kernel_args(ws: CollisionWorkspace, stat: GasStatistics):
    g = ws.grid
    return (g.vx, g.vy, g.vsq, ws.r_pair, ws.cos_half, ws.sin_half,
            stat.theta0, stat.sign, g.n_per_dim, g.half_width, 1.0 / g.dv,
            ws.pref, ws.kernel.gamma, ws.shell_of, ws.shell_dilate,
            _N_SHELLS, ws.inv_de, ws.kernel.screen_rel)


def collide_direct(f_cell: np.ndarray, stat: GasStatistics, grid: VelocityGrid,
                   ws: CollisionWorkspace, project: bool = True) -> np.ndarray:
    """Collision operator of one velocity slice, conservation-projected."""
    f_cell = np.ascontiguousarray(f_cell, dtype=float)
    if f_cell.shape != (grid.size,):
        raise DomainError(f"slice shape {f_cell.shape} vs grid {grid.size}")
    if ws.grid != grid:
        raise DomainError("workspace was built for a different grid")
    if not np.all(np.isfinite(f_cell)):
        raise DomainError("collision input contains non-finite values")
    Q = np.zeros_like(f_cell)
    _ck.collide_cell(f_cell, *_kernel_args(ws, stat), Q)
    return conserve_project(Q, grid) if project else Q


def collide_field(values: np.ndarray, stat: GasStatistics, grid: VelocityGrid,
                  ws: CollisionWorkspace, project: bool = True) -> np.ndarray:
    """Collision operator of every spatial cell, parallel over cells."""
    values = np.ascontiguousarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DomainError("collision input contains non-finite values")
    Q = np.zeros_like(values)
    _ck.collide_field(values, *_kernel_args(ws, stat), Q)
    return conserve_project(Q, grid) if project else Q


def project_to_moments(values: np.ndarray, targets: np.ndarray,
                       grid: VelocityGrid) -> np.ndarray:
    """Smallest L2 correction giving the slices the prescribed moments.

    targets holds (mass, momentum_x, momentum_y, energy) per cell in the
    same convention as conserved_moments.  On the symmetric node set the
    4x4 Gram matrix of the invariants is block diagonal, so the solve is
    written out explicitly; this keeps the result bitwise independent of
    how many cells are processed per call.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    psi = grid.invariants_matrix()
    w = grid.weight
    current = (values * w) @ psi.T
    m = current - targets

    g00 = grid.size * w
    g11 = float(grid.vx @ grid.vx) * w
    g22 = float(grid.vy @ grid.vy) * w
    g03 = float(0.5 * grid.vsq.sum()) * w
    g33 = float(0.25 * (grid.vsq @ grid.vsq)) * w
    det = g00 * g33 - g03 * g03
    assert det > 0.0, "degenerate invariant Gram matrix"

    lam = np.empty_like(m)
    lam[:, 0] = (m[:, 0] * g33 - m[:, 3] * g03) / det
    lam[:, 1] = m[:, 1] / g11
    lam[:, 2] = m[:, 2] / g22
    lam[:, 3] = (g00 * m[:, 3] - g03 * m[:, 0]) / det
    return values - lam @ psi


def conserve_project(Q_raw: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Remove the spurious discrete mass/momentum/energy content of Q."""
    Q_raw = np.asarray(Q_raw, dtype=float)
    out = project_to_moments(Q_raw, np.zeros((1, 4)), grid)
    return out[0] if Q_raw.ndim == 1 else out


def entropy_production(f_cell: np.ndarray, Q: np.ndarray, stat: GasStatistics,
                       grid: VelocityGrid) -> float:
    """Discrete entropy-production integral of (f, Q).

    Nodes with f <= 0 (and, for fermions, theta0 f >= 1) are excluded from
    the sum; their count is reported at debug level.  The value is <= 0 up
    to quadrature error, with equality at the local equilibrium.
    """
    f_cell = np.asarray(f_cell, dtype=float)
    Q = np.asarray(Q, dtype=float)
    valid = f_cell > 0.0
    if stat.sign < 0:
        valid &= stat.theta0 * f_cell < 1.0
    n_excluded = int(valid.size - valid.sum())
    if n_excluded == valid.size:
        raise AllNodesExcludedError("no node satisfies the entropy-integrand bounds")
    if n_excluded:
        log.debug("entropy_production: %d of %d nodes excluded", n_excluded, valid.size)
    fv = f_cell[valid]
    integrand = np.log(fv / (1.0 + stat.sign * stat.theta0 * fv)) * Q[valid]
    return float(integrand.sum() * grid.weight)
