"""Reference solver for the fluid (inviscid compressible) limit.

The limiting system closes with p = rho * e in two velocity dimensions,
which is an ideal gas with adiabatic index 2; in conserved variables it is
the classical Euler system, so any standard gas-dynamics scheme applies.
This module provides a second-order MUSCL finite-volume marcher with HLL
fluxes (used as the fluid-regime reference for the kinetic solver), an
exact Riemann solver for piecewise-constant data, and the equilibrium
post-processing back to fugacity/temperature fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PositivityLossError, VacuumError
from .phase_space import BoundaryCondition, SpatialGrid
from .statistics import GasStatistics, invert_moments_field

__all__ = [
    "GAMMA_AD",
    "EulerField",
    "euler_step",
    "exact_riemann",
    "recover_fugacity_field",
    "write_profile",
]

GAMMA_AD = 2.0   # (d + 2) / d for d = 2


@dataclass
class EulerField:
    """Conserved variables (rho, rho ux, rho uy, E) per cell."""

    U: np.ndarray
    sgrid: SpatialGrid

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=float)
        if self.U.shape != (self.sgrid.n_x, 4):
            raise DomainError(f"conserved array shape {self.U.shape} does not "
                              f"match the grid ({self.sgrid.n_x}, 4)")

    @classmethod
    def from_primitives(cls, rho, ux, uy, e, sgrid: SpatialGrid) -> "EulerField":
        rho = np.asarray(rho, dtype=float)
        ux = np.asarray(ux, dtype=float)
        uy = np.asarray(uy, dtype=float)
        e = np.asarray(e, dtype=float)
        E = rho * e + 0.5 * rho * (ux ** 2 + uy ** 2)
        return cls(np.stack([rho, rho * ux, rho * uy, E], axis=1), sgrid)

    def primitives(self):
        """(rho, ux, uy, e, p) with the positivity invariants enforced."""
        rho = self.U[:, 0]
        if np.any(rho <= 0):
            raise PositivityLossError(f"rho <= 0 in cell {int(np.argmax(rho <= 0))}")
        ux = self.U[:, 1] / rho
        uy = self.U[:, 2] / rho
        rho_e = self.U[:, 3] - 0.5 * rho * (ux ** 2 + uy ** 2)
        if np.any(rho_e <= 0):
            raise PositivityLossError(
                f"internal energy <= 0 in cell {int(np.argmax(rho_e <= 0))}")
        e = rho_e / rho
        return rho, ux, uy, e, (GAMMA_AD - 1.0) * rho_e


def _vanleer(dm, dp):
    prod = dm * dp
    use = prod > 0
    return np.where(use, 2.0 * prod / np.where(use, dm + dp, 1.0), 0.0)


def _hll_flux(WL, WR):
    """HLL flux from left/right primitive states (rho, ux, uy, p)."""
    rhoL, uxL, uyL, pL = WL
    rhoR, uxR, uyR, pR = WR
    cL = np.sqrt(GAMMA_AD * pL / rhoL)
    cR = np.sqrt(GAMMA_AD * pR / rhoR)
    SL = np.minimum(uxL - cL, uxR - cR)
    SR = np.maximum(uxL + cL, uxR + cR)

    def conserved(rho, ux, uy, p):
        E = p / (GAMMA_AD - 1.0) + 0.5 * rho * (ux ** 2 + uy ** 2)
        return np.stack([rho, rho * ux, rho * uy, E], axis=0)

    def flux(rho, ux, uy, p):
        E = p / (GAMMA_AD - 1.0) + 0.5 * rho * (ux ** 2 + uy ** 2)
        return np.stack([rho * ux, rho * ux ** 2 + p, rho * ux * uy,
                         (E + p) * ux], axis=0)

    UL, UR = conserved(*WL), conserved(*WR)
    FL, FR = flux(*WL), flux(*WR)
    mid = (SR * FL - SL * FR + SL * SR * (UR - UL)) / (SR - SL)
    out = np.where(SL >= 0, FL, np.where(SR <= 0, FR, mid))
    return out


def _rhs(field: EulerField):
    sgrid = field.sgrid
    rho, ux, uy, e, p = field.primitives()
    W = np.stack([rho, ux, uy, p], axis=0)
    if sgrid.bc is BoundaryCondition.PERIODIC:
        We = np.concatenate([W[:, -2:], W, W[:, :2]], axis=1)
    else:
        We = np.concatenate([W[:, :1], W[:, :1], W, W[:, -1:], W[:, -1:]], axis=1)
    slopes = _vanleer(We[:, 1:-1] - We[:, :-2], We[:, 2:] - We[:, 1:-1])
    n = sgrid.n_x
    WL = We[:, 1:n + 2] + 0.5 * slopes[:, :n + 1]
    WR = We[:, 2:n + 3] - 0.5 * slopes[:, 1:n + 2]
    # limit reconstruction to physically valid face states
    WL[0] = np.maximum(WL[0], 1e-300)
    WR[0] = np.maximum(WR[0], 1e-300)
    WL[3] = np.maximum(WL[3], 1e-300)
    WR[3] = np.maximum(WR[3], 1e-300)
    F = _hll_flux(WL, WR)
    return -(F[:, 1:] - F[:, :-1]).T / sgrid.dx


def euler_step(field: EulerField, sgrid: SpatialGrid, h: float) -> EulerField:
    """One SSP-RK2 MUSCL/HLL step; raises on positivity loss."""
    if sgrid != field.sgrid:
        raise DomainError("grid mismatch")
    u1 = EulerField(field.U + h * _rhs(field), sgrid)
    u2 = EulerField(0.5 * field.U + 0.5 * (u1.U + h * _rhs(u1)), sgrid)
    u2.primitives()
    return u2


def max_wavespeed(field: EulerField) -> float:
    rho, ux, uy, e, p = field.primitives()
    return float((np.abs(ux) + np.sqrt(GAMMA_AD * p / rho)).max())


# --- exact Riemann solution -----------------------------------------------

def _pressure_fn(p, rho_k, p_k, c_k):
    if p > p_k:   # shock
        a = 2.0 / ((GAMMA_AD + 1.0) * rho_k)
        b = (GAMMA_AD - 1.0) / (GAMMA_AD + 1.0) * p_k
        q = np.sqrt(a / (p + b))
        return (p - p_k) * q, q * (1.0 - 0.5 * (p - p_k) / (p + b))
    # rarefaction
    g1 = (GAMMA_AD - 1.0) / (2.0 * GAMMA_AD)
    f = 2.0 * c_k / (GAMMA_AD - 1.0) * ((p / p_k) ** g1 - 1.0)
    df = (p / p_k) ** (-(GAMMA_AD + 1.0) / (2.0 * GAMMA_AD)) / (rho_k * c_k)
    return f, df


def exact_riemann(left, right, xi, tol: float = 1e-12, max_iter: int = 100):
    """Self-similar solution of the Riemann problem, sampled at xi = x/t.

    left/right are (rho, ux, p) triples; returns arrays (rho, ux, p) at the
    sample points.  The transverse velocity is a passive scalar and is not
    handled here (it jumps across the contact).
    """
    rho_l, u_l, p_l = map(float, left)
    rho_r, u_r, p_r = map(float, right)
    if min(rho_l, rho_r) <= 0 or min(p_l, p_r) <= 0:
        raise DomainError("Riemann data must have positive density and pressure")
    c_l = np.sqrt(GAMMA_AD * p_l / rho_l)
    c_r = np.sqrt(GAMMA_AD * p_r / rho_r)
    if 2.0 * (c_l + c_r) / (GAMMA_AD - 1.0) <= u_r - u_l:
        raise VacuumError("initial states generate vacuum")

    # two-rarefaction initial guess, clipped away from zero
    g1 = (GAMMA_AD - 1.0) / (2.0 * GAMMA_AD)
    p = ((c_l + c_r - 0.5 * (GAMMA_AD - 1.0) * (u_r - u_l))
         / (c_l / p_l ** g1 + c_r / p_r ** g1)) ** (1.0 / g1)
    p = max(p, 1e-14 * min(p_l, p_r))
    for _ in range(max_iter):
        f_l, df_l = _pressure_fn(p, rho_l, p_l, c_l)
        f_r, df_r = _pressure_fn(p, rho_r, p_r, c_r)
        g = f_l + f_r + (u_r - u_l)
        dp = g / (df_l + df_r)
        p_new = p - dp
        if p_new <= 0:
            p_new = 0.5 * p
        if abs(p_new - p) <= tol * p:
            p = p_new
            break
        p = p_new
    p_star = p
    f_l, _ = _pressure_fn(p_star, rho_l, p_l, c_l)
    f_r, _ = _pressure_fn(p_star, rho_r, p_r, c_r)
    u_star = 0.5 * (u_l + u_r) + 0.5 * (f_r - f_l)

    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    rho = np.empty_like(xi)
    u = np.empty_like(xi)
    pr = np.empty_like(xi)
    gm = GAMMA_AD
    for i, s in enumerate(xi):
        if s <= u_star:   # left of the contact
            if p_star > p_l:   # left shock
                sl = u_l - c_l * np.sqrt((gm + 1.0) / (2 * gm) * p_star / p_l
                                         + (gm - 1.0) / (2 * gm))
                if s < sl:
                    rho[i], u[i], pr[i] = rho_l, u_l, p_l
                else:
                    ratio = p_star / p_l
                    rho[i] = rho_l * ((gm - 1.0) / (gm + 1.0) + ratio) / \
                        ((gm - 1.0) / (gm + 1.0) * ratio + 1.0)
                    u[i], pr[i] = u_star, p_star
            else:              # left rarefaction
                head = u_l - c_l
                c_star = c_l * (p_star / p_l) ** g1
                tail = u_star - c_star
                if s < head:
                    rho[i], u[i], pr[i] = rho_l, u_l, p_l
                elif s > tail:
                    rho[i] = rho_l * (p_star / p_l) ** (1.0 / gm)
                    u[i], pr[i] = u_star, p_star
                else:
                    c = (2.0 / (gm + 1.0)) * (c_l + 0.5 * (gm - 1.0) * (u_l - s))
                    u[i] = (2.0 / (gm + 1.0)) * (c_l + 0.5 * (gm - 1.0) * u_l + s)
                    pr[i] = p_l * (c / c_l) ** (2.0 * gm / (gm - 1.0))
                    rho[i] = rho_l * (c / c_l) ** (2.0 / (gm - 1.0))
        else:             # right of the contact
            if p_star > p_r:   # right shock
                sr = u_r + c_r * np.sqrt((gm + 1.0) / (2 * gm) * p_star / p_r
                                         + (gm - 1.0) / (2 * gm))
                if s > sr:
                    rho[i], u[i], pr[i] = rho_r, u_r, p_r
                else:
                    ratio = p_star / p_r
                    rho[i] = rho_r * ((gm - 1.0) / (gm + 1.0) + ratio) / \
                        ((gm - 1.0) / (gm + 1.0) * ratio + 1.0)
                    u[i], pr[i] = u_star, p_star
            else:              # right rarefaction
                head = u_r + c_r
                c_star = c_r * (p_star / p_r) ** g1
                tail = u_star + c_star
                if s > head:
                    rho[i], u[i], pr[i] = rho_r, u_r, p_r
                elif s < tail:
                    rho[i] = rho_r * (p_star / p_r) ** (1.0 / gm)
                    u[i], pr[i] = u_star, p_star
                else:
                    c = (2.0 / (gm + 1.0)) * (c_r - 0.5 * (gm - 1.0) * (u_r - s))
                    u[i] = (2.0 / (gm + 1.0)) * (-c_r + 0.5 * (gm - 1.0) * u_r + s)
                    pr[i] = p_r * (c / c_r) ** (2.0 * gm / (gm - 1.0))
                    rho[i] = rho_r * (c / c_r) ** (2.0 / (gm - 1.0))
    return rho, u, pr


def recover_fugacity_field(field: EulerField, stat: GasStatistics):
    """Per-cell (z, T) equilibrium parameters of a fluid state."""
    rho, ux, uy, e, p = field.primitives()
    return invert_moments_field(rho, e, stat)


def write_profile(path, field: EulerField, stat: GasStatistics) -> None:
    """CSV profile (x, rho, ux, uy, e, z, T), 17 significant digits."""
    rho, ux, uy, e, p = field.primitives()
    z, T = recover_fugacity_field(field, stat)
    x = field.sgrid.centers
    with open(path, "w", encoding="ascii") as fh:
        fh.write("x,rho,ux,uy,e,z,T\n")
        for row in zip(x, rho, ux, uy, e, z, T):
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
