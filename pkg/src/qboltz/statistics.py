"""Equilibrium statistics of ideal Bose and Fermi gases.

The local equilibrium of a quantum gas is parameterized by a fugacity ``z``
and a temperature ``T`` instead of the density/temperature pair of the
classical theory.  The bridge between ``(z, T)`` and the observable moments
``(rho, e)`` runs through the Bose-Einstein / Fermi-Dirac functions

    Q_nu(z) = 1/Gamma(nu) * integral_0^inf  x^(nu-1) / (exp(x)/z -+ 1) dx,

with the upper sign for bosons (``0 < z < 1``) and the lower sign for
fermions (``0 < z < inf``).  This module evaluates ``Q_nu``, inverts the
moment system ``(rho, e) -> (z, T)`` with a safeguarded Newton iteration,
and provides the auxiliary ratios entering the time derivative of the
equilibrium distribution.

All functions accept scalars or numpy arrays for ``z`` (and broadcast), and
are pure: no global mutable state, safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn
from scipy.special import spence

from .errors import ConvergenceError, DomainError, NoSolutionError, SingularDenominatorError

__all__ = [
    "GasKind",
    "GasStatistics",
    "EquilibriumParams",
    "eval_q_nu",
    "eval_q_nu_derivative",
    "moments_from_equilibrium",
    "invert_moments",
    "invert_moments_field",
    "fugacity_from_density",
    "eval_mn",
]

# Series tail for Q_2 at z = 1/2 drops below 1e-19 after ~56 terms.
_Q2_SERIES_TERMS = 60
_Q2_SERIES_CUTOFF = 0.5

# Fugacity ceiling used by the Bose bracket: beyond this the state is treated
# as out of scope (onset of condensation).
_BOSE_Z_MAX = 1.0 - 1e-13
_FERMI_Z_MAX = 1e16


class GasKind(Enum):
    BOSE = "bose"
    FERMI = "fermi"


@dataclass(frozen=True)
class GasStatistics:
    """Particle statistics plus the degeneracy parameter of the gas.

    ``theta0`` is the dimensionless degeneracy constant; ``theta0 -> 0``
    recovers classical kinetics.  ``d`` is the velocity dimension (2 is the
    supported configuration; 3 is experimental and only reaches the slow
    quadrature path of ``eval_q_nu``).
    """

    kind: GasKind
    theta0: float
    d: int = 2

    def __post_init__(self):
        if self.theta0 <= 0:
            raise DomainError(f"theta0 must be positive, got {self.theta0}")
        if self.d not in (2, 3):
            raise DomainError(f"velocity dimension must be 2 or 3, got {self.d}")

    @property
    def sign(self) -> float:
        """+1 for Bose, -1 for Fermi: the sign in the (1 +- theta0 f) factors."""
        return 1.0 if self.kind is GasKind.BOSE else -1.0

    @property
    def z_max(self) -> float:
        return _BOSE_Z_MAX if self.kind is GasKind.BOSE else _FERMI_Z_MAX


@dataclass(frozen=True)
class EquilibriumParams:
    """Fugacity/temperature pair of a local equilibrium."""

    z: float
    T: float

    def validate(self, stat: GasStatistics) -> "EquilibriumParams":
        _check_fugacity(self.z, stat)
        if self.T <= 0:
            raise DomainError(f"temperature must be positive, got {self.T}")
        return self


def _check_fugacity(z, stat: GasStatistics):
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0.0):
        raise DomainError("fugacity must be positive")
    if stat.kind is GasKind.BOSE and np.any(z >= 1.0):
        raise DomainError("Bose fugacity must satisfy z < 1")
    if not np.all(np.isfinite(z)):
        raise DomainError("fugacity must be finite")


def _q2_series(z: np.ndarray, sign: float) -> np.ndarray:
    # Horner evaluation of sum_{k>=1} (+-1)^{k+1} z^k / k^2.
    acc = np.zeros_like(z)
    for k in range(_Q2_SERIES_TERMS, 0, -1):
        c = (1.0 if (k % 2 == 1 or sign > 0) else -1.0) / (k * k)
        acc = acc * z + c
    return acc * z


def _q2(z: np.ndarray, sign: float) -> np.ndarray:
    # Dilogarithm branch: Li2(z) for bosons, -Li2(-z) for fermions.
    z = np.asarray(z, dtype=float)
    small = z <= _Q2_SERIES_CUTOFF
    out = np.empty_like(z)
    if np.any(small):
        out[small] = _q2_series(z[small], sign)
    if np.any(~small):
        zz = z[~small]
        out[~small] = spence(1.0 - zz) if sign > 0 else -spence(1.0 + zz)
    return out


def _q_nu_quadrature(z: float, nu: float, sign: float, rtol: float = 1e-13) -> float:
    if nu <= 0:
        raise DomainError(f"the defining integral requires nu > 0, got {nu}")

    def integrand(x):
        # exp(-x) form keeps the evaluation finite for all x >= 0.
        ex = math.exp(-x)
        return x ** (nu - 1.0) * z * ex / (1.0 - sign * z * ex)

    upper = 60.0 + (math.log(z) if z > 1.0 else 0.0)
    pts = [math.log(z)] if 1.0 < z and math.log(z) < upper else None
    val, err = quad(integrand, 0.0, upper, points=pts, limit=200,
                    epsabs=0.0, epsrel=rtol)
    if not math.isfinite(val) or (val != 0 and err / abs(val) > 1e-10):
        raise ConvergenceError(
            f"quadrature for Q_nu(z={z}, nu={nu}) failed: value {val}, error {err}")
    return val / gamma_fn(nu)


def eval_q_nu(z, nu, stat: GasStatistics):
    """Evaluate the Bose-Einstein/Fermi-Dirac function Q_nu(z).

    Orders 0, 1, 2 use closed forms (log, rational, dilogarithm with a power
    series below z = 1/2); any other positive order falls back to adaptive
    quadrature of the defining integral and accepts scalars only.
    """
    _check_fugacity(z, stat)
    s = stat.sign
    z_arr = np.asarray(z, dtype=float)
    scalar = np.isscalar(z) or z_arr.ndim == 0

    if nu == 0:
        out = z_arr / (1.0 - s * z_arr)
    elif nu == 1:
        out = -s * np.log1p(-s * z_arr)
    elif nu == 2:
        out = _q2(np.atleast_1d(z_arr), s)
        out = out.reshape(z_arr.shape)
    else:
        if not scalar:
            raise DomainError("array evaluation is only supported for nu in {0, 1, 2}")
        return _q_nu_quadrature(float(z_arr), float(nu), s)
    return float(out) if scalar else out


def eval_q_nu_derivative(z, nu, stat: GasStatistics):
    """Derivative dQ_nu/dz, using the ladder identity z Q_nu'(z) = Q_{nu-1}(z)."""
    if nu < 1:
        raise DomainError(f"derivative requires nu >= 1, got {nu}")
    _check_fugacity(z, stat)
    return eval_q_nu(z, nu - 1, stat) / np.asarray(z, dtype=float)


def moments_from_equilibrium(params: EquilibriumParams | tuple, stat: GasStatistics):
    """Map equilibrium parameters (z, T) to density and specific internal energy."""
    if isinstance(params, EquilibriumParams):
        params.validate(stat)
        z, T = params.z, params.T
    else:
        z, T = params
    half_d = stat.d / 2.0
    q_lo = eval_q_nu(z, half_d, stat)
    q_hi = eval_q_nu(z, half_d + 1, stat)
    rho = (2.0 * np.pi * T) ** half_d / stat.theta0 * q_lo
    e = half_d * T * q_hi / q_lo
    return rho, e


def _fz_and_ratio(z, stat: GasStatistics):
    """F(z) = Q_{d/2}^{d/2+1} / Q_{d/2+1}^{d/2} and F'(z)/F(z)."""
    nu = stat.d / 2.0
    q_m = eval_q_nu(z, nu - 1, stat)
    q_0 = eval_q_nu(z, nu, stat)
    q_p = eval_q_nu(z, nu + 1, stat)
    F = q_0 ** (nu + 1.0) / q_p ** nu
    dlogF = ((nu + 1.0) * q_m / q_0 - nu * q_0 / q_p) / np.asarray(z, dtype=float)
    return F, F * dlogF, q_0, q_p


def invert_moments_field(rho, e, stat: GasStatistics, rtol: float = 1e-13,
                         max_iter: int = 200):
    """Vectorized inversion of the moment system: (rho, e) -> (z, T).

    The temperature is eliminated through the energy equation, leaving the
    scalar equation F(z) = theta0 * rho * (d / (4 pi e))^{d/2} which is
    monotone in z; a Newton iteration safeguarded by bisection on the
    bracketing interval then converges for every admissible input.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    e = np.atleast_1d(np.asarray(e, dtype=float))
    rho, e = np.broadcast_arrays(rho, e)
    if np.any(rho <= 0) or np.any(e <= 0):
        bad = int(np.argmax((rho <= 0) | (e <= 0)))
        raise DomainError(f"inversion requires rho > 0 and e > 0 (cell {bad}: "
                          f"rho={rho.flat[bad]}, e={e.flat[bad]})")

    half_d = stat.d / 2.0
    y = stat.theta0 * rho * (stat.d / (4.0 * np.pi * e)) ** half_d

    lo = np.full_like(y, 1e-300)
    if stat.kind is GasKind.BOSE:
        hi = np.full_like(y, stat.z_max)
        F_hi, _, _, _ = _fz_and_ratio(hi, stat)
        if np.any(F_hi < y):
            bad = int(np.argmax(F_hi < y))
            raise NoSolutionError(
                "density exceeds the Bose bound at this energy "
                f"(rho={rho.flat[bad]}, e={e.flat[bad]}): the equilibrium would "
                "require z >= 1 (condensation regime, out of scope)", cell=bad)
    else:
        hi = np.ones_like(y)
        for _ in range(40):
            F_hi, _, _, _ = _fz_and_ratio(hi, stat)
            need = F_hi < y
            if not np.any(need):
                break
            hi = np.where(need, hi * 4.0, hi)
            if np.any(hi[need] > stat.z_max):
                bad = int(np.argmax(need & (hi > stat.z_max)))
                raise NoSolutionError(
                    "energy below the degenerate Fermi bound for this density "
                    f"(rho={rho.flat[bad]}, e={e.flat[bad]})", cell=bad)
        else:
            raise NoSolutionError("Fermi bracket expansion did not terminate")

    z = np.clip(y, lo * 10.0, hi)
    converged = np.zeros(z.shape, dtype=bool)
    for _ in range(max_iter):
        F, dF, _, _ = _fz_and_ratio(z, stat)
        err = F - y
        hi = np.where(err > 0, np.minimum(hi, z), hi)
        lo = np.where(err <= 0, np.maximum(lo, z), lo)
        converged = np.abs(err) <= rtol * y
        if np.all(converged):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            z_new = z - err / dF
        bad = ~np.isfinite(z_new) | (z_new <= lo) | (z_new >= hi)
        z_new = np.where(bad, 0.5 * (lo + hi), z_new)
        z = np.where(converged, z, z_new)
    else:
        if not np.all(converged | (hi - lo <= 1e-15 * np.abs(z))):
            raise ConvergenceError(
                f"fugacity iteration did not converge after {max_iter} steps")

    q_0 = eval_q_nu(z, half_d, stat)
    q_p = eval_q_nu(z, half_d + 1, stat)
    T = (2.0 * e / stat.d) * q_0 / q_p
    return z, T


def invert_moments(rho: float, e: float, stat: GasStatistics,
                   rtol: float = 1e-13) -> EquilibriumParams:
    """Scalar (rho, e) -> EquilibriumParams inversion. See invert_moments_field."""
    z, T = invert_moments_field(float(rho), float(e), stat, rtol=rtol)
    return EquilibriumParams(z=float(z[0]), T=float(T[0]))


def fugacity_from_density(rho, T, stat: GasStatistics):
    """Solve the density equation rho = (2 pi T)^{d/2}/theta0 * Q_{d/2}(z) for z.

    Closed form for d = 2; used to translate (rho, T) initial data into
    equilibrium parameters.
    """
    rho = np.asarray(rho, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(rho <= 0) or np.any(T <= 0):
        raise DomainError("rho and T must be positive")
    w = stat.theta0 * rho / (2.0 * np.pi * T) ** (stat.d / 2.0)
    if stat.d == 2:
        z = -np.expm1(-w) if stat.kind is GasKind.BOSE else np.expm1(w)
        return z if z.ndim else float(z)
    # experimental d=3 path: scalar bisection on the quadrature evaluation
    lo, hi = 1e-300, stat.z_max
    f = lambda zz: eval_q_nu(zz, stat.d / 2.0, stat) - float(w)
    if f(hi) < 0:
        raise NoSolutionError("density above the degenerate bound at this T")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def eval_mn(z, T, e, stat: GasStatistics):
    """Auxiliary ratios M(z), N(z) of the equilibrium time derivative.

    Both share the denominator (d/2+1) Q_{d/2-1} - (d^2 T)/(4 e) Q_{d/2};
    (z, T, e) must come from one consistent macroscopic state.  Raises
    SingularDenominatorError when the denominator is below 1e-14 of the
    numerator scale (approached only in the degenerate Fermi limit).
    """
    _check_fugacity(z, stat)
    nu = stat.d / 2.0
    q_m = eval_q_nu(z, nu - 1, stat)
    q_0 = eval_q_nu(z, nu, stat)
    T = np.asarray(T, dtype=float)
    e = np.asarray(e, dtype=float)
    den = (nu + 1.0) * q_m - (stat.d * stat.d * T / (4.0 * e)) * q_0
    scale = (nu + 1.0) * np.abs(q_m)
    if np.any(np.abs(den) <= 1e-14 * scale):
        raise SingularDenominatorError(
            "time-derivative coefficients are singular for this state "
            "(degenerate-limit denominator collapse)")
    return q_0 / den, q_m / den
