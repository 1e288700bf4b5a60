"""Exponential Runge-Kutta time integration, uniformly stable in stiffness.

One step advances the pair (f, moments).  The moments march with the plain
explicit tableau driven by transport fluxes; f is reconstructed stage by
stage from the stiffly-weighted combination

    f_i = M_i + (f_n - M_n) exp(-c_i lam)
        + sum_j a_ij (h/eps) G_j exp((c_j - c_i) lam),

with lam = mu h / eps and G_j the penalized right-hand side of stage j.
Every exponent is non-positive by construction, so the scheme degrades
gracefully into the fluid limit: as lam grows the exponential weights
underflow to zero, each stage collapses onto its local equilibrium, and
the moment march becomes the same tableau applied to the limiting fluid
system.

Two discrete-consistency measures keep the kinetic and moment halves glued
together exactly: stage equilibria are built by the discrete-moment
inversion, and each assembled stage is projected back onto its prescribed
moments (removing quadrature noise from the collision and equilibrium-
derivative terms).  Optionally the collision term is evaluated in deviation
form Q(f) - Q(M[f]), which makes discrete equilibria exact fixed points.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .collision import (
    CollisionKernelConfig,
    CollisionWorkspace,
    build_workspace,
    collide_field,
    project_to_moments,
)
from .errors import ConfigError
from .phase_space import (
    ButcherTableau,
    DistributionField,
    conserved_moments,
    discrete_equilibrium_field,
    dt_maxwellian_field,
    moments_field,
)
from .statistics import GasStatistics
from .transport import TransportScheme, macro_derivatives, transport_rhs

__all__ = [
    "FORWARD_EULER",
    "MIDPOINT_RK2",
    "HEUN_RK3",
    "MuRule",
    "SolverConfig",
    "Trajectory",
    "resolve_mu",
    "step_forward_euler",
    "step_exp_rk",
    "run_simulation",
]

FORWARD_EULER = ButcherTableau(a=[[0.0]], b=[1.0], c=[0.0], name="exp-euler")
MIDPOINT_RK2 = ButcherTableau(a=[[0.0, 0.0], [0.5, 0.0]], b=[0.0, 1.0],
                              c=[0.0, 0.5], name="exp-rk2-midpoint")
HEUN_RK3 = ButcherTableau(
    a=[[0.0, 0.0, 0.0], [1.0 / 3.0, 0.0, 0.0], [0.0, 2.0 / 3.0, 0.0]],
    b=[0.25, 0.0, 0.75], c=[0.0, 1.0 / 3.0, 2.0 / 3.0], name="exp-rk3-heun")


@dataclass(frozen=True)
class MuRule:
    """Penalty-constant selection: fixed, or scaled off the initial density.

    The scaled rule is beta * (2 pi c_gamma) * max_x[rho (1 + theta0 max_v
    f)], i.e. beta times an upper estimate of the collision loss rate (the
    kernel's total cross section times the densest, most quantum-enhanced
    cell).  It is resolved once at the initial data and then frozen,
    keeping the constant time-independent as the exponential reformulation
    requires.  A constant below the loss rate destabilizes the explicitly
    treated remainder in moderately stiff regimes.
    """

    kind: str = "rho_scaled"
    value: float = 2.0

    def __post_init__(self):
        if self.kind not in ("fixed", "rho_scaled"):
            raise ConfigError(f"unknown mu rule {self.kind!r}")

    @classmethod
    def fixed(cls, mu: float) -> "MuRule":
        return cls("fixed", mu)

    @classmethod
    def rho_scaled(cls, beta: float = 2.0) -> "MuRule":
        return cls("rho_scaled", beta)


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float
    tableau: ButcherTableau
    scheme: TransportScheme
    t_final: float
    cfl: float = 0.5
    mu_rule: MuRule = field(default_factory=MuRule)
    kernel: CollisionKernelConfig = field(default_factory=CollisionKernelConfig)
    output_every: int = 1
    n_steps: int | None = None   # overrides the CFL-derived step count
    equilibrium_fix: bool = True
    collision_skip_rel: float = 1e-13

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.cfl <= 1:
            raise ConfigError(f"cfl must be in (0, 1], got {self.cfl}")
        if self.t_final < 0:
            raise ConfigError("t_final must be nonnegative")
        if self.output_every < 1:
            raise ConfigError("output cadence must be >= 1")
        if self.collision_skip_rel < 0:
            raise ConfigError("collision_skip_rel must be >= 0")


def resolve_mu(f: DistributionField, stat: GasStatistics,
               kernel: CollisionKernelConfig, rule: MuRule) -> float:
    """Penalty constant for a run; held frozen for all subsequent steps."""
    if rule.kind == "fixed":
        mu = rule.value
    else:
        rho, _, _ = moments_field(f.values, f.vgrid)
        sigma_tot = 2.0 * np.pi * kernel.c_gamma
        mu = rule.value * sigma_tot * float(
            (rho * (1.0 + stat.theta0 * f.values.max(axis=1))).max())
    if mu <= 0:
        raise ConfigError(f"penalty constant must be positive, got {mu}")
    return mu


@dataclass
class Trajectory:
    """March products: per-step diagnostics plus snapshot fields."""

    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    mu: float = 0.0
    h: float = 0.0
    collision_evals: int = 0
    final: DistributionField | None = None
    error: str | None = None

    DIAG_COLUMNS = ("step", "t", "mass", "momentum_x", "momentum_y", "energy",
                    "f_minus_Mq_L1", "fermi_violation_max")

    @property
    def norm_series(self) -> np.ndarray:
        """(t, ||f - M||_1) pairs from the diagnostics table."""
        return np.array([(row[1], row[6]) for row in self.diagnostics])

    def write_diagnostics(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(",".join(self.DIAG_COLUMNS) + "\n")
            for row in self.diagnostics:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
            if self.error is not None:
                fh.write(f"# error: {self.error}\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


class _StepEngine:
    """Per-run state shared across steps: grids, workspace, mu, counters."""

    def __init__(self, f0: DistributionField, stat: GasStatistics,
                 config: SolverConfig, ws: CollisionWorkspace | None = None):
        self.sgrid = f0.sgrid
        self.vgrid = f0.vgrid
        self.stat = stat
        self.config = config
        self.ws = ws if ws is not None else build_workspace(self.vgrid, config.kernel)
        self.mu = resolve_mu(f0, stat, config.kernel, config.mu_rule)
        self.collision_evals = 0
        self.v_box = (2.0 * self.vgrid.half_width) ** 2
        self.last_stage_deviation = np.zeros(config.tableau.stages)

    def _collision_bound(self, f_i, m_i, rho_max):
        """Conservative sup|Q| (or sup|Q(f)-Q(M)| in deviation form)."""
        k = self.config.kernel
        fmax = float(np.abs(f_i).max())
        if fmax == 0.0:
            return 0.0, 0.0
        qf = 1.0 + self.stat.theta0 * fmax
        base = 2.0 * np.pi * k.c_gamma * qf * qf * (
            self.v_box * fmax ** 2 + rho_max * fmax)
        if self.config.equilibrium_fix:
            dev = float(np.abs(f_i - m_i).max())
            th = self.stat.theta0
            lip = 2.0 * np.pi * k.c_gamma * self.v_box * 2.0 * (
                2.0 * fmax * qf * qf + 2.0 * th * fmax * fmax * qf)
            return min(2.0 * base, lip * dev), fmax
        return base, fmax

    def _collision_term(self, f_i, m_i, rho_max, weight):
        """Q(f) (optionally minus Q(M[f])), or None when provably negligible."""
        bound, fmax = self._collision_bound(f_i, m_i, rho_max)
        if weight * bound <= self.config.collision_skip_rel * fmax:
            return None
        q = collide_field(f_i, self.stat, self.vgrid, self.ws)
        self.collision_evals += f_i.shape[0]
        if self.config.equilibrium_fix:
            q = q - collide_field(m_i, self.stat, self.vgrid, self.ws)
            self.collision_evals += f_i.shape[0]
        return q

    def step(self, values: np.ndarray, mom: np.ndarray, h: float, eq0=None):
        """One exponential RK step; returns (values', mom', (state', M'))."""
        cfg = self.config
        tab = cfg.tableau
        kappa = tab.stages
        eps = cfg.epsilon
        lam = self.mu * h / eps
        h_over_eps = h / eps
        a, b, c = tab.a, tab.b, tab.c

        flux4 = [None] * kappa     # moments of +v df/dx per stage
        G = [None] * kappa         # penalized bracket per stage

        # largest downstream weight of each stage's bracket
        w_max = np.zeros(kappa)
        for j in range(kappa):
            uses = [abs(b[j]) * np.exp((c[j] - 1.0) * lam)]
            for i in range(j + 1, kappa):
                if a[i, j] != 0.0:
                    uses.append(abs(a[i, j]) * np.exp((c[j] - c[i]) * lam))
            w_max[j] = h_over_eps * max(uses)

        for i in range(kappa):
            mom_i = mom.copy()
            for j in range(i):
                if a[i, j] != 0.0:
                    mom_i -= h * a[i, j] * flux4[j]
            if i == 0:
                if eq0 is None:
                    eq0 = discrete_equilibrium_field(mom, self.stat, self.vgrid)
                state_i, m_i = eq0
                m0 = m_i
                f_i = values
            else:
                state_i, m_i = discrete_equilibrium_field(mom_i, self.stat,
                                                          self.vgrid)
                ex = -c[i] * lam
                assert ex <= 0.0
                f_i = m_i + (values - m0) * np.exp(ex)
                for j in range(i):
                    if a[i, j] != 0.0 and G[j] is not None:
                        ex = (c[j] - c[i]) * lam
                        assert ex <= 0.0
                        scale = a[i, j] * h_over_eps * np.exp(ex)
                        if scale != 0.0:
                            f_i = f_i + scale * G[j]
                f_i = project_to_moments(f_i, mom_i, self.vgrid)
            self.last_stage_deviation[i] = float(
                np.abs(f_i - m_i).sum() * self.vgrid.weight * self.sgrid.dx)

            rhs_i = transport_rhs(f_i, cfg.scheme, self.sgrid, self.vgrid)
            flux4[i] = conserved_moments(-rhs_i, self.vgrid)
            if w_max[i] > 0.0:
                rho_max = float(state_i.rho.max())
                q_i = self._collision_term(f_i, m_i, rho_max, w_max[i])
                F1, F2, F3 = flux4[i][:, 0], flux4[i][:, 1:3], flux4[i][:, 3]
                drho, du, de = macro_derivatives(F1, F2, F3, state_i)
                dtm_i = dt_maxwellian_field(state_i, m_i, drho, du, de,
                                            self.stat, self.vgrid)
                G[i] = self.mu * (f_i - m_i) + eps * (rhs_i - dtm_i)
                if q_i is not None:
                    G[i] += q_i

        mom_next = mom.copy()
        for i in range(kappa):
            if b[i] != 0.0:
                mom_next -= h * b[i] * flux4[i]
        eq_next = discrete_equilibrium_field(mom_next, self.stat, self.vgrid)
        m_next = eq_next[1]
        ex = -lam
        assert ex <= 0.0
        f_next = m_next + (values - m0) * np.exp(ex)
        for i in range(kappa):
            if b[i] != 0.0 and G[i] is not None:
                ex = (c[i] - 1.0) * lam
                assert ex <= 0.0
                scale = b[i] * h_over_eps * np.exp(ex)
                if scale != 0.0:
                    f_next = f_next + scale * G[i]
        f_next = project_to_moments(f_next, mom_next, self.vgrid)
        return f_next, mom_next, eq_next


def step_exp_rk(f: DistributionField, stat: GasStatistics, config: SolverConfig,
                h: float | None = None,
                ws: CollisionWorkspace | None = None) -> DistributionField:
    """One step of the kappa-stage exponential scheme on a field.

    Resolves the penalty constant from f itself; for multi-step marches use
    run_simulation, which freezes the constant at the initial data.
    """
    eng = _StepEngine(f, stat, config, ws)
    if h is None:
        h = config.cfl * f.sgrid.dx / f.vgrid.half_width
    mom = conserved_moments(f.values, f.vgrid)
    out, _, _ = eng.step(f.values, mom, h)
    return DistributionField(out, f.sgrid, f.vgrid)


def step_forward_euler(f: DistributionField, stat: GasStatistics,
                       config: SolverConfig, h: float | None = None,
                       ws: CollisionWorkspace | None = None) -> DistributionField:
    """One exponential forward-Euler step (the one-stage tableau)."""
    return step_exp_rk(f, stat, replace(config, tableau=FORWARD_EULER), h=h, ws=ws)


def run_simulation(initial: DistributionField, stat: GasStatistics,
                   config: SolverConfig, ws: CollisionWorkspace | None = None,
                   diagnostics_path=None, keep_snapshots: bool = True) -> Trajectory:
    """Fixed-step march to t_final with per-step diagnostics.

    The step is cfl * dx / v_max (v_max = the velocity-box half width) and
    the last step is truncated to land exactly on t_final; n_steps in the
    config forces a uniform step h = t_final / n_steps instead.  Snapshots
    are recorded every output_every steps.  On failure the partial
    trajectory (with an error record) is written before the exception
    propagates.
    """
    eng = _StepEngine(initial, stat, config, ws)
    vgrid, sgrid = initial.vgrid, initial.sgrid
    traj = Trajectory(mu=eng.mu)

    values = initial.values.copy()
    mom = conserved_moments(values, vgrid)
    eq_now = discrete_equilibrium_field(mom, stat, vgrid)

    if config.n_steps is not None:
        n_steps = max(1, config.n_steps)
        schedule = [config.t_final / n_steps] * n_steps
    else:
        h_cfl = config.cfl * sgrid.dx / vgrid.half_width
        n_full = int(np.floor(config.t_final / h_cfl * (1.0 - 1e-14)))
        schedule = [h_cfl] * n_full
        rest = config.t_final - n_full * h_cfl
        if rest > 1e-14 * max(1.0, config.t_final):
            schedule.append(rest)
    traj.h = schedule[0] if schedule else 0.0

    cell_measure = vgrid.weight * sgrid.dx

    def record(step, t, f_arr, m_arr, mom_arr):
        tot = mom_arr.sum(axis=0) * sgrid.dx
        l1 = float(np.abs(f_arr - m_arr).sum() * cell_measure)
        fermi = 0.0
        if stat.sign < 0:
            fermi = max(0.0, float((stat.theta0 * f_arr).max()) - 1.0)
        traj.diagnostics.append(
            (step, t, tot[0], tot[1], tot[2], tot[3], l1, fermi))
        if keep_snapshots and step % config.output_every == 0:
            traj.snapshots.append(f_arr.copy())
            traj.snapshot_times.append(t)
        traj.times.append(t)

    record(0, 0.0, values, eq_now[1], mom)
    t = 0.0
    try:
        for step_idx, h in enumerate(schedule, start=1):
            values, mom, eq_now = eng.step(values, mom, h, eq0=eq_now)
            t += h
            record(step_idx, t, values, eq_now[1], mom)
    except Exception as exc:
        traj.error = f"{type(exc).__name__}: {exc}"
        if diagnostics_path is not None:
            traj.write_diagnostics(diagnostics_path)
        raise
    traj.collision_evals = eng.collision_evals
    traj.final = DistributionField(values, sgrid, vgrid)
    if diagnostics_path is not None:
        traj.write_diagnostics(diagnostics_path)
    return traj
