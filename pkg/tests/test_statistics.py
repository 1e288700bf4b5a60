import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from qboltz import (
    DomainError,
    EquilibriumParams,
    GasKind,
    GasStatistics,
    NoSolutionError,
    eval_mn,
    eval_q_nu,
    eval_q_nu_derivative,
    fugacity_from_density,
    invert_moments,
    invert_moments_field,
    moments_from_equilibrium,
)

BOSE = GasStatistics(GasKind.BOSE, theta0=1.0)
FERMI = GasStatistics(GasKind.FERMI, theta0=1.0)


def q_nu_quadrature_oracle(z, nu, stat):
    """Independent evaluation of Q_nu by adaptive quadrature of the integral."""
    s = stat.sign

    def integrand(x):
        return x ** (nu - 1.0) / (math.exp(x) / z - s)

    upper = 80.0 + (math.log(z) if z > 1 else 0.0)
    val, _ = quad(integrand, 0.0, upper, limit=300,
                  points=[math.log(z)] if z > 1 else None)
    return val / gamma_fn(nu)


class TestEvalQNu:
    def test_bose_q1_closed_form(self):
        # ln 2 at z = 1/2
        assert eval_q_nu(0.5, 1, BOSE) == pytest.approx(math.log(2.0), rel=1e-14)

    def test_fermi_q0_at_one(self):
        assert eval_q_nu(1.0, 0, FERMI) == pytest.approx(0.5, rel=1e-14)

    def test_small_z_behaves_like_z(self):
        for stat in (BOSE, FERMI):
            for nu in (0, 1, 2):
                z = 1e-9
                assert eval_q_nu(z, nu, stat) / z == pytest.approx(1.0, rel=1e-6)

    def test_q2_bose_against_quadrature_oracle(self):
        # pi^2/12 - ln(2)^2/2 at z = 1/2
        expected = math.pi ** 2 / 12.0 - math.log(2.0) ** 2 / 2.0
        assert q_nu_quadrature_oracle(0.5, 2, BOSE) == pytest.approx(expected, rel=1e-10)
        assert eval_q_nu(0.5, 2, BOSE) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("stat", [BOSE, FERMI], ids=["bose", "fermi"])
    @pytest.mark.parametrize("z", [0.01, 0.3, 0.5, 0.7, 0.95])
    def test_q2_matches_quadrature(self, stat, z):
        assert eval_q_nu(z, 2, stat) == pytest.approx(
            q_nu_quadrature_oracle(z, 2, stat), rel=1e-10)

    @pytest.mark.parametrize("z", [1.5, 4.0, 40.0])
    def test_q2_fermi_large_z(self, z):
        assert eval_q_nu(z, 2, FERMI) == pytest.approx(
            q_nu_quadrature_oracle(z, 2, FERMI), rel=1e-10)

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
    def test_generic_order_quadrature_path(self, nu):
        for stat, z in ((BOSE, 0.4), (FERMI, 2.0)):
            assert eval_q_nu(z, nu, stat) == pytest.approx(
                q_nu_quadrature_oracle(z, nu, stat), rel=1e-9)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            eval_q_nu(1.0, 1, BOSE)
        with pytest.raises(DomainError):
            eval_q_nu(-0.1, 1, FERMI)
        with pytest.raises(DomainError):
            eval_q_nu(0.0, 2, BOSE)

    def test_array_input(self):
        z = np.array([0.1, 0.4, 0.8])
        out = eval_q_nu(z, 1, BOSE)
        assert out.shape == z.shape
        assert np.allclose(out, -np.log1p(-z))

    @given(z=st.floats(0.005, 0.99), nu=st.sampled_from([1, 2]),
           bose=st.booleans())
    @settings(max_examples=40, deadline=None)
    def test_monotone_increasing_and_positive(self, z, nu, bose):
        stat = BOSE if bose else FERMI
        dz = min(0.004, (0.999 - z) / 2)
        lo, hi = eval_q_nu(z, nu, stat), eval_q_nu(z + dz, nu, stat)
        assert lo > 0
        assert hi > lo


class TestQNuDerivative:
    def test_ladder_value(self):
        # Q_0(1/2)/(1/2) for bosons: (0.5/0.5)/0.5 = 2
        assert eval_q_nu_derivative(0.5, 1, BOSE) == pytest.approx(2.0, rel=1e-13)

    def test_small_z_limit(self):
        assert eval_q_nu_derivative(1e-10, 1, BOSE) == pytest.approx(1.0, rel=1e-6)
        assert eval_q_nu_derivative(1e-10, 1, FERMI) == pytest.approx(1.0, rel=1e-6)

    @pytest.mark.parametrize("stat", [BOSE, FERMI], ids=["bose", "fermi"])
    def test_finite_difference_oracle_at_0p3(self, stat):
        z, delta = 0.3, 1e-5
        for nu in (1, 2):
            fd = (eval_q_nu(z + delta, nu, stat) - eval_q_nu(z - delta, nu, stat)) / (2 * delta)
            assert abs(fd - eval_q_nu_derivative(z, nu, stat)) < 1e-8

    @pytest.mark.parametrize("stat", [BOSE, FERMI], ids=["bose", "fermi"])
    def test_ladder_identity_sampled(self, stat):
        # central differences at 20 fugacities per gas, delta = 1e-5; the z
        # range keeps the oracle's own O(delta^2 Q''') truncation below the
        # tolerance (Q_1''' ~ 2/(1-z)^3 for bosons)
        zs = np.linspace(0.04, 0.85, 20) if stat.kind is GasKind.BOSE \
            else np.linspace(0.04, 3.0, 20)
        delta = 1e-5
        worst = 0.0
        for z in zs:
            for nu in (1, 2):
                fd = (eval_q_nu(z + delta, nu, stat)
                      - eval_q_nu(z - delta, nu, stat)) / (2 * delta)
                worst = max(worst, abs(fd - eval_q_nu_derivative(z, nu, stat)))
        assert worst <= 1e-8

    def test_requires_nu_ge_one(self):
        with pytest.raises(DomainError):
            eval_q_nu_derivative(0.5, 0, BOSE)


class TestMomentsFromEquilibrium:
    def test_bose_reference_point(self):
        rho, e = moments_from_equilibrium(EquilibriumParams(0.5, 1.0), BOSE)
        assert rho == pytest.approx(2 * math.pi * math.log(2.0), rel=1e-12)
        # e = Li2(1/2)/ln 2, frozen from the quadrature oracle
        e_oracle = q_nu_quadrature_oracle(0.5, 2, BOSE) / math.log(2.0)
        assert e == pytest.approx(e_oracle, rel=1e-10)
        assert e == pytest.approx(0.8399955201, rel=1e-9)

    def test_classical_energy_limit(self):
        for stat in (BOSE, FERMI):
            _, e = moments_from_equilibrium(EquilibriumParams(1e-9, 0.7), stat)
            assert e == pytest.approx(0.7 * stat.d / 2, rel=1e-8)

    def test_density_scales_inversely_with_theta0(self):
        r1, _ = moments_from_equilibrium(
            EquilibriumParams(0.3, 2.0), GasStatistics(GasKind.BOSE, theta0=1.0))
        r2, _ = moments_from_equilibrium(
            EquilibriumParams(0.3, 2.0), GasStatistics(GasKind.BOSE, theta0=4.0))
        assert r1 == pytest.approx(4.0 * r2, rel=1e-13)


class TestInvertMoments:
    def test_round_trip_fermi(self):
        stat = GasStatistics(GasKind.FERMI, theta0=1.0)
        rho, e = moments_from_equilibrium(EquilibriumParams(0.5, 2.0), stat)
        params = invert_moments(rho, e, stat)
        assert params.z == pytest.approx(0.5, abs=1e-10)
        assert params.T == pytest.approx(2.0, abs=1e-10)

    def test_classical_limit(self):
        stat = GasStatistics(GasKind.BOSE, theta0=1e-8)
        params = invert_moments(1.0, 1.0, stat)
        assert params.T == pytest.approx(1.0, rel=1e-6)
        assert params.z == pytest.approx(1e-8 / (2 * math.pi), rel=1e-6)

    @pytest.mark.parametrize("stat", [BOSE, FERMI], ids=["bose", "fermi"])
    def test_round_trip_grid(self, stat):
        zs = np.linspace(0.01, 0.99, 12) if stat.kind is GasKind.BOSE \
            else np.geomspace(0.01, 50.0, 12)
        Ts = np.geomspace(0.1, 10.0, 7)
        for z in zs:
            for T in Ts:
                rho, e = moments_from_equilibrium(EquilibriumParams(z, T), stat)
                p = invert_moments(rho, e, stat)
                assert abs(p.z - z) <= 1e-10 * max(1.0, z)
                assert abs(p.T - T) <= 1e-10 * T
                assert p.T > 0
                if stat.kind is GasKind.BOSE:
                    assert p.z < 1.0

    def test_bose_near_degenerate_never_returns_z_above_one(self):
        # push the density towards (and past) the representable z -> 1 window
        e = 1.0
        for factor in (0.999, 0.99999, 1.0 + 1e-6, 2.0, 10.0):
            z_hi = 1.0 - 1e-13
            rho_max, e_at = moments_from_equilibrium(EquilibriumParams(z_hi, 1.0), BOSE)
            try:
                p = invert_moments(rho_max * factor, e_at, BOSE)
            except NoSolutionError:
                continue
            assert 0.0 < p.z < 1.0

    def test_vectorized_matches_scalar(self):
        rho = np.array([0.5, 1.0, 2.0])
        e = np.array([0.7, 1.0, 1.3])
        z, T = invert_moments_field(rho, e, FERMI)
        for i in range(3):
            p = invert_moments(rho[i], e[i], FERMI)
            assert z[i] == pytest.approx(p.z, rel=1e-12)
            assert T[i] == pytest.approx(p.T, rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            invert_moments(-1.0, 1.0, BOSE)
        with pytest.raises(DomainError):
            invert_moments(1.0, 0.0, BOSE)

    @given(z=st.floats(0.02, 0.95), T=st.floats(0.2, 5.0), bose=st.booleans(),
           theta0=st.sampled_from([1e-6, 0.01, 1.0, 9.0]))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, z, T, bose, theta0):
        stat = GasStatistics(GasKind.BOSE if bose else GasKind.FERMI, theta0=theta0)
        rho, e = moments_from_equilibrium(EquilibriumParams(z, T), stat)
        p = invert_moments(rho, e, stat)
        rho2, e2 = moments_from_equilibrium(p, stat)
        assert rho2 == pytest.approx(rho, rel=1e-11)
        assert e2 == pytest.approx(e, rel=1e-11)


class TestFugacityFromDensity:
    def test_closed_form_inverse(self):
        for stat in (BOSE, FERMI):
            z = fugacity_from_density(1.0, 1.0, stat)
            w = stat.theta0 * 1.0 / (2 * math.pi * 1.0)
            assert eval_q_nu(z, 1, stat) == pytest.approx(w, rel=1e-13)


class TestEvalMN:
    def test_classical_limit_is_one(self):
        z = 1e-8
        stat = BOSE
        # consistent (T, e) from the forward map
        _, e = moments_from_equilibrium(EquilibriumParams(z, 1.0), stat)
        m, n = eval_mn(z, 1.0, e, stat)
        assert m == pytest.approx(1.0, rel=1e-6)
        assert n == pytest.approx(1.0, rel=1e-6)

    def test_direct_evaluation_bose(self):
        z, T = 0.5, 1.0
        _, e = moments_from_equilibrium(EquilibriumParams(z, T), BOSE)
        q0, q1 = eval_q_nu(z, 0, BOSE), eval_q_nu(z, 1, BOSE)
        den = 2 * q0 - (T / e) * q1
        m, n = eval_mn(z, T, e, BOSE)
        assert m == pytest.approx(q1 / den, rel=1e-13)
        assert n == pytest.approx(q0 / den, rel=1e-13)

    @pytest.mark.parametrize("stat", [BOSE, FERMI], ids=["bose", "fermi"])
    def test_shared_denominator_identity(self, stat):
        for z in (0.05, 0.4, 0.9):
            T = 1.3
            _, e = moments_from_equilibrium(EquilibriumParams(z, T), stat)
            m, n = eval_mn(z, T, e, stat)
            q0, q1 = eval_q_nu(z, 0, stat), eval_q_nu(z, 1, stat)
            assert n * q1 / q0 == pytest.approx(m, rel=1e-12)
