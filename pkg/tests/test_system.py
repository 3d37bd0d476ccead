"""Flows, precision condition, contraction rate, and certificate checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qswitch import thermal
from qswitch.errors import IntegrationOverflowError, NotIncrementallyStableError
from qswitch.lattice import Box
from qswitch.system import (
    LyapunovCertificate,
    ModeDynamics,
    PowerKInf,
    SamplingParams,
    SwitchedSystem,
    check_precision,
    estimate_kappa,
    flow_exact,
    flow_rk4,
    max_eta,
    precision_threshold,
    validate_certificate,
)


def quad_cert(kappa=0.0084, alpha_lo=(1.0, 2.0), alpha_hi=(1.0, 2.0), gamma=(1.0, 2.0), n=2):
    return LyapunovCertificate(
        M=np.eye(n),
        alpha_lo=PowerKInf(*alpha_lo),
        alpha_hi=PowerKInf(*alpha_hi),
        gamma=PowerKInf(*gamma),
        kappa=kappa,
    )


class TestFlows:
    def test_pure_drift(self):
        mode = ModeDynamics.affine(np.zeros((2, 2)), [1.0, 0.0])
        assert np.allclose(flow_exact(mode, [20.0, 20.0], 5.0), [25.0, 20.0], atol=1e-12)

    def test_exponential_scaling(self):
        mode = ModeDynamics.affine(-np.eye(2), np.zeros(2))
        out = flow_exact(mode, [2.0, 4.0], math.log(2.0))
        assert np.allclose(out, [1.0, 2.0], atol=1e-12)

    def test_exact_matches_fine_rk4_oracle(self, thermal_sys):
        x = np.array([21.0, 21.0])
        exact = flow_exact(thermal_sys.modes[0], x, 5.0)
        oracle = flow_rk4(thermal_sys.modes[0], x, 5.0, 10_000)
        assert np.abs(exact - oracle).max() <= 1e-9

    @pytest.mark.parametrize("substeps", [1, 7, 100])
    def test_rk4_static_identity(self, substeps):
        mode = ModeDynamics.affine(np.zeros((2, 2)), np.zeros(2))
        assert np.array_equal(flow_rk4(mode, [3.0, -1.0], 2.0, substeps), [3.0, -1.0])

    def test_rk4_closed_form(self):
        mode = ModeDynamics.affine(-np.eye(2), np.zeros(2))
        out = flow_rk4(mode, [1.0, 0.0], 0.1, 100)
        assert abs(out[0] - math.exp(-0.1)) <= 1e-8
        assert out[1] == 0.0

    def test_rk4_cross_checks_exact_on_heater_mode(self, thermal_sys):
        x = np.array([20.0, 20.0])
        a = flow_exact(thermal_sys.modes[1], x, 5.0)
        b = flow_rk4(thermal_sys.modes[1], x, 5.0, 1000)
        assert np.abs(a - b).max() <= 1e-6

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_exact_overflow(self):
        mode = ModeDynamics.affine([[500.0]], [0.0])
        with pytest.raises(IntegrationOverflowError):
            flow_exact(mode, [1.0], 5.0)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_rk4_overflow(self):
        mode = ModeDynamics.generic(1, lambda x: x**3)
        with pytest.raises(IntegrationOverflowError):
            flow_rk4(mode, [1e200], 1.0, 10)

    def test_rk4_requires_substeps(self):
        mode = ModeDynamics.affine(np.zeros((1, 1)), [0.0])
        with pytest.raises(ValueError):
            flow_rk4(mode, [0.0], 1.0, 0)

    @settings(max_examples=50, deadline=None)
    @given(
        t=st.floats(0.1, 5.0),
        u=st.floats(0.1, 5.0),
        x1=st.floats(15.0, 25.0),
        x2=st.floats(15.0, 25.0),
    )
    def test_semigroup(self, t, u, x1, x2):
        mode = thermal.thermal_system().modes[1]
        x = np.array([x1, x2])
        a = flow_exact(mode, flow_exact(mode, x, t), u)
        b = flow_exact(mode, x, t + u)
        assert np.abs(a - b).max() <= 1e-9

    def test_contraction_witness(self, thermal_sys):
        kappa = estimate_kappa(thermal_sys)
        gen = np.random.default_rng(0)
        X = gen.uniform(17.0, 23.0, (200, 2))
        Y = gen.uniform(17.0, 23.0, (200, 2))
        bound = math.exp(-kappa * 5.0) * ((X - Y) ** 2).sum(axis=-1)
        for mode in thermal_sys.modes:
            d = flow_exact(mode, X, 5.0) - flow_exact(mode, Y, 5.0)
            assert ((d**2).sum(axis=-1) <= bound * (1 + 1e-9)).all()


class TestPrecision:
    def test_paper_parameter_sets_pass(self, thermal_cert):
        assert check_precision(thermal_cert, SamplingParams(5.0, 0.0014, 0.25))
        assert check_precision(thermal_cert, SamplingParams(5.0, 0.0035, 0.5))

    def test_threshold_value_against_direct_evaluation(self, thermal_cert):
        # independent evaluation of the quadratic-form threshold
        q = math.exp(-0.0084 * 5.0)
        expect = 0.0014 * (1.0 + math.sqrt((4.0 + q) / (1.0 - q)))
        got = precision_threshold(thermal_cert, 5.0, 0.0014)
        assert abs(got - expect) <= 1e-15
        assert abs(got - 0.01677) <= 1e-5

    def test_coarse_lattice_fails(self, thermal_cert):
        # eta = 0.02 needs precision ~0.2396, so epsilon just above eta fails
        need = precision_threshold(thermal_cert, 5.0, 0.02)
        assert abs(need - 0.2397) <= 1e-4
        assert not check_precision(thermal_cert, SamplingParams(5.0, 0.02, 0.021))

    @settings(max_examples=100, deadline=None)
    @given(
        eta=st.floats(1e-5, 0.02),
        eps=st.floats(1e-4, 0.5),
        shrink=st.floats(0.1, 1.0),
        grow=st.floats(1.0, 4.0),
    )
    def test_monotone(self, eta, eps, shrink, grow):
        cert = quad_cert()
        if eta >= eps:
            return
        p = SamplingParams(5.0, eta, eps)
        if check_precision(cert, p):
            assert check_precision(cert, SamplingParams(5.0, eta, eps * grow))
            assert check_precision(cert, SamplingParams(5.0, eta * shrink, eps))

    def test_max_eta_value(self, thermal_cert):
        q = math.exp(-0.0084 * 5.0)
        expect = 0.25 / (1.0 + math.sqrt((4.0 + q) / (1.0 - q)))
        got = max_eta(thermal_cert, 5.0, 0.25)
        assert abs(got - expect) <= 1e-6
        assert abs(got - 0.02087) <= 1e-5

    def test_max_eta_is_maximal_and_admissible(self, thermal_cert):
        got = max_eta(thermal_cert, 5.0, 0.25)
        assert check_precision(thermal_cert, SamplingParams(5.0, got, 0.25))
        assert precision_threshold(thermal_cert, 5.0, got * (1 + 1e-6)) > 0.25

    def test_max_eta_zero_epsilon(self, thermal_cert):
        assert max_eta(thermal_cert, 5.0, 0.0) == 0.0


class TestKappaEstimate:
    def test_thermal_value(self, thermal_sys):
        # symmetric 2x2 eigenvalue formula as an independent oracle
        def lmax(A):
            S = 0.5 * (A + A.T)
            mean = 0.5 * (S[0, 0] + S[1, 1])
            return mean + math.hypot(0.5 * (S[0, 0] - S[1, 1]), S[0, 1])

        expect = -2.0 * max(lmax(m.A) for m in thermal_sys.modes)
        got = estimate_kappa(thermal_sys)
        assert abs(got - expect) <= 1e-12
        assert abs(got - 0.00829) <= 2e-4

    def test_identity_decay(self):
        sys_ = SwitchedSystem(
            (ModeDynamics.affine(-np.eye(2), np.zeros(2)),
             ModeDynamics.affine(-np.eye(2), np.ones(2)))
        )
        assert abs(estimate_kappa(sys_) - 2.0) <= 1e-12

    def test_skew_rejected(self):
        sys_ = SwitchedSystem((ModeDynamics.affine([[0.0, 1.0], [-1.0, 0.0]], np.zeros(2)),))
        with pytest.raises(NotIncrementallyStableError):
            estimate_kappa(sys_)

    def test_requires_identity_metric(self, thermal_sys):
        cert = LyapunovCertificate(
            M=np.diag([2.0, 1.0]), alpha_lo=PowerKInf(1, 2), alpha_hi=PowerKInf(2, 2),
            gamma=PowerKInf(1, 2), kappa=0.0084,
        )
        with pytest.raises(ValueError):
            estimate_kappa(thermal_sys, cert)

    def test_requires_affine(self):
        sys_ = SwitchedSystem((ModeDynamics.generic(1, lambda x: -x),))
        with pytest.raises(ValueError):
            estimate_kappa(sys_)


class TestValidateCertificate:
    def test_quadratic_sandwich_is_tight(self, thermal_sys, thermal_cert):
        box = Box([17.5, 17.5], [22.5, 22.5])
        rep = validate_certificate(thermal_sys, thermal_cert, box, 10_000)
        assert rep.sandwich_lower.ok and abs(rep.sandwich_lower.worst_margin) <= 1e-9
        assert rep.sandwich_upper.ok and abs(rep.sandwich_upper.worst_margin) <= 1e-9

    def test_gamma_margin_matches_brute_force(self, thermal_sys, thermal_cert):
        # the quadratic modulus claim fails pointwise on a box: the report
        # must say so, with the margin reproduced by direct recomputation
        from scipy.stats import qmc

        box = Box([0.0, 0.0], [1.0, 1.0])
        rep = validate_certificate(thermal_sys, thermal_cert, box, 2000)
        u = qmc.Halton(d=8, scramble=False).random(2000).reshape(2000, 4, 2)
        pts = box.lo + u * (box.hi - box.lo)
        worst = -math.inf
        for x1, x2, y1, y2 in pts:
            dv = abs(
                float(((x1 - x2) ** 2).sum()) - float(((y1 - y2) ** 2).sum())
            )
            arg = np.linalg.norm(x1 - y1) + np.linalg.norm(x2 - y2)
            worst = max(worst, dv - arg**2)
        assert not rep.gamma_bound.ok
        assert abs(rep.gamma_bound.worst_margin - worst) <= 1e-12

    def test_inflated_lower_bound_fails(self, thermal_sys):
        cert = quad_cert(alpha_lo=(2.0, 2.0))
        box = Box([17.5, 17.5], [22.5, 22.5])
        rep = validate_certificate(thermal_sys, cert, box, 1000)
        assert not rep.sandwich_lower.ok
        assert rep.sandwich_lower.worst_margin > 1.0

    def test_deflated_upper_bound_fails(self, thermal_sys):
        cert = quad_cert(alpha_hi=(0.5, 2.0))
        box = Box([17.5, 17.5], [22.5, 22.5])
        rep = validate_certificate(thermal_sys, cert, box, 1000)
        assert not rep.sandwich_upper.ok

    def test_deterministic(self, thermal_sys, thermal_cert):
        box = Box([20.0, 20.0], [22.0, 22.0])
        a = validate_certificate(thermal_sys, thermal_cert, box, 500)
        b = validate_certificate(thermal_sys, thermal_cert, box, 500)
        assert a == b

    def test_sample_count_validated(self, thermal_sys, thermal_cert):
        with pytest.raises(ValueError):
            validate_certificate(thermal_sys, thermal_cert, Box([0, 0], [1, 1]), 0)


class TestTypes:
    @settings(max_examples=100, deadline=None)
    @given(c=st.floats(1e-3, 1e3), e=st.floats(1.0, 4.0), r=st.floats(1e-6, 1e3))
    def test_power_kinf_inverse(self, c, e, r):
        k = PowerKInf(c, e)
        assert abs(k.inv(k(r)) - r) <= 1e-9 * max(1.0, r)

    def test_power_kinf_validation(self):
        with pytest.raises(ValueError):
            PowerKInf(0.0, 2.0)
        with pytest.raises(ValueError):
            PowerKInf(1.0, 0.5)

    def test_sampling_params_validation(self):
        with pytest.raises(ValueError):
            SamplingParams(tau=0.0, eta=0.1, epsilon=0.2)
        with pytest.raises(ValueError):
            SamplingParams(tau=1.0, eta=0.2, epsilon=0.2)

    def test_certificate_requires_spd(self):
        quad_cert()  # baseline constructs fine
        with pytest.raises(ValueError):
            LyapunovCertificate(
                M=np.array([[1.0, 2.0], [2.0, 1.0]]),  # indefinite
                alpha_lo=PowerKInf(1, 2), alpha_hi=PowerKInf(1, 2),
                gamma=PowerKInf(1, 2), kappa=1.0,
            )

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            ModeDynamics.affine(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ValueError):
            ModeDynamics.affine(np.zeros((2, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            ModeDynamics.affine(np.full((2, 2), np.nan), np.zeros(2))

    def test_system_validation(self):
        with pytest.raises(ValueError):
            SwitchedSystem(())
        with pytest.raises(ValueError):
            SwitchedSystem(
                (ModeDynamics.affine(np.zeros((1, 1)), [0.0]),
                 ModeDynamics.affine(np.zeros((2, 2)), np.zeros(2)))
            )
