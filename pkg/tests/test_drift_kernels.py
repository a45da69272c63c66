import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genbridge.drift_kernels import (
    DriftFamily, aii_kernel, aii_mass, bb_cov, cov_Q, cov_Q_quad, drift_coefficient,
    fh_kernel_q, fh_kernel_q_quad, kernel_value, log_phi, log_phi_quad, smoothing_residual,
    tanh_perturbation,
)
from genbridge.errors import ConfigurationError, DomainError, NumericalFailure

BRIDGE1 = DriftFamily.bridge(1.0)
POWER2 = DriftFamily.power(2.0)

times = st.floats(0.0, 0.999, allow_nan=False)
cs = st.floats(0.2, 3.0).filter(lambda c: abs(c - 0.5) > 1e-3)


class TestFamilies:
    @pytest.mark.parametrize("kwargs", [
        dict(variant="BridgeC", c=0.0),
        dict(variant="BridgeC", c=-1.0),
        dict(variant="PowerAlpha", alpha=1.0),
        dict(variant="PerturbedBridge", delta=0.5, kappa=0.1),
        dict(variant="PerturbedBridge", delta=0.25, kappa=0.36),
        dict(variant="Nope"),
    ])
    def test_invalid_parameters_rejected(self, kwargs):
        with pytest.raises(ConfigurationError):
            DriftFamily(**kwargs)

    def test_builtin_perturbation_bound(self):
        fam = DriftFamily.perturbed(0.25, 0.35)
        assert fam.kappa ** 2 <= (1 - 2 * fam.delta) / 4
        x = np.linspace(-50, 50, 1001)[:, None]
        fx = fam.f_pert(0.3, x)
        assert np.all(fx ** 2 <= 0.35 ** 2 * (x ** 2 + 1))

    def test_tanh_is_componentwise(self):
        f = tanh_perturbation(0.2)
        np.testing.assert_allclose(f(0.0, np.array([[1.0, -2.0]])), 0.2 * np.tanh([[1.0, -2.0]]))


class TestDriftAndPhi:
    def test_examples(self):
        assert drift_coefficient(BRIDGE1, 0.5) == 2.0
        assert drift_coefficient(POWER2, 0.9) == pytest.approx(100.0, rel=1e-14)
        assert drift_coefficient(DriftFamily.bridge(0.75), 0.0) == 0.75
        assert log_phi(DriftFamily.bridge(2.0), 0.5) == pytest.approx(2 * math.log(2), rel=1e-15)
        assert log_phi(POWER2, 0.5) == pytest.approx(1.0, rel=1e-15)
        assert log_phi(BRIDGE1, 0.0) == 0.0 and log_phi(POWER2, 0.0) == 0.0

    @pytest.mark.parametrize("t", [1.0, 1.5, -0.1, float("nan")])
    def test_domain(self, t):
        with pytest.raises(DomainError):
            drift_coefficient(BRIDGE1, t)
        with pytest.raises(DomainError):
            log_phi(POWER2, t)

    def test_perturbed_has_no_explicit_drift(self):
        with pytest.raises(ConfigurationError):
            drift_coefficient(DriftFamily.perturbed(0.25, 0.35), 0.5)

    @settings(max_examples=40, deadline=None)
    @given(t=times, alpha=st.floats(1.1, 3.0), c=st.floats(0.1, 3.0))
    def test_log_phi_matches_quadrature(self, t, alpha, c):
        for fam in (DriftFamily.bridge(c), DriftFamily.power(alpha)):
            assert log_phi(fam, t) == pytest.approx(log_phi_quad(fam, t), rel=1e-10, abs=1e-12)

    def test_monotone_and_unbounded(self):
        t = 1 - 2.0 ** -np.arange(0, 40)
        for fam in (BRIDGE1, DriftFamily.bridge(0.3), POWER2, DriftFamily.power(1.2)):
            lam = log_phi(fam, t)
            assert np.all(np.diff(lam) > 0) and lam[-1] > 8


class TestApproximateIdentity:
    def test_kernel_examples(self):
        assert aii_kernel(BRIDGE1, 0.0, 0.5) == pytest.approx(0.5, rel=1e-15)
        assert aii_kernel(BRIDGE1, 0.3, 0.3) == pytest.approx(1 / 0.7, rel=1e-15)
        assert aii_kernel(POWER2, 0.0, 0.5) == pytest.approx(math.exp(-1), rel=1e-15)
        with pytest.raises(DomainError):
            aii_kernel(BRIDGE1, 0.6, 0.5)

    def test_mass_examples(self):
        assert aii_mass(BRIDGE1, 0.75) == pytest.approx(0.75, rel=1e-15)
        assert aii_mass(BRIDGE1, 1 - 1e-6) == pytest.approx(0.999999, rel=1e-12)
        assert aii_mass(BRIDGE1, 1 - 1e-6, 0.5) == pytest.approx(1e-6, rel=1e-8)
        with pytest.raises(DomainError):
            aii_mass(BRIDGE1, 0.5, 0.6)

    @pytest.mark.parametrize("fam", [BRIDGE1, DriftFamily.bridge(0.3), POWER2,
                                     DriftFamily.power(1.5)])
    def test_mass_limits(self, fam):
        t = 1 - 2.0 ** -np.arange(1, 51)
        full = aii_mass(fam, t)
        partial = aii_mass(fam, t, 0.25)
        assert np.all(np.diff(full) >= 0) and np.all(full <= 1)
        assert full[-1] > 1 - 1e-3
        assert np.all(np.diff(partial) <= 0) and partial[-1] < 1e-3

    @pytest.mark.parametrize("fam", [BRIDGE1, DriftFamily.bridge(0.3), POWER2])
    def test_mass_matches_kernel_quadrature(self, fam):
        for t, t0 in ((0.5, 0.5), (0.9, 0.3), (0.99, 0.9)):
            q = kernel_value("mass", fam, 0.0, t, t0, method="quadrature").value
            assert aii_mass(fam, t, t0) == pytest.approx(q, rel=1e-9)

    @pytest.mark.parametrize("fam", [DriftFamily.bridge(0.75), DriftFamily.bridge(3.0),
                                     DriftFamily.power(1.5), POWER2])
    @pytest.mark.parametrize("sigma", [lambda s: s, lambda s: np.cos(np.pi * s)])
    def test_smoothing_residual_vanishes(self, fam, sigma):
        res = [abs(smoothing_residual(fam, sigma, 1 - 2.0 ** -k)) for k in (2, 6, 12, 20)]
        assert res[-1] < 1e-3 * max(res[0], 1e-3)
        assert res[-1] < 1e-4

    def test_smoothing_residual_refuses_unresolvable_kernel(self):
        with pytest.raises(NumericalFailure):
            smoothing_residual(POWER2, lambda s: s, 1 - 2.0 ** -30)


class TestCovQ:
    def test_examples(self):
        assert cov_Q(1.0, 0.3, 0.7) == pytest.approx(0.09, rel=1e-14)
        assert cov_Q(0.8, 0.0, 0.6) == 0.0
        assert cov_Q(0.5, 0.5, 0.5) == pytest.approx(0.5 * math.log(2), rel=1e-14)
        assert cov_Q(0.5, 0.5, 0.5) == pytest.approx(cov_Q_quad(0.5, 0.5, 0.5), rel=1e-12)

    def test_collapse_to_bridge(self):
        g = np.linspace(0, 0.99, 101)
        S, T = np.meshgrid(g, g)
        np.testing.assert_allclose(cov_Q(1.0, S, T), bb_cov(S, T), atol=1e-12, rtol=0)

    @settings(max_examples=60, deadline=None)
    @given(c=cs, s=times, t=times)
    def test_closed_form_matches_integral(self, c, s, t):
        assert cov_Q(c, s, t) == pytest.approx(cov_Q_quad(c, s, t), rel=1e-8, abs=1e-300)

    @settings(max_examples=60, deadline=None)
    @given(c=st.floats(0.05, 4.0), s=times, t=times)
    def test_symmetric_and_nonnegative(self, c, s, t):
        assert cov_Q(c, s, t) == cov_Q(c, t, s)
        assert cov_Q(c, s, t) >= 0.0

    def test_continuous_through_half(self):
        vals = [cov_Q(c, 0.4, 0.8) for c in (0.5 - 1e-9, 0.5, 0.5 + 1e-9)]
        np.testing.assert_allclose(vals, vals[1], rtol=1e-7)

    def test_domain(self):
        with pytest.raises(DomainError):
            cov_Q(1.0, 1.0, 0.5)
        with pytest.raises(DomainError):
            cov_Q(0.0, 0.1, 0.5)


class TestFhKernel:
    def test_examples(self):
        assert fh_kernel_q(1.0, 0.2, 0.9) == -1.0
        assert fh_kernel_q(0.75, 0.0, 0.0) == pytest.approx(-0.75, rel=1e-15)
        assert fh_kernel_q(0.75, 0.5, 0.5) == pytest.approx(fh_kernel_q_quad(0.75, 0.5, 0.5),
                                                            rel=1e-9)

    def test_c_one_is_minus_one(self):
        g = np.linspace(0, 0.99, 101)
        S, T = np.meshgrid(g, g)
        np.testing.assert_allclose(fh_kernel_q(1.0, S, T), -1.0, atol=1e-12, rtol=0)

    @settings(max_examples=60, deadline=None)
    @given(c=cs, s=times, t=times)
    def test_closed_form_matches_integral(self, c, s, t):
        assert fh_kernel_q(c, s, t) == pytest.approx(fh_kernel_q_quad(c, s, t), rel=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(c=st.floats(0.05, 4.0), s=times, t=times)
    def test_symmetric(self, c, s, t):
        assert fh_kernel_q(c, s, t) == fh_kernel_q(c, t, s)

    def test_half_is_continuous_and_matches_quadrature(self):
        q = fh_kernel_q(0.5, 0.3, 0.6)
        assert q == pytest.approx(fh_kernel_q_quad(0.5, 0.3, 0.6), rel=1e-10)
        assert q == pytest.approx(fh_kernel_q(0.5 + 1e-9, 0.3, 0.6), rel=1e-7)


class TestKernelValue:
    @pytest.mark.parametrize("kernel", ["log-phi", "aii", "mass", "cov-q", "fh-q"])
    def test_closed_form_and_quadrature_agree(self, kernel):
        fam = DriftFamily.bridge(0.75)
        a = kernel_value(kernel, fam, 0.3, 0.8, method="closed_form")
        b = kernel_value(kernel, fam, 0.3, 0.8, method="quadrature")
        assert (a.method, b.method) == ("closed_form", "quadrature")
        assert a.value == pytest.approx(b.value, rel=1e-9)

    def test_rejects_unknown(self):
        with pytest.raises(ConfigurationError):
            kernel_value("nope", BRIDGE1, 0.1, 0.2)
        with pytest.raises(ConfigurationError):
            kernel_value("cov-q", POWER2, 0.1, 0.2)
