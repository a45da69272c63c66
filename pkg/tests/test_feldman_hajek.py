import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from genbridge import feldman_hajek as fh
from genbridge.drift_kernels import DriftFamily, fh_kernel_q
from genbridge.errors import ConfigurationError, DomainError
from genbridge.grid import GridFunction, make_grid

SMALL = make_grid("uniform", 4, 0.2)


class TestCovariance:
    def test_bridge_example(self):
        R = fh.cov_matrix("BB", SMALL)
        assert R.matrix[1, 2] == pytest.approx(0.12, rel=1e-14)
        assert R.matrix[2, 2] == pytest.approx(0.24, rel=1e-14)
        assert np.all(R.matrix[0] == 0)
        assert not R.matrix.flags.writeable

    def test_c_one_matches_bridge(self):
        g = make_grid("geometric", 200, 1e-4)
        np.testing.assert_allclose(fh.cov_matrix(1.0, g).matrix, fh.cov_matrix("BB", g).matrix,
                                   atol=1e-14)
        fam = fh.cov_matrix(DriftFamily.bridge(0.8), g)
        assert fam.c == 0.8 and fam.describe()["kernel"] == "BridgeC"

    @pytest.mark.parametrize("tag", ["Q", DriftFamily.power(2.0)])
    def test_bad_kernel(self, tag):
        with pytest.raises(ConfigurationError):
            fh.cov_matrix(tag, SMALL)

    def test_bad_c(self):
        with pytest.raises(DomainError):
            fh.cov_matrix(-1.0, SMALL)

    def test_grids_must_match(self):
        with pytest.raises(ConfigurationError):
            fh.whiten_spectrum(fh.cov_matrix("BB", SMALL),
                               fh.cov_matrix("BB", make_grid("uniform", 5, 0.2)))


class TestSpectrum:
    def test_identical_is_zero(self):
        R = fh.cov_matrix("BB", SMALL)
        np.testing.assert_allclose(fh.whiten_spectrum(R, R), 0.0, atol=1e-14)
        assert fh.sym_kl(R, fh.cov_matrix(1.0, SMALL)) == pytest.approx(0.0, abs=1e-14)

    def test_scaled_covariance(self):
        R = fh.cov_matrix("BB", SMALL)
        twice = fh.CovMatrix(SMALL, 2 * R.matrix, "BB")
        np.testing.assert_allclose(fh.whiten_spectrum(R, twice), 1.0, rtol=1e-13)
        # four interior nodes, each contributing (2 + 1/2 - 2) / 2
        assert fh.sym_kl(R, twice) == pytest.approx(1.0, rel=1e-13)

    def test_pinned_hs_value(self):
        g = fh.hs_grid(64)
        lam = fh.whiten_spectrum(fh.cov_matrix("BB", g), fh.cov_matrix(0.8, g))
        assert float(np.sum(lam ** 2)) == pytest.approx(0.5815033809097285, rel=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(c=st.floats(0.6, 3.0))
    def test_kl_nonnegative(self, c):
        g = make_grid("geometric", 32, 1e-3)
        assert fh.sym_kl(fh.cov_matrix("BB", g), fh.cov_matrix(c, g)) >= 0.0


class TestHsTrend:
    def test_schedule(self):
        assert fh.hs_eps_min(64) == 1e-2
        assert fh.hs_eps_min(1024) == pytest.approx(1e-8, rel=1e-12)
        assert fh.hs_eps_min(32) == 1e-2

    @pytest.mark.parametrize("c", [0.8, 1.5])
    def test_divergent(self, c):
        r = fh.hs_trend(c)
        assert r.verdict == "divergent" and r.extra["sym_kl_verdict"] == "divergent"
        assert r.extra["sym_kl_increasing"] and r.slope > 0
        assert r.ordinates[-1] / r.ordinates[0] > 4

    def test_bridge_is_bounded(self):
        r = fh.hs_trend(1.0)
        assert r.verdict == "bounded" and np.max(r.ordinates) < 1e-20

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            fh.hs_trend(0.8, [128, 64])
        with pytest.raises(ConfigurationError):
            fh.hs_trend(0.8, [1024, 4096])


class TestQcTrend:
    def test_against_dblquad(self):
        c, eps = 1.5, 1e-2
        top = 1 - eps
        ref, _ = integrate.dblquad(lambda s, t: fh_kernel_q(c, s, t) ** 2, 0, top, 0, lambda t: t,
                                   epsabs=0, epsrel=1e-10)
        assert fh.qc_l2_sq(c, [eps])[0] == pytest.approx(2 * ref, rel=1e-8)

    def test_incremental_accumulation(self):
        joint = fh.qc_l2_sq(0.75, [1e-2, 1e-3])
        assert joint[1] == pytest.approx(fh.qc_l2_sq(0.75, [1e-3])[0], rel=1e-9)

    def test_bridge_is_flat(self):
        r = fh.qc_l2_trend(1.0)
        assert r.verdict == "bounded"
        np.testing.assert_allclose(r.ordinates, 1.0, rtol=1e-10)

    @pytest.mark.parametrize("c, tol", [(0.75, 0.1), (1.5, 1e-3)])
    def test_slope_tracks_asymptote(self, c, tol):
        r = fh.qc_l2_trend(c)
        assert r.verdict == "divergent" and r.r2 > 0.99
        assert r.slope == pytest.approx(r.extra["asymptotic_slope"], rel=tol)

    def test_deeper_window_is_closer_to_asymptote(self):
        shallow = fh.qc_l2_trend(0.75, [1e-3, 1e-4, 1e-5, 1e-6])
        deep = fh.qc_l2_trend(0.75)
        target = deep.extra["asymptotic_slope"]
        assert abs(deep.slope - target) < abs(shallow.slope - target)

    def test_validation(self):
        with pytest.raises(DomainError):
            fh.qc_l2_trend(0.5)
        with pytest.raises(ConfigurationError):
            fh.qc_l2_trend(0.8, [1e-4, 1e-3])
        with pytest.raises(ConfigurationError):
            fh.qc_l2_trend(0.8, [1e-4, 1e-14])


class TestOperators:
    g = make_grid("geometric", 512, 1e-8)

    def fn(self, f):
        return GridFunction.from_callable(self.g, f)

    def test_A_kills_constants(self):
        assert np.max(np.abs(fh.apply_A(self.fn(lambda t: np.ones_like(t))).values)) < 1e-14

    def test_A_on_identity(self):
        t = self.g.nodes
        np.testing.assert_allclose(fh.apply_A(self.fn(lambda s: s)).values[:, 0],
                                   t * t / 2 - t / 2, atol=1e-7)

    def test_A_star_on_constant(self):
        t = self.g.nodes
        np.testing.assert_allclose(fh.apply_A_star(self.fn(lambda s: np.ones_like(s))).values[:, 0],
                                   0.5 - t, atol=1e-12)

    def test_factorisation_converges(self):
        devs = [fh.r_equals_aastar(make_grid("geometric", n, 1e-3)) for n in (128, 256, 512)]
        assert devs[0] / devs[1] > 1.9 and devs[1] / devs[2] > 1.9

    @pytest.mark.parametrize("c", [0.75, 1.5])
    def test_q_consistency_converges(self, c):
        devs = [fh.discrete_q_consistency(c, make_grid("geometric", n, 1e-3))
                for n in (128, 256, 512)]
        d = [r["max_deviation"] for r in devs]
        assert d[2] <= 5e-2
        assert d[0] / d[1] >= 2 and d[1] / d[2] >= 2
        assert all(r["inverse_residual"] < 1e-12 for r in devs)

    def test_q_consistency_domain(self):
        with pytest.raises(DomainError):
            fh.discrete_q_consistency(0.5, SMALL)

    def test_annihilation(self):
        rng = np.random.default_rng(11)
        g = make_grid("uniform", 256, 1e-2)
        worst = max(fh.annihilation_check(GridFunction(g, rng.standard_normal(len(g))))
                    for _ in range(20))
        assert worst <= 1e-8
