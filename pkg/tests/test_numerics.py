"""Grids, grid functions, the quadrature oracle and the random streams."""

import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from genbridge import rng
from genbridge.errors import ConfigurationError, OracleFailure
from genbridge.grid import GridFunction, TimeGrid, make_grid
from genbridge.quadrature import quad_oracle, quad_with_error


class TestGrid:
    def test_uniform_example(self):
        g = make_grid("uniform", 4, 0.2)
        np.testing.assert_allclose(g.nodes, [0, 0.2, 0.4, 0.6, 0.8], atol=1e-15)
        assert g.n == 4 and len(g) == 5

    def test_geometric_example(self):
        np.testing.assert_allclose(make_grid("geometric", 2, 0.25).nodes, [0, 0.5, 0.75],
                                   atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(2, 3000), log_eps=st.floats(-12, -2))
    def test_geometric_invariants(self, n, log_eps):
        eps = 10.0 ** log_eps
        g = make_grid("geometric", n, eps)
        assert g.nodes[0] == 0.0 and np.all(np.diff(g.nodes) > 0) and g.nodes[-1] < 1
        # nodes are stored as t, so 1 - t carries an absolute error of one ulp of 1
        rtol = 1e-15 / eps
        assert g.tau[-1] == pytest.approx(eps, rel=rtol)
        ratios = g.tau[1:] / g.tau[:-1]
        np.testing.assert_allclose(ratios, eps ** (1.0 / n), rtol=2 * rtol)

    @pytest.mark.parametrize("args", [("uniform", 1, 1e-3), ("geometric", 2.5, 1e-3),
                                      ("geometric", 8, 0.0), ("geometric", 8, 1.0),
                                      ("log", 8, 1e-3)])
    def test_invalid(self, args):
        with pytest.raises(ConfigurationError):
            make_grid(*args)

    @pytest.mark.parametrize("nodes", [[0.1, 0.5], [0, 0.5, 0.5], [0, 1.0], [0]])
    def test_from_nodes_validates(self, nodes):
        with pytest.raises(ConfigurationError):
            TimeGrid.from_nodes(nodes)

    def test_nodes_are_read_only(self):
        g = make_grid("uniform", 4, 0.2)
        with pytest.raises(ValueError):
            g.nodes[1] = 0.3

    def test_index_of(self):
        g = make_grid("geometric", 1024, 1e-4)
        assert g.index_of(0.99) == 512
        with pytest.raises(ConfigurationError):
            g.index_of(0.5)


class TestGridFunction:
    def test_shape_and_tags(self):
        g = make_grid("uniform", 4, 0.2)
        f = GridFunction.from_callable(g, lambda t: t * t)
        assert f.values.shape == (5, 1) and f.dim == 1
        with pytest.raises(ConfigurationError):
            GridFunction(g, np.zeros(4))
        with pytest.raises(ConfigurationError):
            GridFunction(g, np.zeros(5), "integral")
        with pytest.raises(ConfigurationError):
            GridFunction(g, np.array([0, 1, np.nan, 0, 0]))

    def test_partner_check(self):
        a = GridFunction(make_grid("uniform", 4, 0.2), np.zeros(5))
        b = GridFunction(make_grid("uniform", 4, 0.1), np.zeros(5))
        with pytest.raises(ConfigurationError):
            a.check_partner(b)
        a.check_partner(GridFunction(make_grid("uniform", 4, 0.2), np.ones(5)))


class TestQuadrature:
    def test_examples(self):
        assert quad_oracle(lambda x: 1.0, 0, 1, 1e-10) == pytest.approx(1.0, abs=1e-12)
        assert quad_oracle(lambda x: np.log1p(-x) ** 2, 0, 1 - 1e-8, 1e-8) == pytest.approx(
            2.0, abs=1e-5)
        assert quad_oracle(lambda r: (1 - r) ** -2.0, 0, 0.5, 1e-10) == pytest.approx(1.0, abs=1e-10)

    def test_scalar_integrands_are_supported(self):
        assert quad_oracle(lambda x: math.sin(x), 0, math.pi) == pytest.approx(2.0, abs=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(-2, 2), w=st.floats(0, 3), k=st.floats(0.1, 20))
    def test_against_scipy(self, a, w, k):
        f = lambda x: np.cos(k * x) * np.exp(-x * x)
        ref = integrate.quad(f, a, a + w, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        val, err = quad_with_error(f, a, a + w, tol=1e-11)
        assert abs(val - ref) <= 1e-10 and err <= 1e-11

    def test_deterministic(self):
        f = lambda x: 1 / np.sqrt(x + 1e-9)
        assert quad_oracle(f, 0, 1) == quad_oracle(f, 0, 1)

    def test_failures_are_loud(self):
        with pytest.raises(OracleFailure):
            quad_oracle(lambda x: 1 / x, 0.0, 1.0)
        with pytest.raises(OracleFailure):
            quad_oracle(lambda x: np.where(x > 0.3, np.inf, 1.0), 0, 1)
        with pytest.raises(ConfigurationError):
            quad_oracle(lambda x: x, 1, 0)

    def test_empty_interval(self):
        assert quad_with_error(lambda x: x, 0.5, 0.5) == (0.0, 0.0)


class TestStreams:
    def test_rows_depend_only_on_path_index(self):
        whole = rng.path_normals(11, range(0, 40), 7)
        part = rng.path_normals(11, range(25, 40), 7)
        np.testing.assert_array_equal(whole[25:], part)

    def test_thread_count_does_not_matter(self):
        a = rng.path_normals(3, range(100), 5, threads=1)
        b = rng.path_normals(3, range(100), 5, threads=4)
        np.testing.assert_array_equal(a, b)

    def test_streams_and_seeds_differ(self):
        a = rng.path_normals(3, range(4), 50)
        assert not np.array_equal(a, rng.path_normals(4, range(4), 50))
        assert not np.array_equal(a, rng.path_normals(3, range(4), 50, stream=rng.SUBSTEPS))
        assert not np.array_equal(a[0], a[1])

    def test_normal_moments(self):
        x = rng.path_normals(0, range(2000), 100).ravel()
        se = 1 / math.sqrt(x.size)
        assert abs(x.mean()) < 4 * se and abs(x.var() - 1) < 4 * math.sqrt(2) * se

    def test_env_threads(self, monkeypatch):
        monkeypatch.setenv("GENBRIDGE_THREADS", "3")
        assert rng.default_threads() == 3
        monkeypatch.setenv("GENBRIDGE_THREADS", "many")
        with pytest.raises(ConfigurationError):
            rng.default_threads()

    @pytest.mark.parametrize("seed", [-1, 2 ** 64, 1.5])
    def test_seed_range(self, seed):
        with pytest.raises(ConfigurationError):
            rng.check_seed(seed)

    def test_concurrent_callers_agree(self):
        out = {}

        def work(i):
            out[i] = rng.path_normals(5, range(50), 20)

        ts = [threading.Thread(target=work, args=(i,)) for i in range(4)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        for i in range(1, 4):
            np.testing.assert_array_equal(out[0], out[i])
