import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import chebyshev as npcheb

from cavispec.basis import (
    QuadratureRule,
    SpectralField,
    boundary_fourier_coeffs,
    chebyshev_eval,
    chebyshev_table,
    eval_field,
    eval_field_grid,
    fourier_rule,
    gauss_chebyshev_rule,
    interpolate,
    interpolate_function,
    interpolation_grid,
    sample_on_interpolation_grid,
)


def random_field(rng, N, M, scale=1.0):
    f = SpectralField.zeros(N, M)
    return f.replace(**{k: scale * rng.standard_normal(getattr(f, k).shape) for k in ("alpha", "beta", "xi", "eta")})


class TestChebyshev:
    @pytest.mark.parametrize("degree", [0, 1, 2, 7, 20])
    def test_matches_numpy(self, degree):
        x = np.linspace(-1, 1, 41)
        T, dT = chebyshev_table(degree, x)
        for j in range(degree + 1):
            c = np.zeros(j + 1)
            c[j] = 1.0
            np.testing.assert_allclose(T[j], npcheb.chebval(x, c), atol=1e-13)
            np.testing.assert_allclose(dT[j], npcheb.chebval(x, npcheb.chebder(c)), atol=1e-10 * max(1, j * j))

    @pytest.mark.parametrize("j", [0, 1, 5, 12])
    def test_endpoint_values(self, j):
        assert chebyshev_eval(j, 1.0) == pytest.approx(1.0)
        assert chebyshev_eval(j, -1.0) == pytest.approx((-1.0) ** j)
        assert chebyshev_eval(j, 1.0, derivative=True)[1] == pytest.approx(j * j)

    def test_rejects_outside_interval(self):
        with pytest.raises(ValueError):
            chebyshev_table(3, [1.01])

    def test_negative_degree(self):
        with pytest.raises(ValueError):
            chebyshev_table(-1, [0.0])


class TestQuadrature:
    @settings(max_examples=30, deadline=None)
    @given(Mq=st.integers(0, 40), data=st.data())
    def test_exact_to_degree_2Mq_plus_1(self, Mq, data):
        degree = data.draw(st.integers(0, 2 * Mq + 1))
        x, w = gauss_chebyshev_rule(Mq)
        # int_{-1}^{1} T_d(x) / sqrt(1 - x^2) dx is pi for d = 0 and 0 otherwise
        exact = np.pi if degree == 0 else 0.0
        T = chebyshev_table(degree, x, derivative=False)[degree]
        assert np.dot(w, T) == pytest.approx(exact, abs=1e-12)

    def test_not_exact_beyond(self):
        Mq = 5
        x, w = gauss_chebyshev_rule(Mq)
        T = chebyshev_table(2 * Mq + 2, x, derivative=False)[-1]
        assert abs(np.dot(w, T)) > 1.0

    def test_nodes_and_weights(self):
        x, w = gauss_chebyshev_rule(3)
        np.testing.assert_allclose(x, np.cos((2 * np.arange(4) + 1) * np.pi / 8))
        np.testing.assert_allclose(w, np.pi / 4)
        assert np.all(np.diff(x) < 0)

    @pytest.mark.parametrize("Nq", [1, 4, 9, 32])
    def test_fourier_rule_exact_for_low_modes(self, Nq):
        phi, w = fourier_rule(Nq)
        assert w.sum() == pytest.approx(2 * np.pi)
        for k in range(1, Nq):
            assert np.dot(w, np.cos(k * phi)) == pytest.approx(0.0, abs=1e-12)

    def test_rule_build(self):
        rule = QuadratureRule.build(8, 5)
        assert (rule.Nq, rule.Mq) == (8, 5)

    @pytest.mark.parametrize("bad", [-1])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            gauss_chebyshev_rule(bad)
        with pytest.raises(ValueError):
            fourier_rule(0)


class TestSpectralField:
    def test_shapes(self):
        f = SpectralField.zeros(8, 5)
        assert f.alpha.shape == (5, 6) and f.beta.shape == (3, 6)

    @pytest.mark.parametrize("N", [0, 3, 5])
    def test_bad_N(self, N):
        with pytest.raises(ValueError):
            SpectralField.zeros(N, 4)

    def test_bad_shape(self):
        f = SpectralField.zeros(4, 3)
        with pytest.raises(ValueError):
            f.replace(alpha=np.zeros((2, 4)))

    def test_immutable(self):
        f = SpectralField.zeros(4, 3)
        with pytest.raises(ValueError):
            f.alpha[0, 0] = 1.0

    def test_grid_matches_pointwise(self, rng):
        f = random_field(rng, 6, 4)
        rho, phi = np.array([-0.3, 0.7]), np.array([0.2, 4.0])
        jet = eval_field_grid(f, rho, phi)
        p = eval_field(f, 0.7, 4.0)
        assert jet.P[1, 1] == pytest.approx(p.P)
        assert jet.Q_phi[1, 1] == pytest.approx(p.Q_phi)

    def test_partials_by_differences(self, rng):
        f = random_field(rng, 8, 6)
        h = 1e-6
        p = eval_field(f, 0.3, 1.1)
        assert p.P_rho == pytest.approx((eval_field(f, 0.3 + h, 1.1).P - eval_field(f, 0.3 - h, 1.1).P) / (2 * h), rel=1e-6)
        assert p.Q_phi == pytest.approx((eval_field(f, 0.3, 1.1 + h).Q - eval_field(f, 0.3, 1.1 - h).Q) / (2 * h), rel=1e-6)


class TestInterpolation:
    @settings(max_examples=25, deadline=None)
    @given(N=st.sampled_from([2, 4, 6, 10]), M=st.integers(1, 12), seed=st.integers(0, 2**31))
    def test_idempotent(self, N, M, seed):
        # interpolating a field's own grid values returns that field, up to the unresolved sin(N/2 phi)
        f = random_field(np.random.default_rng(seed), N, M)
        P, Q = sample_on_interpolation_grid(f)
        g = interpolate(P, Q, N, M)
        for name in ("alpha", "beta", "xi", "eta"):
            np.testing.assert_allclose(getattr(g, name), getattr(f, name), atol=1e-10)

    def test_reproduces_samples(self, rng):
        N, M = 8, 6
        P = rng.standard_normal((M + 1, N))
        Q = rng.standard_normal((M + 1, N))
        f = interpolate(P, Q, N, M)
        P2, Q2 = sample_on_interpolation_grid(f)
        np.testing.assert_allclose(P2, P, atol=1e-12)
        np.testing.assert_allclose(Q2, Q, atol=1e-12)

    def test_smooth_function_converges(self):
        func = lambda R, PHI: (np.exp(R) * (2 + np.cos(PHI)), np.sin(R) * np.sin(2 * PHI))
        rho, phi = np.linspace(-1, 1, 17), np.linspace(0, 6, 13)
        R, PHI = np.meshgrid(rho, phi, indexing="ij")
        exact = func(R, PHI)[0]
        err = [np.abs(eval_field_grid(interpolate_function(func, 8, M), rho, phi).P - exact).max() for M in (4, 8, 16)]
        assert err[0] > err[1] > err[2] and err[2] < 1e-12

    def test_grid(self):
        rho, phi = interpolation_grid(4, 2)
        np.testing.assert_allclose(rho, [1, 0, -1], atol=1e-15)
        np.testing.assert_allclose(phi, [0, np.pi / 2, np.pi, 3 * np.pi / 2])

    def test_shape_check(self):
        with pytest.raises(ValueError):
            interpolate(np.zeros((3, 4)), np.zeros((3, 4)), 4, 3)


class TestBoundaryCoefficients:
    @pytest.mark.parametrize("N", [2, 4, 8, 16])
    def test_resynthesis_at_nodes(self, N, rng):
        phi = 2 * np.pi * np.arange(N) / N
        P0, Q0 = rng.standard_normal(N), rng.standard_normal(N)
        a, b, c, d = boundary_fourier_coeffs(P0, Q0, N)
        assert a.shape == (N // 2 + 1,) and b.shape == (N // 2 - 1,)
        k = np.arange(N // 2 + 1)
        ks = np.arange(1, N // 2)
        P = a @ np.cos(np.outer(k, phi)) + b @ np.sin(np.outer(ks, phi))
        np.testing.assert_allclose(P, P0, atol=1e-12)

    def test_wrong_count(self):
        with pytest.raises(ValueError):
            boundary_fourier_coeffs(np.zeros(5), np.zeros(5), 4)
