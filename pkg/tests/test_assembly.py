import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavispec.assembly import (
    BoundaryData,
    Inadmissible,
    assemble_field,
    discrete_energy,
    jacobian_fd,
    make_discretization,
    n_unknowns,
    pack,
    residual,
)
from cavispec.basis import QuadratureRule, SpectralField, eval_field_grid
from cavispec.model import AnnulusDomain, BoundaryStretch, MaterialModel
from cavispec.problem import ProblemConfig, build_discretization, initial_guess


def oval_setup(N=8, M=4, eps=0.1):
    cfg = ProblemConfig(eps=eps, lambda1=2.4, lambda2=2.0, N=N, M=M, seed_mode="affine")
    disc = build_discretization(cfg)
    return cfg, disc, initial_guess(cfg, disc)


def central_gradient(energy, y, h=1e-4):
    """Fourth-order central differences of ``energy`` at ``y``."""
    g = np.empty_like(y)
    for i in range(y.size):
        e = np.zeros_like(y)
        e[i] = h
        g[i] = (8 * (energy(y + e) - energy(y - e)) - (energy(y + 2 * e) - energy(y - 2 * e))) / (12 * h)
    return g


def random_admissible(disc, y0, rng, count, scale=3e-3):
    out = []
    while len(out) < count:
        y = y0 + scale * rng.standard_normal(y0.size)
        if disc.min_det(y) > 0:
            out.append(y)
    return out


def rotate_field(f: SpectralField, delta: float) -> SpectralField:
    """Coefficients of phi -> f(phi - delta) for a field without a Nyquist sine mode."""
    k = np.arange(f.N // 2 + 1)[:, None]
    ks = np.arange(1, f.N // 2)[:, None]

    def rot(C, S):
        c, s = np.cos(k * delta), np.sin(k * delta)
        cs, ss = np.cos(ks * delta), np.sin(ks * delta)
        C2 = C * c
        C2[1 : f.N // 2] -= S * ss
        S2 = S * cs + C[1 : f.N // 2] * ss
        return C2, S2

    a, b = rot(f.alpha, f.beta)
    x, e = rot(f.xi, f.eta)
    return SpectralField(f.N, f.M, a, b, x, e)


class TestPacking:
    @settings(max_examples=20, deadline=None)
    @given(N=st.sampled_from([2, 4, 8]), M=st.integers(1, 6), seed=st.integers(0, 2**31))
    def test_round_trip(self, N, M, seed):
        rng = np.random.default_rng(seed)
        bc = BoundaryData.from_samples(rng.standard_normal(N), rng.standard_normal(N), N)
        y = rng.standard_normal(n_unknowns(N, M))
        f = assemble_field(y, bc)
        np.testing.assert_array_equal(pack(f), y)
        # boundary row rho = 1 carries the boundary data exactly
        np.testing.assert_allclose(f.alpha.sum(axis=1), bc.a, atol=1e-12)
        np.testing.assert_allclose(f.eta.sum(axis=1), bc.d, atol=1e-12)

    def test_boundary_values_at_nodes(self):
        N = 8
        s = BoundaryStretch(2.4, 2.0)
        bc = BoundaryData.from_stretch(s, N, 1.0)
        f = assemble_field(np.random.default_rng(0).standard_normal(n_unknowns(N, 3)), bc)
        phi = 2 * np.pi * np.arange(N) / N
        jet = eval_field_grid(f, np.array([1.0]), phi)
        P0, Q0 = s.polar(phi, 1.0)
        np.testing.assert_allclose(jet.P[0], P0, atol=1e-12)
        np.testing.assert_allclose(jet.Q[0], Q0, atol=1e-12)

    def test_packing_order(self):
        f = SpectralField.zeros(4, 2)
        f = f.replace(alpha=np.array([[0, 1, 2], [0, 3, 4], [0, 5, 6.0]]), beta=np.array([[0, 7, 8.0]]),
                      xi=np.array([[0, 9, 10], [0, 11, 12], [0, 13, 14.0]]), eta=np.array([[0, 15, 16.0]]))
        np.testing.assert_array_equal(pack(f), np.arange(1, 17))

    def test_length_check(self):
        bc = BoundaryData.from_samples(np.ones(4), np.zeros(4), 4)
        with pytest.raises(ValueError):
            assemble_field(np.zeros(7), bc)

    def test_boundary_invariance(self):
        # changing the j = 0 coefficients and re-eliminating gives the same canonical state
        cfg, disc, y = oval_setup()
        f = disc.field(y)
        g = f.replace(alpha=f.alpha + np.pad(np.ones((f.alpha.shape[0], 1)), ((0, 0), (0, f.M))))
        y2 = pack(g)
        np.testing.assert_array_equal(y2, y)
        assert disc.energy(y2) == disc.energy(y)


class TestEnergy:
    def test_identity_map_energy(self):
        # D = 1, F = 1: E = (g(1) + h(1)) * area
        dom = AnnulusDomain(0.1, 1.0)
        mat = MaterialModel()
        N, M = 4, 4
        phi = 2 * np.pi * np.arange(N) / N
        bc = BoundaryData.from_samples(np.ones(N), np.zeros(N), N)
        from cavispec.basis import interpolate_function

        f = interpolate_function(lambda R, PHI: (dom.r(R), 0 * R), N, M)
        rule = QuadratureRule.build(2 * N, 400)
        E = discrete_energy(pack(f), bc, mat, dom, rule)
        exact = (mat.g(1.0) + float(mat.h(1.0))) * np.pi * (1 - 0.01)
        assert E == pytest.approx(exact, rel=1e-5)

    def test_inadmissible_sentinel(self):
        cfg, disc, y = oval_setup()
        bad = y.copy()
        bad[: cfg.M] -= 10.0  # pushes P(rho, .) through zero
        E = disc.energy(bad)
        assert isinstance(E, Inadmissible)
        assert E.D <= 0 and float(E) == float("inf")
        assert len(E.node) == 2
        with pytest.raises(ValueError):
            disc.residual(bad)

    def test_determinant_grid_shape(self):
        cfg, disc, y = oval_setup()
        assert disc.determinants(y).shape == (cfg.quad_M + 1, cfg.quad_N)

    def test_functional_wrappers(self):
        cfg, disc, y = oval_setup()
        rule = disc.rule
        assert discrete_energy(y, disc.bc, disc.material, disc.domain, rule) == disc.energy(y)
        np.testing.assert_array_equal(residual(y, disc.bc, disc.material, disc.domain, rule), disc.residual(y))
        assert jacobian_fd(y, disc.bc, disc.material, disc.domain, rule).shape == (y.size, y.size)

    def test_rotation_of_boundary_data(self):
        # rolling the boundary samples by one node rotates the state; energy and |f| are unchanged
        N, M = 8, 4
        cfg, disc, y = oval_setup(N, M)
        phi = 2 * np.pi * np.arange(N) / N
        P0, Q0 = cfg.stretch.polar(phi, cfg.gamma)
        bc_rot = BoundaryData.from_samples(np.roll(P0, 1), np.roll(Q0, 1), N)
        disc_rot = make_discretization(N, M, disc.domain, disc.material, bc_rot, Nq=cfg.quad_N, Mq=cfg.quad_M)
        f_rot = rotate_field(disc.field(y), 2 * np.pi / N)
        np.testing.assert_allclose(f_rot.alpha.sum(axis=1), bc_rot.a, atol=1e-12)
        y_rot = pack(f_rot)
        assert disc_rot.energy(y_rot) == pytest.approx(disc.energy(y), abs=1e-10)
        assert np.linalg.norm(disc_rot.residual(y_rot)) == pytest.approx(np.linalg.norm(disc.residual(y)), rel=1e-10)


class TestGradient:
    def test_residual_is_energy_gradient(self, rng):
        cfg, disc, y0 = oval_setup()
        for y in random_admissible(disc, y0, rng, 3):
            f = disc.residual(y)
            g = central_gradient(disc.energy, y)
            np.testing.assert_allclose(g, f, rtol=1e-6)

    def test_symmetric_state_has_zero_nonsymmetric_residual(self):
        cfg = ProblemConfig(eps=0.1, N=8, M=4)
        disc = build_discretization(cfg)
        y = initial_guess(cfg, disc)
        r = disc.residual(y)
        M = cfg.M
        # only the k = 0 alpha block can be nonzero
        assert np.abs(r[M:]).max() < 1e-10 * np.abs(r[:M]).max()


class TestJacobian:
    def test_complex_step_matches_central(self, rng):
        cfg, disc, y0 = oval_setup()
        y = random_admissible(disc, y0, rng, 1)[0]
        Jc = disc.jacobian_complex_step(y)
        Jd = disc.jacobian_central(y, step=1e-6)
        np.testing.assert_allclose(Jc, Jd, atol=1e-5 * np.abs(Jc).max())

    def test_symmetric(self, rng):
        cfg, disc, y0 = oval_setup()
        J = disc.jacobian(random_admissible(disc, y0, rng, 1)[0])
        np.testing.assert_allclose(J, J.T, atol=1e-12 * np.abs(J).max())

    def test_forward_differences(self, rng):
        cfg, disc, y0 = oval_setup()
        y = random_admissible(disc, y0, rng, 1)[0]
        J = disc.jacobian_fd(y)
        Jc = disc.jacobian(y)
        assert np.abs(J - Jc).max() < 1e-4 * np.abs(Jc).max()

    def test_fd_stays_admissible_near_boundary(self):
        # a state whose forward perturbation would leave the admissible set still yields a finite Jacobian
        cfg, disc, y = oval_setup()
        t_lo, t_hi = 0.0, 10.0
        d = np.zeros_like(y)
        d[: cfg.M] = -1.0
        for _ in range(60):
            mid = 0.5 * (t_lo + t_hi)
            if disc.min_det(y + mid * d) > 0:
                t_lo = mid
            else:
                t_hi = mid
        edge = y + t_lo * d
        assert disc.min_det(edge) > 0
        J = disc.jacobian_fd(edge)
        assert np.all(np.isfinite(J))
