import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twocentre import dynamics as dy
from twocentre import elliptic as el
from twocentre import systems as sy

P = sy.SystemParams(2.0, 1.0, 1.0)


def unit_sphere(rng, n):
    q = rng.normal(size=(n, 3))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def interior_leaf_point(rng, nu, p=P):
    while True:
        q = unit_sphere(rng, 1)[0]
        if el.chart_interior(*el.to_elliptic(q, p), p, 1e-3):
            M = rng.uniform(-1, 1, 3)
            M += (nu - M @ q) * q
            return np.concatenate([M, q])


class TestCoordinates:
    @pytest.mark.parametrize("q,expected", [((0, 0, 1), (1, 2)), ((1, 0, 0), (0, 1)), ((0, 1, 0), (0, 2))])
    def test_special_points(self, q, expected):
        np.testing.assert_allclose(el.to_elliptic(q, P), expected, atol=1e-15)

    def test_inverse_at_north_pole(self):
        np.testing.assert_allclose(el.from_elliptic(1.0, 2.0, P), (0, 0, 1), atol=1e-15)

    def test_inverse_arithmetic(self):
        q = el.from_elliptic(0.5, 1.5, P)
        np.testing.assert_allclose(q, (math.sqrt(0.375), 0.5, math.sqrt(0.375)), atol=1e-15)

    def test_out_of_range(self):
        with pytest.raises(el.ChartError):
            el.from_elliptic(1.5, 1.8, P)

    def test_needs_spherical(self):
        with pytest.raises(ValueError):
            el.to_elliptic((0, 0, 1), sy.SystemParams(1.0, 2.0, 1.0, sy.SystemSignature.HYPERBOLIC))

    def test_root_ordering(self, rng):
        q = unit_sphere(rng, 10_000)
        u1, u2 = el.to_elliptic(q, P)
        assert np.all((u1 >= 0) & (u1 <= P.B + 1e-12) & (u2 >= P.B - 1e-12) & (u2 <= P.A + 1e-12))

    def test_roots_solve_the_defining_equation(self, rng):
        q = unit_sphere(rng, 1000)
        u1, u2 = el.to_elliptic(q, P)
        ok = el.chart_interior(u1, u2, P, 1e-3)
        for u in (u1, u2):
            assert np.max(np.abs(el.phi_function(u[ok], q[ok], P))) <= 1e-10

    def test_round_trip(self, rng):
        q = np.abs(unit_sphere(rng, 1000))
        u1, u2 = el.to_elliptic(q, P)
        back = np.stack(el.from_elliptic(u1, u2, P), axis=-1)
        assert np.max(np.abs(back - q)) <= 1e-10

    @given(st.floats(0.02, 0.98), st.floats(0.02, 0.98), st.sampled_from([(1, 1, 1), (-1, 1, -1), (1, -1, -1)]))
    def test_round_trip_from_elliptic(self, a, b, signs):
        u1, u2 = a * P.B, P.B + b * (P.A - P.B)
        q = el.from_elliptic(u1, u2, P, signs)
        assert sum(c * c for c in q) == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(el.to_elliptic(np.array(q), P), (u1, u2), atol=1e-12)

    def test_R_identity(self, rng):
        q = unit_sphere(rng, 10_000)
        u1, u2 = el.to_elliptic(q, P)
        lhs = el.R_in_elliptic(u1, u2, np.sign(q[:, 2]))
        assert np.max(np.abs(lhs - sy.R_value(tuple(q.T), P))) <= 1e-12

    def test_R_at_centres_and_pole(self):
        assert el.R_in_elliptic(1.0, 1.0) == 0.0
        assert el.R_in_elliptic(1.0, 2.0) == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-15)

    def test_f_poly(self):
        assert el.f_poly(0.5, P) == pytest.approx(-1.5)
        u1 = np.linspace(0.01, 0.99, 50)
        assert np.all(el.f_poly(u1, P) < 0)
        g11, g22 = el.metric_diagonal(u1, 1.5, P)
        assert np.all(g11 > 0) and np.all(g22 > 0)

    def test_jacobian_against_differences(self):
        u1, u2, h = 0.4, 1.3, 1e-6
        J = el.jacobian(u1, u2, P)
        fd1 = (np.array(el.from_elliptic(u1 + h, u2, P)) - np.array(el.from_elliptic(u1 - h, u2, P))) / (2 * h)
        np.testing.assert_allclose(J[:, 0], fd1, atol=1e-8)


class TestGauge:
    def test_vanishes_on_equator(self):
        np.testing.assert_array_equal(el.gauge_A((1.0, 0.0, 0.0), 0.7), 0.0)

    def test_zero_charge(self, rng):
        q = unit_sphere(rng, 5)
        assert np.all(el.gauge_A(q, 0.0) == 0)
        assert el.verify_dA(q[0], 0.0) == 0.0

    def test_pole_guard(self):
        with pytest.raises(el.ChartError, match="pole"):
            el.gauge_A((0.0, 0.0, 1.0), 0.5)

    @pytest.mark.parametrize("nu", [0.5, 1.0, -1.5])
    def test_flux_density(self, rng, nu):
        # outward-oriented coefficient is -nu for this potential
        for q in unit_sphere(rng, 20):
            if q[0] ** 2 + q[1] ** 2 > 1e-2:
                assert abs(abs(el.verify_dA(q, nu)) - abs(nu)) <= 1e-6

    def test_pullback_density(self, rng):
        for _ in range(10):
            u1, u2 = rng.uniform(0.05, 0.95) * P.B, P.B + rng.uniform(0.05, 0.95) * (P.A - P.B)
            curl = el.pullback_curl(u1, u2, 0.5, P)
            assert abs(curl - el.field_density(u1, u2, 0.5, P)) <= 1e-6


class TestPhase:
    @pytest.mark.parametrize("nu", [0.0, 0.5, -0.5, 1.0, 2.0])
    def test_kinetic_energy(self, rng, nu):
        x = interior_leaf_point(rng, nu)
        ep = el.phase_to_elliptic(x, P)
        L = x[:3] - nu * x[3:]
        assert el.kinetic_elliptic(ep.u1, ep.u2, ep.pt1, ep.pt2, P) == pytest.approx(0.5 * L @ L, rel=1e-10)

    @pytest.mark.parametrize("nu", [0.0, 0.5, -0.5, 1.0, -1.0, 2.0])
    def test_hamiltonian_agrees(self, rng, nu):
        for _ in range(20):
            x = interior_leaf_point(rng, nu)
            ep = el.phase_to_elliptic(x, P)
            assert abs(el.H_elliptic(ep, P, nu) - sy.hamiltonian(x, P)) <= 1e-9 * max(1.0, abs(sy.hamiltonian(x, P)))

    @pytest.mark.parametrize("nu", [0.0, 1.0])
    def test_integral_agrees(self, rng, nu):
        x = interior_leaf_point(rng, nu)
        ep = el.phase_to_elliptic(x, P)
        assert el.F_elliptic(ep, P, nu) == pytest.approx(sy.integral_F(x, P), rel=1e-9, abs=1e-9)

    def test_pure_monopole_momentum(self, rng):
        x = interior_leaf_point(rng, 0.8)
        x[:3] = 0.8 * x[3:]
        ep = el.phase_to_elliptic(x, P)
        assert ep.pt1 == pytest.approx(0.0, abs=1e-14) and ep.pt2 == pytest.approx(0.0, abs=1e-14)
        a = el.pullback_gauge(ep.u1, ep.u2, 0.8, P, ep.signs)
        assert (ep.p1, ep.p2) == pytest.approx(a, abs=1e-14)

    def test_inverse_map(self, rng):
        x = interior_leaf_point(rng, 0.5)
        np.testing.assert_allclose(el.elliptic_to_phase(el.phase_to_elliptic(x, P), 0.5, P), x, atol=1e-12)

    def test_boundary_rejected(self):
        with pytest.raises(el.ChartError):
            el.phase_to_elliptic([0.1, 0.0, 0.0, 0.0, 0.0, 1.0], P)

    def test_degenerate(self):
        ep = el.EllipticPhasePoint(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, "polar")
        with pytest.raises(el.CoordinateDegeneracy):
            el.H_elliptic(ep, P, 0.0)


class TestSeparation:
    def test_trajectory(self):
        from twocentre import checks

        cfg = dy.IntegratorConfig(t_end=20.0)
        _, tr, _ = checks.nonsingular_run(P, 0.0, 2, cfg)
        s = el.separation_check(tr.t, tr.states, P)
        scale = max(1.0, np.max(np.abs(s.k1)))
        assert len(s.t) > 0.5 * len(tr)
        assert s.max_mismatch <= 1e-8 * scale
        assert s.drift <= 1e-6

    def test_geodesic_case(self, rng):
        # mu = 0: k depends only on the metric and the energy
        p0 = sy.SystemParams(2.0, 1.0, 0.0)
        x = interior_leaf_point(rng, 0.0, p0)
        ep = el.phase_to_elliptic(x, p0)
        h = sy.hamiltonian(x, p0)
        k1, k2 = el.separation_constants(ep.u1, ep.u2, ep.pt1, ep.pt2, h, p0)
        assert k1 == pytest.approx(0.5 * el.f_poly(ep.u1, p0) * ep.pt1**2 - h * ep.u1)
        assert k1 == pytest.approx(k2, abs=1e-12)

    def test_rejects_magnetic_leaf(self):
        with pytest.raises(ValueError):
            el.separation_check([0.0], [[0.1, 0.2, 0.3, 0.0, 0.0, 1.0]], P)
