import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twocentre import algebra as alg
from twocentre import systems as sy

SPH = sy.SystemParams(2.0, 1.0, 1.0)
HYP = sy.SystemParams(1.0, 2.0, 1.0, sy.SystemSignature.HYPERBOLIC)


def px(M, q):
    return np.array(list(M) + list(q), dtype=float)


class TestParams:
    @pytest.mark.parametrize("A,B,sig", [
        (1.0, 2.0, sy.SystemSignature.SPHERICAL),
        (2.0, 2.0, sy.SystemSignature.SPHERICAL),
        (2.0, 1.0, sy.SystemSignature.HYPERBOLIC),
        (1.0, -1.0, sy.SystemSignature.SPHERICAL),
    ])
    def test_invalid_regimes(self, A, B, sig):
        with pytest.raises(ValueError):
            sy.SystemParams(A, B, 1.0, sig)

    def test_de_sitter_requires_opt_in(self):
        with pytest.raises(ValueError, match="experimental"):
            sy.SystemParams(-1.0, 2.0, 1.0, sy.SystemSignature.DESITTER)
        p = sy.SystemParams(-1.0, 2.0, 1.0, sy.SystemSignature.DESITTER, experimental=True)
        assert p.leaf_c1 == -1.0

    def test_killing_normalisation(self):
        with pytest.raises(ValueError):
            sy.KillingParams(1.0, 0.5, 0.5)


class TestR:
    def test_north_pole(self):
        assert sy.R_value((0.0, 0.0, 1.0), SPH) == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-15)

    def test_vanishes_at_centres(self):
        for c in sy.centres(SPH):
            assert abs(sy.R_value(c, SPH)) <= 1e-13

    def test_antipode(self):
        # the antipode of a centre sits at R = 4B
        a = math.sqrt(0.5)
        for q in ((a, 0.0, -a), (-a, 0.0, -a)):
            assert sy.R_value(q, SPH) == pytest.approx(4.0, abs=1e-13)

    @given(
        A=st.floats(1.05, 6.0), ratio=st.floats(0.05, 0.95),
        q=st.tuples(*[st.floats(-2, 2)] * 3).filter(lambda v: sum(c * c for c in v) > 1e-4),
    )
    def test_two_forms_agree(self, A, ratio, q):
        p = sy.SystemParams(A, ratio * A, 1.0)
        scale = (A + p.B) * sum(c * c for c in q)
        assert abs(sy.R_value(q, p) - sy.R_value_factored(q, p)) <= 1e-13 * scale

    @given(q=st.tuples(*[st.floats(-2, 2)] * 3).filter(lambda v: sum(c * c for c in v) > 1e-4))
    def test_nonnegative(self, q):
        assert sy.R_value_factored(q, SPH) >= 0

    def test_hyperbolic_forms_agree(self, rng):
        for x in sy.random_points(rng, 200, HYP):
            q = tuple(x[3:])
            assert sy.R_value(q, HYP) == pytest.approx(sy.R_value_factored(q, HYP), rel=1e-12, abs=1e-12)


class TestHamiltonian:
    def test_free_kinetic(self):
        p = sy.SystemParams(2.0, 1.0, 0.0)
        assert sy.hamiltonian(px((1, 1, 1), (0.3, -0.2, 0.9)), p) == pytest.approx(1.5)

    def test_north_pole_potential(self):
        assert sy.hamiltonian(px((0, 0, 0), (0, 0, 1)), SPH) == pytest.approx(-2.4142136, abs=1e-7)
        assert sy.hamiltonian(px((0, 0, 0), (0, 0, 1)), SPH) == pytest.approx(-1 / (math.sqrt(2) - 1), rel=1e-14)

    def test_lorentzian_kinetic(self):
        p = sy.SystemParams(1.0, 2.0, 0.0, sy.SystemSignature.HYPERBOLIC)
        assert sy.hamiltonian(px((0, 0, 1), (0, 0, 1)), p) == pytest.approx(-0.5)

    def test_singular_centre_raises(self):
        with pytest.raises(sy.DomainError, match="singular"):
            sy.hamiltonian(px((0, 0, 0), sy.centres(SPH)[0]), SPH)

    def test_off_sheet_raises(self):
        with pytest.raises(sy.DomainError):
            sy.hamiltonian(px((0, 0, 0), (1.0, 0.0, 0.5)), HYP)

    def test_closed_form_gradient(self, rng):
        for p in (SPH, HYP, sy.SystemParams(5.0, 0.5, -1.0)):
            H = sy.fields(p)[0]
            for x in sy.random_points(rng, 20, p):
                np.testing.assert_allclose(sy.hamiltonian_gradient(x, p), alg.gradient(H, x), rtol=1e-11, atol=1e-11)


class TestIntegral:
    def test_clebsch_part(self):
        p = sy.SystemParams(2.0, 1.0, 0.0)
        assert sy.integral_F(px((1, 0, 0), (0, 0, 1)), p) == pytest.approx(2.0)

    def test_cross_term(self):
        p = sy.SystemParams(2.0, 1.0, 0.0)
        assert sy.integral_F(px((0, 0, 1), (0, 0, 1)), p) == pytest.approx(2 * math.sqrt(2))

    def test_reduces_on_zero_leaf(self, rng):
        p = sy.SystemParams(3.0, 0.7, 0.0)
        for x in sy.leaf_points(rng, 50, 0.0):
            assert sy.integral_F(x, p) == pytest.approx(3.0 * x[0] ** 2 + 0.7 * x[1] ** 2, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("p", [SPH, sy.SystemParams(5.0, 0.5, 3.7), HYP,
                                   sy.SystemParams(0.25, 3.0, -1.0, sy.SystemSignature.HYPERBOLIC)])
    def test_commutes_with_hamiltonian(self, rng, p):
        H, F = sy.fields(p)
        x = sy.random_points(rng, 300, p)
        br, s = alg.bracket_with_scale(H, F, x, p.poisson)
        assert np.max(np.abs(br) / s) <= 1e-9

    def test_de_sitter_bracket_is_reported_only(self, rng):
        # experimental real form, not certified: just has to evaluate
        p = sy.SystemParams(-1.0, 2.0, 1.0, sy.SystemSignature.DESITTER, experimental=True)
        H, F = sy.fields(p)
        br, s = alg.bracket_with_scale(H, F, sy.random_points(rng, 50, p), p.poisson)
        assert np.all(np.isfinite(br / s))


class TestCentres:
    def test_spherical(self):
        c = sy.centres(SPH)
        np.testing.assert_allclose(c, [[0.7071068, 0, 0.7071068], [-0.7071068, 0, 0.7071068]], atol=1e-7)
        np.testing.assert_allclose(np.linalg.norm(c, axis=1), 1.0, atol=1e-14)

    def test_hyperbolic(self):
        c = sy.centres(HYP)
        np.testing.assert_allclose(c, [[1, 0, math.sqrt(2)], [-1, 0, math.sqrt(2)]], atol=1e-15)
        for q in c:
            assert q[2] ** 2 - q[0] ** 2 - q[1] ** 2 == pytest.approx(1.0, abs=1e-14)
            assert abs(sy.R_value(q, HYP)) <= 1e-13

    def test_merge_when_coincident(self):
        c = sy.centres(sy.SystemParams(1.0 + 1e-12, 1.0, 1.0))
        np.testing.assert_allclose(c, [[0, 0, 1], [0, 0, 1]], atol=1e-5)


class TestCoulomb:
    @pytest.mark.parametrize("rho,tol", [(1e-3, 1e-2), (1e-4, 1e-3)])
    def test_ratio(self, rho, tol):
        num, model = sy.coulomb_asymptotics_check(SPH, rho)
        assert abs(num / model - 1) <= tol

    def test_isotropic(self):
        num, model = sy.coulomb_asymptotics_check(SPH, 1e-5, transverse=True)
        assert abs(num / model - 1) <= 1e-4

    def test_linear_convergence(self):
        err = [abs(np.divide(*sy.coulomb_asymptotics_check(SPH, r)) - 1) for r in (1e-2, 1e-3)]
        assert 5 < err[0] / err[1] < 20


# ---------------------------------------------------------------- Killing baseline

KP = sy.KillingParams(1.0, 0.6, 0.8)


def alternative_integral(M, q, kp):
    """The other pairing of numerators and denominators found in circulation."""
    a, b, mu = kp.alpha, kp.beta, kp.mu
    pot = mu * (b * q[0] - a * q[2]) / alg.sqrt(q[1] ** 2 + (b * q[0] - a * q[2]) ** 2) + mu * (
        a * q[0] + b * q[2]
    ) / alg.sqrt(q[1] ** 2 + (a * q[2] + b * q[0]) ** 2)
    return a * a * M[0] * M[0] - b * b * M[2] * M[2] - 2 * a * b * pot


class TestKilling:
    def test_free_values(self):
        kp = sy.KillingParams(0.0, 0.6, 0.8)
        x = px((1, 1, 0), (0.0, 0.0, 1.0))
        assert sy.killing_hamiltonian(x, kp) == pytest.approx(1.0)
        assert sy.mamaev_integral(x, kp) == pytest.approx(0.36)

    def test_commutes_on_zero_leaf(self, rng):
        H, F = sy.killing_fields(KP)
        x = sy.leaf_points(rng, 500, 0.0)
        br, s = alg.bracket_with_scale(H, F, x)
        assert np.max(np.abs(br) / s) <= 1e-9

    def test_fails_off_leaf(self, rng):
        H, F = sy.killing_fields(KP)
        br = alg.poisson_bracket(H, F, sy.leaf_points(rng, 500, 1.0))
        assert np.max(np.abs(br)) > 1e-3

    def test_alternative_pairing_fails_on_leaf(self, rng):
        H, _ = sy.killing_fields(KP)
        x = sy.leaf_points(rng, 500, 0.0)
        br, s = alg.bracket_with_scale(H, lambda M, q: alternative_integral(M, q, KP), x)
        assert np.max(np.abs(br) / s) > 1e-2

    def test_denominator_guard(self):
        with pytest.raises(sy.DomainError):
            sy.killing_hamiltonian(px((0, 0, 0), (0.8, 0.0, 0.6)), sy.KillingParams(1.0, 0.8, 0.6))
