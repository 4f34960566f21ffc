"""Hamiltonians and additional integrals of the integrable two-centre family.

Spherical members live on e(3)*; hyperbolic and de Sitter members on
so(2,1)*. The Killing two-centre Hamiltonian with Mamaev's integral is kept as
a baseline that is integrable only on the ``(M, q) = 0`` leaf.

All formulas take component sequences ``M, q`` whose entries may be floats,
arrays or :class:`~twocentre.algebra.Dual` numbers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import algebra as alg
from .algebra import PhasePoint

SINGULAR_R = 1e-12


class DomainError(ValueError):
    """Evaluation at or inside the singular set of a formula."""


class SystemSignature(enum.Enum):
    SPHERICAL = "spherical"
    HYPERBOLIC = "hyperbolic"
    DESITTER = "desitter"


@dataclass(frozen=True)
class SystemParams:
    A: float
    B: float
    mu: float = 1.0
    signature: SystemSignature = SystemSignature.SPHERICAL
    experimental: bool = False

    def __post_init__(self):
        sig = SystemSignature(self.signature)
        object.__setattr__(self, "signature", sig)
        A, B = float(self.A), float(self.B)
        if not all(map(math.isfinite, (A, B, float(self.mu)))):
            raise ValueError("parameters must be finite")
        if sig is SystemSignature.SPHERICAL and not A > B > 0:
            raise ValueError(f"spherical family needs A > B > 0, got A={A}, B={B}")
        if sig is SystemSignature.HYPERBOLIC and not B > A > 0:
            raise ValueError(f"hyperbolic family needs B > A > 0, got A={A}, B={B}")
        if sig is SystemSignature.DESITTER:
            if not B > 0 > A:
                raise ValueError(f"de Sitter family needs B > 0 > A, got A={A}, B={B}")
            if not self.experimental:
                raise ValueError("de Sitter family is experimental; pass experimental=True")

    @property
    def poisson(self) -> alg.PoissonStructure:
        if self.signature is SystemSignature.SPHERICAL:
            return alg.EUCLIDEAN
        return alg.LORENTZIAN

    @property
    def sqrtAB(self) -> float:
        return math.sqrt(abs(self.A * self.B))

    @property
    def leaf_c1(self) -> float:
        """Value of the first Casimir on the physical unit leaf."""
        return -1.0 if self.signature is SystemSignature.DESITTER else 1.0


@dataclass(frozen=True)
class KillingParams:
    mu: float
    alpha: float
    beta: float

    def __post_init__(self):
        if abs(self.alpha**2 + self.beta**2 - 1.0) > 1e-12:
            raise ValueError("alpha^2 + beta^2 must equal 1")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _check_positive(x, what: str, threshold: float = 0.0):
    v = alg.value_of(x)
    if np.any(~(v > threshold)):
        raise DomainError(f"{what} at/inside singular set (min value {np.min(v):.3e})")


def _norm(q, p: SystemParams):
    """``|q|`` for e(3)*, ``sqrt(|(q, Jq)|)`` for so(2,1)*."""
    if p.signature is SystemSignature.SPHERICAL:
        n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2]
    else:
        n2 = q[2] * q[2] - q[0] * q[0] - q[1] * q[1]
        if p.signature is SystemSignature.DESITTER:
            n2 = -n2
    _check_positive(n2, "|q|^2 (sheet condition)")
    return alg.sqrt(n2)


def _R(q, p: SystemParams, guard: bool = True):
    n = _norm(q, p)
    s = p.sqrtAB
    if p.signature is SystemSignature.SPHERICAL:
        R = p.A * q[1] ** 2 + p.B * q[0] ** 2 + (p.A + p.B) * q[2] ** 2 - 2 * s * n * q[2]
    else:
        # de Sitter: real form of |q| -> i n, sqrt(AB) -> i s flips the cross term
        cross = 2 * s * n * q[2]
        if p.signature is SystemSignature.DESITTER:
            cross = -cross
        R = -p.A * q[1] ** 2 - p.B * q[0] ** 2 + (p.A + p.B) * q[2] ** 2 - cross
    if guard:
        _check_positive(R, "R(q)", SINGULAR_R)
    return R, n


def _coords(x):
    if isinstance(x, PhasePoint):
        return x.M, x.q
    x = np.asarray(x, dtype=float)
    return tuple(np.moveaxis(x[..., :3], -1, 0)), tuple(np.moveaxis(x[..., 3:], -1, 0))


# ---------------------------------------------------------------------------
# the new family
# ---------------------------------------------------------------------------


def R_value(q, p: SystemParams):
    """``R(q)`` in its expanded form. No singular-set guard."""
    R, _ = _R(q, p, guard=False)
    return R


def R_value_factored(q, p: SystemParams):
    """``R`` regrouped as ``(A-B) q2^2 + (sqrt(A) q3 - sqrt(B)|q|)^2`` and analogues.

    On the sphere and the hyperboloid this is a sum of squares, so ``R >= 0``
    with equality only at the two centres.
    """
    n = _norm(q, p)
    if p.signature is SystemSignature.SPHERICAL:
        return (p.A - p.B) * q[1] ** 2 + (math.sqrt(p.A) * q[2] - math.sqrt(p.B) * n) ** 2
    if p.signature is SystemSignature.HYPERBOLIC:
        return (p.B - p.A) * q[1] ** 2 + (math.sqrt(p.A) * q[2] - math.sqrt(p.B) * n) ** 2
    return (p.B - p.A) * q[1] ** 2 - (math.sqrt(-p.A) * q[2] - math.sqrt(p.B) * n) ** 2


def hamiltonian_field(M, q, p: SystemParams):
    R, n = _R(q, p)
    if p.signature is SystemSignature.SPHERICAL:
        return 0.5 * (M[0] * M[0] + M[1] * M[1] + M[2] * M[2]) - p.mu * n / alg.sqrt(R)
    return 0.5 * (M[0] * M[0] + M[1] * M[1] - M[2] * M[2]) + p.mu * n / alg.sqrt(R)


def integral_field(M, q, p: SystemParams):
    R, n = _R(q, p)
    s = p.sqrtAB
    quad = p.A * M[0] * M[0] + p.B * M[1] * M[1]
    if p.signature is SystemSignature.SPHERICAL:
        mq = M[0] * q[0] + M[1] * q[1] + M[2] * q[2]
        return quad + (2 * s / n) * mq * M[2] - 2 * p.mu * s * q[2] / alg.sqrt(R)
    mq = -M[0] * q[0] - M[1] * q[1] + M[2] * q[2]
    return quad - (2 * s / n) * mq * M[2] + 2 * p.mu * s * q[2] / alg.sqrt(R)


def potential_field(M, q, p: SystemParams):
    R, n = _R(q, p)
    sign = -1.0 if p.signature is SystemSignature.SPHERICAL else 1.0
    return sign * p.mu * n / alg.sqrt(R)


def hamiltonian(x, p: SystemParams):
    return hamiltonian_field(*_coords(x), p)


def integral_F(x, p: SystemParams):
    return integral_field(*_coords(x), p)


def potential(q, p: SystemParams):
    return potential_field(None, q, p)


def hamiltonian_gradient(x, p: SystemParams) -> list:
    """Closed-form ``dH/dx`` at a single point, as a list of 6 floats.

    This is the integrator's fast path; tests compare it with the
    forward-mode gradient.
    """
    M1, M2, M3, q1, q2, q3 = (float(c) for c in x)
    A, B, s = p.A, p.B, p.sqrtAB
    if p.signature is SystemSignature.SPHERICAL:
        n = math.sqrt(q1 * q1 + q2 * q2 + q3 * q3)
        dn = (q1 / n, q2 / n, q3 / n)
        kappa, sign = 1.0, -1.0
        R = A * q2 * q2 + B * q1 * q1 + (A + B) * q3 * q3 - 2 * s * n * q3
        dR0 = (2 * B * q1, 2 * A * q2, 2 * (A + B) * q3)
        dM = (M1, M2, M3)
    else:
        kappa = 1.0 if p.signature is SystemSignature.HYPERBOLIC else -1.0
        n2 = kappa * (q3 * q3 - q1 * q1 - q2 * q2)
        if not n2 > 0:
            raise DomainError("|q|^2 (sheet condition) at/inside singular set")
        n = math.sqrt(n2)
        dn = (-kappa * q1 / n, -kappa * q2 / n, kappa * q3 / n)
        sign = 1.0
        R = -A * q2 * q2 - B * q1 * q1 + (A + B) * q3 * q3 - 2 * kappa * s * n * q3
        dR0 = (-2 * B * q1, -2 * A * q2, 2 * (A + B) * q3)
        dM = (M1, M2, -M3)
    if not R > SINGULAR_R:
        raise DomainError(f"R(q) at/inside singular set (value {R:.3e})")
    c = 2 * kappa * s
    dR = (dR0[0] - c * q3 * dn[0], dR0[1] - c * q3 * dn[1], dR0[2] - c * (q3 * dn[2] + n))
    rR = math.sqrt(R)
    a, b = sign * p.mu / rR, sign * p.mu * n / (2 * R * rR)
    return [dM[0], dM[1], dM[2], a * dn[0] - b * dR[0], a * dn[1] - b * dR[1], a * dn[2] - b * dR[2]]


def fields(p: SystemParams):
    """``(H, F)`` as scalar fields ``f(M, q)`` bound to ``p``."""

    def H(M, q):
        return hamiltonian_field(M, q, p)

    def F(M, q):
        return integral_field(M, q, p)

    return H, F


def centres(p: SystemParams) -> np.ndarray:
    """The two singular points on the unit leaf, shape ``(2, 3)``."""
    if p.signature is SystemSignature.SPHERICAL:
        a, b = math.sqrt((p.A - p.B) / p.A), math.sqrt(p.B / p.A)
    elif p.signature is SystemSignature.HYPERBOLIC:
        a, b = math.sqrt((p.B - p.A) / p.A), math.sqrt(p.B / p.A)
    else:
        raise NotImplementedError("centres of the de Sitter variant are not defined")
    return np.array([[a, 0.0, b], [-a, 0.0, b]])


def coulomb_asymptotics_check(p: SystemParams, rho: float, transverse: bool = False):
    """Potential at spherical distance ``rho`` from a centre, and the Coulomb model.

    The model is ``-mu / (sqrt(A - B) rho)``: near a centre
    ``R = (A - B) rho^2 + O(rho^3)`` in every tangent direction.
    """
    if p.signature is not SystemSignature.SPHERICAL:
        raise ValueError("Coulomb asymptotics are checked on the sphere only")
    c = centres(p)[0]
    t = np.array([0.0, 1.0, 0.0]) if transverse else np.array([c[2], 0.0, -c[0]])
    q = math.cos(rho) * c + math.sin(rho) * t
    numeric = float(potential(q, p))
    model = -p.mu / (math.sqrt(p.A - p.B) * rho)
    return numeric, model


# ---------------------------------------------------------------------------
# Killing-Mamaev baseline
# ---------------------------------------------------------------------------


def killing_hamiltonian_field(M, q, kp: KillingParams):
    a, b, mu = kp.alpha, kp.beta, kp.mu
    d1 = q[1] ** 2 + (a * q[2] + b * q[0]) ** 2
    d2 = q[1] ** 2 + (a * q[2] - b * q[0]) ** 2
    _check_positive(d1, "Killing denominator")
    _check_positive(d2, "Killing denominator")
    kin = 0.5 * (M[0] * M[0] + M[1] * M[1] + M[2] * M[2])
    return kin - mu * (b * q[2] - a * q[0]) / alg.sqrt(d1) - mu * (b * q[2] + a * q[0]) / alg.sqrt(d2)


def mamaev_integral_field(M, q, kp: KillingParams):
    """Additional integral of the Killing problem on the ``(M, q) = 0`` leaf.

    The potential part pairs ``(beta q1 + alpha q3)`` with the distance
    denominator of the centre ``(-alpha, 0, beta)`` and ``(beta q1 - alpha q3)``
    with that of ``(alpha, 0, beta)``, with opposite signs; the other sign and
    ordering choices that circulate for this formula do not commute with
    ``H_K`` (see ``test_systems.py``).
    """
    a, b, mu = kp.alpha, kp.beta, kp.mu
    d1 = q[1] ** 2 + (a * q[2] + b * q[0]) ** 2
    d2 = q[1] ** 2 + (b * q[0] - a * q[2]) ** 2
    _check_positive(d1, "Mamaev denominator")
    _check_positive(d2, "Mamaev denominator")
    pot = mu * (b * q[0] + a * q[2]) / alg.sqrt(d1) - mu * (b * q[0] - a * q[2]) / alg.sqrt(d2)
    return a * a * M[0] * M[0] - b * b * M[2] * M[2] - 2 * a * b * pot


def killing_hamiltonian(x, kp: KillingParams):
    return killing_hamiltonian_field(*_coords(x), kp)


def mamaev_integral(x, kp: KillingParams):
    return mamaev_integral_field(*_coords(x), kp)


def killing_fields(kp: KillingParams):
    def H_K(M, q):
        return killing_hamiltonian_field(M, q, kp)

    def F_M(M, q):
        return mamaev_integral_field(M, q, kp)

    return H_K, F_M


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def random_points(rng: np.random.Generator, n: int, p: SystemParams | None = None) -> np.ndarray:
    """Uniform points of ``[-2, 2]^6`` away from the singular set of ``p``.

    For so(2,1)* the ``q`` block is redrawn until it lies on the correct side
    of the light cone.
    """
    out = np.empty((0, 6))
    while len(out) < n:
        x = rng.uniform(-2.0, 2.0, size=(2 * n, 6))
        if p is not None:
            q = tuple(x[:, 3:].T)
            if p.signature is not SystemSignature.SPHERICAL:
                n2 = q[2] ** 2 - q[0] ** 2 - q[1] ** 2
                if p.signature is SystemSignature.DESITTER:
                    n2 = -n2
                x = x[n2 > 1e-3]
                q = tuple(x[:, 3:].T)
            else:
                x = x[np.einsum("ij,ij->i", x[:, 3:], x[:, 3:]) > 1e-3]
                q = tuple(x[:, 3:].T)
            R, nq = _R(q, p, guard=False)
            x = x[R > 1e-3 * nq**2]
        out = np.concatenate([out, x])
    return out[:n]


def leaf_points(rng: np.random.Generator, n: int, c2: float, radius: float = 1.0) -> np.ndarray:
    """Random points of the e(3)* leaf ``|q| = radius``, ``(M, q) = c2``.

    ``q`` is normalised and ``M`` shifted along ``q``.
    """
    x = rng.uniform(-2.0, 2.0, size=(n, 6))
    q = x[:, 3:]
    q = radius * q / np.linalg.norm(q, axis=1, keepdims=True)
    M = x[:, :3]
    lam = (c2 - np.einsum("ij,ij->i", M, q)) / radius**2
    M = M + lam[:, None] * q
    return np.hstack([M, q])
