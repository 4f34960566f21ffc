"""Spherical elliptic coordinates for the two-centre family on the unit sphere.

Coordinates ``(u1, u2)`` are the roots of
``q1^2/(A-u) + q2^2/(B-u) + q3^2/(0-u) = 0`` ordered ``0 <= u1 <= B <= u2 <= A``.
The chart covers one octant at a time; the octant is fixed by three sign bits.

Momentum conventions
--------------------
On the leaf ``|q| = 1, (M, q) = nu`` write ``L = M - nu q``. The magnetic
momenta are ``pt_i = (q x L) . dq/du_i``; with this sign ``{pt_i, u_i} = 1``.
They are the kinetic momenta and do not depend on a gauge. Canonical momenta
in a gauge ``A`` are ``p_i = pt_i + A_i(u)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import algebra as alg
from .systems import SystemParams, SystemSignature

CHART_MARGIN = 1e-6
POLE_GUARD = 1e-10


class ChartError(ValueError):
    """Point on (or numerically at) the boundary of the elliptic chart."""


class CoordinateDegeneracy(ChartError):
    """``u1 == u2``: the two coordinates coincide (only at the centres)."""


@dataclass(frozen=True)
class EllipticPhasePoint:
    u1: float
    u2: float
    pt1: float
    pt2: float
    p1: float
    p2: float
    gauge: str
    signs: tuple = (1, 1, 1)


def _spherical(p: SystemParams):
    if p.signature is not SystemSignature.SPHERICAL:
        raise ValueError("elliptic coordinates are implemented for the spherical family only")


# ---------------------------------------------------------------------------
# coordinates
# ---------------------------------------------------------------------------


def to_elliptic(q, p: SystemParams):
    """``(u1, u2)`` for unit vectors ``q`` (shape ``(3,)`` or ``(..., 3)``)."""
    _spherical(p)
    q = np.asarray(q, dtype=float)
    A, B = p.A, p.B
    q1s, q2s, q3s = q[..., 0] ** 2, q[..., 1] ** 2, q[..., 2] ** 2
    s = B * q1s + A * q2s + (A + B) * q3s
    prod = A * B * q3s
    disc = np.maximum(s * s - 4 * prod, 0.0)
    # s >= 0, so the '+' root has no cancellation; the other comes from the product
    u2 = 0.5 * (s + np.sqrt(disc))
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = np.where(u2 > 0, prod / u2, 0.0)
    return u1, u2


def phi_function(u, q, p: SystemParams):
    """``sum q_i^2 / (c_i - u)`` with ``c = (A, B, 0)``."""
    q = np.asarray(q, dtype=float)
    return q[..., 0] ** 2 / (p.A - u) + q[..., 1] ** 2 / (p.B - u) + q[..., 2] ** 2 / (-u)


def octant_signs(q) -> tuple:
    q = np.asarray(q, dtype=float)
    return tuple(1 if c >= 0 else -1 for c in q)


def _check_range(u1, u2, p: SystemParams, tol: float = 1e-12):
    v1, v2 = alg.value_of(u1), alg.value_of(u2)
    ok = (v1 >= -tol) & (v1 <= p.B + tol) & (v2 >= p.B - tol) & (v2 <= p.A + tol)
    if not np.all(ok):
        raise ChartError("elliptic coordinates outside 0 <= u1 <= B <= u2 <= A")


def from_elliptic(u1, u2, p: SystemParams, signs=(1, 1, 1)):
    """Cartesian point from elliptic coordinates and octant signs.

    Accepts floats, arrays or :class:`~twocentre.algebra.Dual` inputs; returns
    a tuple ``(q1, q2, q3)``.
    """
    _spherical(p)
    _check_range(u1, u2, p)
    A, B = p.A, p.B

    def root(x):
        if isinstance(x, alg.Dual):
            return alg.sqrt(x)
        return np.sqrt(np.maximum(x, 0.0))

    q1 = signs[0] * root((A - u1) * (A - u2) / (A * (A - B)))
    q2 = signs[1] * root((B - u1) * (B - u2) / (B * (B - A)))
    q3 = signs[2] * root(u1 * u2 / (A * B))
    return q1, q2, q3


def chart_interior(u1, u2, p: SystemParams, margin: float = CHART_MARGIN):
    gap = np.minimum.reduce([np.asarray(u1), p.B - np.asarray(u1), np.asarray(u2) - p.B, p.A - np.asarray(u2)])
    return gap > margin * p.A


def jacobian(u1, u2, p: SystemParams, signs=(1, 1, 1)) -> np.ndarray:
    """``dq/du`` by forward-mode differentiation; shape ``(..., 3, 2)``."""
    if not np.all(chart_interior(u1, u2, p, 0.0)):
        raise ChartError("Jacobian requested on the chart boundary")
    d1, d2 = alg.seed(np.stack(np.broadcast_arrays(u1, u2), axis=-1), ndim=2)
    q = from_elliptic(d1, d2, p, signs)
    return np.stack([c.grad for c in q], axis=-2)


def f_poly(u, p: SystemParams):
    return -4.0 * u * (u - p.A) * (u - p.B)


def metric_diagonal(u1, u2, p: SystemParams):
    """``(g11, g22)`` of ``ds^2 = g11 du1^2 + g22 du2^2``."""
    return (u1 - u2) / f_poly(u1, p), (u2 - u1) / f_poly(u2, p)


def R_in_elliptic(u1, u2, s3: int = 1):
    """``(sqrt(u1) - sqrt(u2))^2`` on the upper hemisphere; ``sqrt(u1)`` changes sign with ``q3``."""
    return (s3 * np.sqrt(u1) - np.sqrt(u2)) ** 2


def field_density(u1, u2, nu: float, p: SystemParams):
    """Monopole field density ``nu (u2 - u1) / sqrt(-f(u1) f(u2))``: ``nu`` times the area density."""
    return nu * (u2 - u1) / np.sqrt(-f_poly(u1, p) * f_poly(u2, p))


# ---------------------------------------------------------------------------
# gauge potential
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaugePotential:
    """``A = nu q3 (q1 dq2 - q2 dq1) / (q1^2 + q2^2)``, singular at both poles.

    With the outward orientation of the sphere this gives ``dA = -nu dS``;
    :func:`verify_dA` measures the coefficient.
    """

    nu: float
    name: str = "polar"
    excluded: tuple = field(default=((0.0, 0.0, 1.0), (0.0, 0.0, -1.0)))

    def __call__(self, q) -> np.ndarray:
        return gauge_A(q, self.nu)


def gauge_A(q, nu: float) -> np.ndarray:
    """Cartesian components ``(A_1, A_2, A_3)`` of the polar-gauge potential."""
    q = np.asarray(q, dtype=float)
    rho2 = q[..., 0] ** 2 + q[..., 1] ** 2
    if np.any(rho2 <= POLE_GUARD):
        raise ChartError("gauge potential evaluated at a pole")
    c = nu * q[..., 2] / rho2
    return np.stack([-c * q[..., 1], c * q[..., 0], np.zeros_like(c)], axis=-1)


def _tangent_frame(q0):
    q0 = np.asarray(q0, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(q0[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    ea = np.cross(helper, q0)
    ea /= np.linalg.norm(ea)
    eb = np.cross(q0, ea)
    return ea, eb  # ea x eb = q0


def verify_dA(q, nu: float, h: float = 1e-4, potential=None) -> float:
    """Coefficient of ``dS`` in ``dA`` at ``q``, by extrapolated central differences on a local chart.

    The chart is ``(s, t) -> normalise(q + s ea + t eb)`` with ``ea x eb = q``,
    so ``dS(d_s, d_t) = 1`` at the origin and the curl of the pulled-back
    potential is the wanted coefficient.
    """
    q0 = np.asarray(q, dtype=float)
    q0 = q0 / np.linalg.norm(q0)
    ea, eb = _tangent_frame(q0)
    pot = potential if potential is not None else (lambda y: gauge_A(y, nu))

    def pulled(s, t):
        y = q0 + s * ea + t * eb
        r = np.linalg.norm(y)
        n = y / r
        proj = (np.eye(3) - np.outer(n, n)) / r
        Aq = pot(n)
        return Aq @ (proj @ ea), Aq @ (proj @ eb)

    def curl(k):
        dt_as = (pulled(0.0, k)[0] - pulled(0.0, -k)[0]) / (2 * k)
        ds_at = (pulled(k, 0.0)[1] - pulled(-k, 0.0)[1]) / (2 * k)
        return ds_at - dt_as

    # one Richardson step removes the O(h^2) term of the central differences
    return float((4 * curl(h / 2) - curl(h)) / 3)


def pullback_gauge(u1, u2, nu: float, p: SystemParams, signs=(1, 1, 1)):
    """``(A_1(u), A_2(u))`` with ``A_i = A(q) . dq/du_i``."""
    q = np.stack(from_elliptic(u1, u2, p, signs), axis=-1)
    Jq = jacobian(u1, u2, p, signs)
    return tuple(np.moveaxis(np.einsum("...i,...ij->...j", gauge_A(q, nu), Jq), -1, 0))


def pullback_curl(u1: float, u2: float, nu: float, p: SystemParams, signs=(1, 1, 1), h: float = 1e-5) -> float:
    """``dA_2/du1 - dA_1/du2`` by extrapolated central differences."""

    def curl(k):
        a2p = pullback_gauge(u1 + k, u2, nu, p, signs)[1]
        a2m = pullback_gauge(u1 - k, u2, nu, p, signs)[1]
        a1p = pullback_gauge(u1, u2 + k, nu, p, signs)[0]
        a1m = pullback_gauge(u1, u2 - k, nu, p, signs)[0]
        return (a2p - a2m - a1p + a1m) / (2 * k)

    return float((4 * curl(h / 2) - curl(h)) / 3)


def chart_orientation(u1, u2, p: SystemParams, signs=(1, 1, 1)):
    """Sign of ``q . (dq/du1 x dq/du2)``: +1 if ``du1 ^ du2`` is outward-oriented."""
    q = np.stack(from_elliptic(u1, u2, p, signs), axis=-1)
    Jq = jacobian(u1, u2, p, signs)
    return np.sign(np.einsum("...i,...i->...", q, np.cross(Jq[..., 0], Jq[..., 1])))


# ---------------------------------------------------------------------------
# phase space
# ---------------------------------------------------------------------------


def phase_to_elliptic(x, p: SystemParams, gauge: GaugePotential | None = None, leaf_tol: float = 1e-10):
    """Convert a leaf point ``(M, q)`` to elliptic phase coordinates."""
    x = alg.as_coords(x)
    M, q = x[:3], x[3:]
    if abs(q @ q - 1.0) > leaf_tol:
        raise ValueError("phase_to_elliptic needs |q| = 1")
    nu = float(M @ q)
    if gauge is None:
        gauge = GaugePotential(nu)
    elif abs(gauge.nu - nu) > leaf_tol:
        raise ValueError(f"gauge charge {gauge.nu} does not match (M, q) = {nu}")
    u1, u2 = to_elliptic(q, p)
    if not chart_interior(u1, u2, p):
        raise ChartError(f"point on the elliptic chart boundary (u1={u1}, u2={u2})")
    signs = octant_signs(q)
    Jq = jacobian(u1, u2, p, signs)
    L = M - nu * q
    pt = np.cross(q, L) @ Jq
    a = gauge(q) @ Jq
    return EllipticPhasePoint(float(u1), float(u2), float(pt[0]), float(pt[1]),
                              float(pt[0] + a[0]), float(pt[1] + a[1]), gauge.name, signs)


def elliptic_to_phase(ep: EllipticPhasePoint, nu: float, p: SystemParams) -> np.ndarray:
    """Inverse of :func:`phase_to_elliptic` on the leaf ``(M, q) = nu``."""
    q = np.array(from_elliptic(ep.u1, ep.u2, p, ep.signs))
    Jq = jacobian(ep.u1, ep.u2, p, ep.signs)
    g11, g22 = metric_diagonal(ep.u1, ep.u2, p)
    # tangent vector w = q x L with w . dq/du_i = pt_i
    w = Jq @ np.array([ep.pt1 / g11, ep.pt2 / g22])
    L = np.cross(w, q)
    return np.concatenate([L + nu * q, q])


def kinetic_elliptic(u1, u2, pt1, pt2, p: SystemParams):
    f1, f2 = f_poly(u1, p), f_poly(u2, p)
    return 0.5 * (f1 / (u1 - u2) * pt1**2 + f2 / (u2 - u1) * pt2**2)


def _degeneracy_guard(u1, u2):
    if np.any(np.asarray(u1) == np.asarray(u2)):
        raise CoordinateDegeneracy("u1 == u2")


def H1(ep: EllipticPhasePoint, p: SystemParams) -> float:
    """Hamiltonian in elliptic coordinates, as a function of the magnetic momenta.

    ``sqrt(u1)`` is taken with the sign of ``q3``, so the potential is
    ``-mu / (sqrt(u2) - sqrt(u1))`` on the upper hemisphere and
    ``-mu / (sqrt(u2) + sqrt(u1))`` on the lower one.
    """
    _degeneracy_guard(ep.u1, ep.u2)
    r1 = ep.signs[2] * math.sqrt(ep.u1)
    return kinetic_elliptic(ep.u1, ep.u2, ep.pt1, ep.pt2, p) - p.mu / (math.sqrt(ep.u2) - r1)


def phi_coefficients(u1, u2, nu: float, p: SystemParams, signs=(1, 1, 1)):
    """Coefficients of the terms linear in the magnetic momenta.

    Outside the positive octant they pick up the chart orientation
    ``s1 s2 s3`` and the sign of ``sqrt(u1)``.
    """
    s1, s2, s3 = signs
    s = np.sqrt(-f_poly(u1, p) * f_poly(u2, p))
    r = s3 * np.sqrt(u1 * u2)
    o = s1 * s2 * s3
    return -o * nu * s / (r + u2), -o * nu * s / (r + u1)


def V_term(u1, u2, nu: float, p: SystemParams, s3: int = 1):
    r1, r2 = s3 * np.sqrt(u1), np.sqrt(u2)
    return -2 * p.mu * r1 * r2 / (r2 - r1) - nu**2 * (r1 - r2) ** 2


def F1(ep: EllipticPhasePoint, p: SystemParams, nu: float) -> float:
    """Additional integral in elliptic coordinates (same sign conventions as :func:`H1`)."""
    _degeneracy_guard(ep.u1, ep.u2)
    u1, u2 = ep.u1, ep.u2
    f1, f2 = f_poly(u1, p), f_poly(u2, p)
    ph1, ph2 = phi_coefficients(u1, u2, nu, p, ep.signs)
    return (u2 * f1 / (u1 - u2) * ep.pt1**2 + u1 * f2 / (u2 - u1) * ep.pt2**2
            + ph1 * ep.pt1 + ph2 * ep.pt2 + V_term(u1, u2, nu, p, ep.signs[2]))


def H_elliptic(ep: EllipticPhasePoint, p: SystemParams, nu: float) -> float:
    """:func:`H1` plus the leaf constant ``nu^2 / 2`` carried by ``|M|^2 = |L|^2 + nu^2``.

    Equals the Cartesian Hamiltonian at the corresponding leaf point.
    """
    return H1(ep, p) + 0.5 * nu**2


def F_elliptic(ep: EllipticPhasePoint, p: SystemParams, nu: float) -> float:
    """:func:`F1` plus the leaf constant ``nu^2 (A + B)``; equals the Cartesian integral."""
    return F1(ep, p, nu) + nu**2 * (p.A + p.B)


# ---------------------------------------------------------------------------
# separation at nu = 0
# ---------------------------------------------------------------------------


def separation_constants(u1, u2, pt1, pt2, h, p: SystemParams, s3: int = 1):
    """Separated first integrals ``(k1, k2)`` of the ``nu = 0`` problem.

    From ``(u1 - u2) h = f(u1) pt1^2/2 - f(u2) pt2^2/2 + mu (sqrt(u1) + sqrt(u2))``:
    ``k1 = f(u1) pt1^2/2 + mu sqrt(u1) - h u1`` and
    ``k2 = f(u2) pt2^2/2 - mu sqrt(u2) - h u2`` agree identically
    (``sqrt(u1)`` signed by ``q3`` as in :func:`H1`).
    """
    k1 = 0.5 * f_poly(u1, p) * pt1**2 + p.mu * s3 * np.sqrt(u1) - h * u1
    k2 = 0.5 * f_poly(u2, p) * pt2**2 - p.mu * np.sqrt(u2) - h * u2
    return k1, k2


@dataclass(frozen=True)
class SeparationSeries:
    t: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    skipped: int

    @property
    def truncated(self) -> bool:
        return self.skipped > 0

    @property
    def max_mismatch(self) -> float:
        return float(np.max(np.abs(self.k1 - self.k2))) if len(self.t) else 0.0

    @property
    def drift(self) -> float:
        """Max relative change of ``k1`` over the series."""
        if not len(self.t):
            return 0.0
        return float(np.max(np.abs(self.k1 - self.k1[0])) / max(1.0, abs(self.k1[0])))


def separation_check(times, states, p: SystemParams, margin: float = 1e-4) -> SeparationSeries:
    """Separation constants along a ``nu = 0`` trajectory (``states`` of shape ``(n, 6)``).

    Each sample is read in the chart of its own octant. Samples within
    ``margin * A`` of a chart boundary are dropped and counted in ``skipped``.
    """
    from .systems import hamiltonian

    states = np.asarray(states, dtype=float)
    nu = np.einsum("ij,ij->i", states[:, :3], states[:, 3:])
    if np.max(np.abs(nu)) > 1e-8:
        raise ValueError("separation check applies to nu = 0 trajectories")
    k1s, k2s, ts = [], [], []
    skipped = 0
    for t, x in zip(times, states):
        q = x[3:] / np.linalg.norm(x[3:])
        u1, u2 = to_elliptic(q, p)
        if not chart_interior(u1, u2, p, margin):
            skipped += 1
            continue
        ep = phase_to_elliptic(np.concatenate([x[:3], q]), p, GaugePotential(0.0), leaf_tol=1e-6)
        h = float(hamiltonian(x, p))
        k1, k2 = separation_constants(ep.u1, ep.u2, ep.pt1, ep.pt2, h, p, ep.signs[2])
        ts.append(t)
        k1s.append(k1)
        k2s.append(k2)
    return SeparationSeries(np.array(ts), np.array(k1s), np.array(k2s), skipped)
