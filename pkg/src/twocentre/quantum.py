"""Truncated quantum model on the unit sphere with a Dirac monopole.

States are sections of the monopole line bundle, expanded in monopole
harmonics ``Y[nu, j, m] = N e^{i m phi} d^j_{m, nu}(theta)`` written in the
polar gauge ``A = nu q3 (-q2, q1, 0) / (q1^2 + q2^2)`` with covariant derivative
``d - iA``.  In that gauge the angular momentum ``M = i nabla_X + nu q`` acts on
the harmonics through the standard spin-j ladder matrices, so ``M`` is
assembled algebraically and only multiplication operators need quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np
from scipy.spatial.transform import Rotation

from . import systems as sy

HERMITIAN_TOL = 1e-12
DEFAULT_EULER = (0.4123, 0.7071, 1.2345)


class QuantumDomainError(ValueError):
    """Invalid quantum numbers or basis parameters."""


class NodeCollisionError(ValueError):
    """A quadrature node hit a singularity of a multiplication operator."""


class ContractError(ValueError):
    """An operation was handed an operator that violates its preconditions."""


def _half_integer(x, what: str) -> int:
    """Return ``2x`` as an int, or fail if ``2x`` is not integral."""
    twice = 2 * float(x)
    if not math.isfinite(twice) or abs(twice - round(twice)) > 1e-12:
        raise QuantumDomainError(f"{what}={x!r}: 2{what} must be an integer")
    return int(round(twice))


# ---------------------------------------------------------------------------
# basis and quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonopoleBasis:
    """Monopole harmonics with ``|nu| <= j <= j_max``, ordered by ``(j, m)``."""

    two_nu: int
    j_max: float

    def __post_init__(self):
        tn = self.two_nu
        if isinstance(tn, bool) or not float(tn).is_integer():
            raise QuantumDomainError(
                f"monopole charge 2ν={tn!r}: 2ν must be an integer (Dirac quantisation)"
            )
        object.__setattr__(self, "two_nu", int(tn))
        steps = float(self.j_max) - abs(self.nu)
        if steps < 0 or not steps.is_integer():
            raise QuantumDomainError(
                f"j_max={self.j_max!r} must be |ν| plus a non-negative integer (ν={self.nu})"
            )
        object.__setattr__(self, "j_max", float(self.j_max))

    @classmethod
    def from_nu(cls, nu: float, j_max: float) -> "MonopoleBasis":
        twice = 2 * float(nu)
        if not twice.is_integer():
            raise QuantumDomainError(f"ν={nu!r}: 2ν must be an integer (Dirac quantisation)")
        return cls(int(twice), j_max)

    @property
    def nu(self) -> float:
        return self.two_nu / 2

    @cached_property
    def js(self) -> np.ndarray:
        return np.arange(abs(self.nu), self.j_max + 0.5)

    @cached_property
    def labels(self) -> list[tuple[float, float]]:
        return [(j, m) for j in self.js for m in np.arange(-j, j + 0.5)]

    @property
    def dim(self) -> int:
        return len(self.labels)

    @cached_property
    def j_of(self) -> np.ndarray:
        return np.array([j for j, _ in self.labels])

    @cached_property
    def m_of(self) -> np.ndarray:
        return np.array([m for _, m in self.labels])

    def block(self, j: float) -> slice:
        start = int(round((j - abs(self.nu)) * (j + abs(self.nu))))
        # sum of (2j'+1) over |nu| <= j' < j
        return slice(start, start + int(round(2 * j + 1)))

    def mask(self, j_cut: float) -> np.ndarray:
        return self.j_of <= j_cut + 1e-9


@dataclass(frozen=True)
class SphereQuadrature:
    """Gauss-Legendre in ``cos(theta)`` times a uniform ``phi`` grid, rigidly rotated.

    The rotation keeps nodes away from the poles of the polar gauge and from
    the potential centres; the rule stays exact for spherical polynomials of
    degree below ``min(2 n_theta, n_phi)``.
    """

    n_theta: int = 128
    n_phi: int = 128
    euler: tuple[float, float, float] = DEFAULT_EULER
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_theta < 2 or self.n_phi < 2:
            raise QuantumDomainError("quadrature needs at least 2 nodes per direction")
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        phi = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        st = np.sqrt(1 - x * x)
        pts = np.stack(
            [
                np.outer(st, np.cos(phi)).ravel(),
                np.outer(st, np.sin(phi)).ravel(),
                np.repeat(x, self.n_phi),
            ],
            axis=-1,
        )
        pts = Rotation.from_euler("zyz", self.euler).apply(pts)
        pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
        wts = np.repeat(w, self.n_phi) * (2 * np.pi / self.n_phi)
        pts.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(np.clip(self.points[:, 2], -1.0, 1.0))

    @property
    def phi(self) -> np.ndarray:
        return np.arctan2(self.points[:, 1], self.points[:, 0])

    def doubled(self) -> "SphereQuadrature":
        return SphereQuadrature(2 * self.n_theta, 2 * self.n_phi, self.euler)


# ---------------------------------------------------------------------------
# harmonics
# ---------------------------------------------------------------------------


def _spin_ladder(j: float) -> np.ndarray:
    """Raising matrix ``J+`` on ``m = -j..j`` (ascending)."""
    m = np.arange(-j, j + 0.5)
    up = np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1))
    return np.diag(up, -1)


def _jy_spectral(j: float):
    Jp = _spin_ladder(j)
    Jy = (Jp - Jp.T) / 2j
    lam, V = np.linalg.eigh(Jy)
    return lam, V


def wigner_d_column(j: float, k: float, beta, derivative: bool = False) -> np.ndarray:
    """``d^j_{m,k}(beta)`` for all ``m`` (last axis, ascending).

    ``d(beta) = exp(-i beta J_y)`` is evaluated through the spectral
    decomposition of ``J_y``; with ``derivative`` the beta-derivative is
    returned instead.
    """
    beta = np.asarray(beta, dtype=float)
    lam, V = _jy_spectral(j)
    kidx = int(round(k + j))
    phase = np.exp(-1j * beta[..., None] * lam)
    if derivative:
        phase = phase * (-1j * lam)
    out = (phase * np.conj(V[kidx])) @ V.T
    return out.real


def _check_labels(nu, j, m):
    tn = _half_integer(nu, "ν")
    tj = _half_integer(j, "j")
    tm = _half_integer(m, "m")
    if tj < abs(tn) or abs(tm) > tj or (tj - tn) % 2 or (tj - tm) % 2:
        raise QuantumDomainError(f"invalid monopole harmonic labels (ν, j, m) = ({nu}, {j}, {m})")


def monopole_harmonic(nu, j, m, theta, phi):
    """Monopole harmonic ``Y[nu, j, m]`` at ``(theta, phi)`` in the polar gauge."""
    _check_labels(nu, j, m)
    theta = np.asarray(theta, dtype=float)
    if np.any((theta <= 0) | (theta >= np.pi)):
        raise QuantumDomainError("theta must lie strictly inside (0, pi)")
    d = wigner_d_column(j, nu, theta)[..., int(round(m + j))]
    return math.sqrt((2 * j + 1) / (4 * math.pi)) * np.exp(1j * m * np.asarray(phi)) * d


def harmonic_table(basis: MonopoleBasis, quad: SphereQuadrature, derivative: str | None = None) -> np.ndarray:
    """Values of every basis harmonic at every node, shape ``(n_nodes, dim)``.

    ``derivative`` may be ``"theta"`` or ``"phi"`` for the coordinate derivatives.
    """
    theta, phi = quad.theta, quad.phi
    cols = []
    for j in basis.js:
        m = np.arange(-j, j + 0.5)
        d = wigner_d_column(j, basis.nu, theta, derivative=derivative == "theta")
        vals = math.sqrt((2 * j + 1) / (4 * math.pi)) * np.exp(1j * np.outer(phi, m)) * d
        if derivative == "phi":
            vals = vals * (1j * m)
        cols.append(vals)
    return np.concatenate(cols, axis=1)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorMatrix:
    data: np.ndarray
    hermitian: bool = False
    tol: float = HERMITIAN_TOL

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ContractError(f"operator must be square, got shape {d.shape}")
        if self.hermitian:
            res = hermiticity_residual(d)
            if res > self.tol:
                raise ContractError(f"operator flagged Hermitian but ||X - X^H||_max = {res:.3e}")
        object.__setattr__(self, "data", d)

    def __matmul__(self, other: "OperatorMatrix") -> np.ndarray:
        return self.data @ other.data


def hermiticity_residual(X) -> float:
    X = X.data if isinstance(X, OperatorMatrix) else np.asarray(X)
    return float(np.max(np.abs(X - X.conj().T))) if X.size else 0.0


def hermitian_part(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.conj().T)


def angular_momentum_matrices(basis: MonopoleBasis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Block-diagonal ``(M1, M2, M3)`` in the ``(j, m)`` basis."""
    n = basis.dim
    Jp = np.zeros((n, n))
    for j in basis.js:
        b = basis.block(j)
        Jp[b, b] = _spin_ladder(j)
    M1 = (Jp + Jp.T) / 2 + 0j
    M2 = (Jp - Jp.T) / 2j
    M3 = np.diag(basis.m_of).astype(complex)
    return M1, M2, M3


def so3_residuals(Ms) -> float:
    """Largest max-norm residual of ``[Mk, Ml] = i eps_klm Mm``."""
    res = 0.0
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        C = Ms[a] @ Ms[b] - Ms[b] @ Ms[a] - 1j * Ms[c]
        res = max(res, float(np.max(np.abs(C))))
    return res


class Assembler:
    """Caches the harmonic table so several multiplication operators share it."""

    def __init__(self, basis: MonopoleBasis, quad: SphereQuadrature):
        self.basis = basis
        self.quad = quad
        self.Y = harmonic_table(basis, quad)
        self._wY = quad.weights[:, None] * self.Y

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return self.Y.conj().T @ (values[:, None] * self._wY)

    def gram(self) -> np.ndarray:
        return self.Y.conj().T @ self._wY

    def multiplication(self, f, name: str = "f") -> OperatorMatrix:
        try:
            vals = np.asarray(f(self.quad.points), dtype=float)
        except sy.DomainError as exc:
            raise NodeCollisionError(
                f"{name} is singular at a quadrature node ({exc}); rotate the grid (change euler angles)"
            ) from exc
        if vals.shape != (len(self.quad.weights),):
            raise ValueError(f"{name} must return one value per node, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            bad = int(np.argmin(np.isfinite(vals)))
            raise NodeCollisionError(
                f"{name} is non-finite at node {bad} q={self.quad.points[bad]}; rotate the grid (change euler angles)"
            )
        return OperatorMatrix(self.integrate(vals))


def multiplication_matrix(f, basis: MonopoleBasis, quad: SphereQuadrature) -> OperatorMatrix:
    """``<Y_a| f |Y_b>`` for a real function ``f`` of unit vectors ``q`` of shape ``(n, 3)``."""
    return Assembler(basis, quad).multiplication(f)


def position_matrices(asm: Assembler):
    return tuple(asm.multiplication(lambda q, i=i: q[:, i], f"q{i + 1}").data for i in range(3))


def scalar_operator(Ms, Qs, symmetrised: bool = True) -> np.ndarray:
    """``(M, q)`` by explicit composition, optionally symmetrised in ordering."""
    S = sum(Ms[k] @ Qs[k] for k in range(3))
    if symmetrised:
        S = 0.5 * (S + sum(Qs[k] @ Ms[k] for k in range(3)))
    return S


def _potential_values(p: sy.SystemParams):
    def U(q):
        return sy.potential(q.T, p)

    return U


def _centre_term(p: sy.SystemParams):
    def G(q):
        return q[:, 2] / np.sqrt(sy.R_value(q.T, p))

    return G


def _require_spherical(p: sy.SystemParams):
    if p.signature is not sy.SystemSignature.SPHERICAL:
        raise QuantumDomainError("the truncated quantum model is defined on the sphere only")


@dataclass
class QuantumModel:
    """All operator matrices of one truncated model, assembled once."""

    params: sy.SystemParams
    basis: MonopoleBasis
    quad: SphereQuadrature = field(default_factory=SphereQuadrature)

    def __post_init__(self):
        _require_spherical(self.params)
        self.asm = Assembler(self.basis, self.quad)
        self.M = angular_momentum_matrices(self.basis)
        self.q = position_matrices(self.asm)

    @cached_property
    def casimir(self) -> np.ndarray:
        return sum(Mk @ Mk for Mk in self.M)

    @cached_property
    def S(self) -> np.ndarray:
        return scalar_operator(self.M, self.q, symmetrised=True)

    @cached_property
    def S_unsymmetrised(self) -> np.ndarray:
        return scalar_operator(self.M, self.q, symmetrised=False)

    @cached_property
    def potential(self) -> np.ndarray:
        return self.asm.multiplication(_potential_values(self.params), "U").data

    @cached_property
    def centre_term(self) -> np.ndarray:
        return self.asm.multiplication(_centre_term(self.params), "q3/sqrt(R)").data

    def H(self) -> OperatorMatrix:
        X = 0.5 * self.casimir + self.potential
        return OperatorMatrix(hermitian_part(X), hermitian=True)

    def F(self, symmetrised: bool = True) -> OperatorMatrix:
        p = self.params
        M1, M2, M3 = self.M
        S = self.S if symmetrised else self.S_unsymmetrised
        X = p.A * M1 @ M1 + p.B * M2 @ M2 + 2 * p.sqrtAB * S @ M3
        X = X - 2 * p.mu * p.sqrtAB * self.centre_term
        return OperatorMatrix(hermitian_part(X), hermitian=True)

    def raw_hermiticity(self) -> dict:
        """Hermiticity residuals before symmetrisation of the stored parts."""
        return {
            "U": hermiticity_residual(self.potential),
            "q3/sqrt(R)": hermiticity_residual(self.centre_term),
            "S": hermiticity_residual(self.S),
            "S@M3": hermiticity_residual(self.S @ self.M[2]),
        }


def build_H(params: sy.SystemParams, basis: MonopoleBasis, quad: SphereQuadrature | None = None) -> OperatorMatrix:
    """``1/2 sum M_k^2 - mu / sqrt(R)`` on the truncated basis."""
    return QuantumModel(params, basis, quad or SphereQuadrature()).H()


def build_F(
    params: sy.SystemParams,
    basis: MonopoleBasis,
    quad: SphereQuadrature | None = None,
    symmetrised: bool = True,
) -> OperatorMatrix:
    """``A M1^2 + B M2^2 + 2 sqrt(AB) S M3 - 2 mu sqrt(AB) q3 / sqrt(R)``."""
    return QuantumModel(params, basis, quad or SphereQuadrature()).F(symmetrised)


def laplacian_route_H(params: sy.SystemParams, basis: MonopoleBasis, quad: SphereQuadrature) -> np.ndarray:
    """``-1/2 Laplacian + U`` from gradient products, for ``nu = 0`` only."""
    if basis.two_nu != 0:
        raise QuantumDomainError("the Laplacian route is only available without a monopole (ν=0)")
    asm = Assembler(basis, quad)
    Yt = harmonic_table(basis, quad, "theta")
    Yp = harmonic_table(basis, quad, "phi")
    sin2 = 1 - np.clip(quad.points[:, 2], -1, 1) ** 2
    w = quad.weights[:, None]
    kinetic = Yt.conj().T @ (w * Yt) + Yp.conj().T @ (w / sin2[:, None] * Yp)
    return 0.5 * kinetic + asm.multiplication(_potential_values(params), "U").data


# ---------------------------------------------------------------------------
# eigensolver
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _cyclic_jacobi(a, tol, max_sweeps):
    n = a.shape[0]
    v = np.eye(n)
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        scale = 0.0
        for i in range(n):
            for j in range(n):
                scale += a[i, j] * a[i, j]
        if off <= tol * tol * scale or off == 0.0:
            return a, v, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return a, v, max_sweeps


def jacobi_eigh_real(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    """Cyclic Jacobi for a real symmetric matrix; returns ascending ``(w, V)``."""
    a = np.array(a, dtype=float, copy=True)
    if a.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    d, v, sweeps = _cyclic_jacobi(a, tol, max_sweeps)
    if sweeps >= max_sweeps:
        raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(d).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    vectors: np.ndarray | None = None

    def residuals(self, X: np.ndarray) -> np.ndarray:
        if self.vectors is None:
            raise ValueError("spectrum computed without vectors")
        R = X @ self.vectors - self.vectors * self.values
        return np.linalg.norm(R, axis=0)


def _complex_vectors(w2, V2, n, cluster_tol):
    """Recover an orthonormal complex eigenbasis from the doubled real one."""
    vecs = V2[:n] + 1j * V2[n:]
    values = np.empty(n)
    out = np.empty((n, n), dtype=complex)
    col = 0
    start = 0
    while start < 2 * n:
        stop = start + 1
        while stop < 2 * n and abs(w2[stop] - w2[start]) <= cluster_tol:
            stop += 1
        # each complex eigenvalue appears twice in the real embedding
        k = (stop - start) // 2
        U, _, _ = np.linalg.svd(vecs[:, start:stop], full_matrices=False)
        out[:, col : col + k] = U[:, :k]
        values[col : col + k] = np.mean(w2[start:stop])
        col += k
        start = stop
    if col != n:
        raise RuntimeError("could not pair eigenvalues of the real embedding")
    return values, out


def eigen_spectrum(X, vectors: bool = False) -> Spectrum:
    """Ascending eigenvalues of a Hermitian operator by cyclic Jacobi rotations.

    The ``n x n`` Hermitian matrix is embedded as the ``2n x 2n`` real symmetric
    matrix ``[[Re, -Im], [Im, Re]]`` whose spectrum is the original one doubled.
    """
    if isinstance(X, OperatorMatrix):
        if not X.hermitian:
            raise ContractError("eigen_spectrum requires an operator flagged Hermitian")
        X = X.data
    X = np.asarray(X, dtype=complex)
    res = hermiticity_residual(X)
    scale = max(float(np.max(np.abs(X))), 1.0) if X.size else 1.0
    if res > 1e-10 * scale:
        raise ContractError(f"eigen_spectrum requires a Hermitian matrix (residual {res:.3e})")
    n = X.shape[0]
    big = np.block([[X.real, -X.imag], [X.imag, X.real]])
    w2, V2 = jacobi_eigh_real(big)
    if not vectors:
        return Spectrum(0.5 * (w2[0::2] + w2[1::2]))
    norm = max(np.linalg.norm(X, 2) if n else 0.0, 1e-300)
    values, U = _complex_vectors(w2, V2, n, 1e-9 * norm)
    return Spectrum(values, U)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def commutator_diagnostic(H, F, basis: MonopoleBasis, j_cut: float) -> float:
    """``||P [H, F] P||_F / (||P H P||_F ||P F P||_F)`` with ``P`` onto ``j <= j_cut``."""
    if j_cut > basis.j_max - 2 + 1e-9:
        raise QuantumDomainError(f"j_cut={j_cut} must not exceed j_max - 2 = {basis.j_max - 2}")
    H = H.data if isinstance(H, OperatorMatrix) else np.asarray(H)
    F = F.data if isinstance(F, OperatorMatrix) else np.asarray(F)
    P = basis.mask(j_cut)
    C = (H @ F - F @ H)[np.ix_(P, P)]
    denom = np.linalg.norm(H[np.ix_(P, P)]) * np.linalg.norm(F[np.ix_(P, P)])
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(C) / denom)


def interior_scalar(X: np.ndarray, basis: MonopoleBasis, j_cut: float | None = None):
    """Best scalar ``c`` with ``PXP ~ c Id`` and the max deviation from it."""
    P = basis.mask(basis.j_max - 1 if j_cut is None else j_cut)
    block = X[np.ix_(P, P)]
    c = float(np.real(np.trace(block))) / block.shape[0]
    dev = float(np.max(np.abs(block - c * np.eye(block.shape[0]))))
    return c, dev


def vector_operator_residual(Ms, Qs, basis: MonopoleBasis) -> float:
    """``[M_k, q_l] = i eps_klm q_m`` on the truncation interior, max norm."""
    P = basis.mask(basis.j_max - 1)
    res = 0.0
    for a in range(3):
        for b in range(3):
            C = Ms[a] @ Qs[b] - Qs[b] @ Ms[a]
            target = np.zeros_like(C)
            for c in range(3):
                eps = _levi_civita(a, b, c)
                if eps:
                    target = target + 1j * eps * Qs[c]
            res = max(res, float(np.max(np.abs((C - target)[np.ix_(P, P)]))))
    return res


def _levi_civita(a: int, b: int, c: int) -> int:
    return (a - b) * (b - c) * (c - a) // 2


def spectrum_labels(basis: MonopoleBasis, vectors: np.ndarray) -> list[tuple[float, float]]:
    """Dominant ``(j, m)`` label of each eigenvector."""
    idx = np.argmax(np.abs(vectors), axis=0)
    return [basis.labels[i] for i in idx]


def kinetic_levels(basis: MonopoleBasis) -> np.ndarray:
    """``j (j + 1) / 2`` repeated ``2j + 1`` times, ascending."""
    return np.repeat(basis.js * (basis.js + 1) / 2, (2 * basis.js + 1).astype(int))
