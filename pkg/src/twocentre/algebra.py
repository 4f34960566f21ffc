"""Lie-Poisson structures on e(3)* and so(2,1)* with forward-mode gradients.

Phase-space coordinates are ordered ``(M1, M2, M3, q1, q2, q3)``. A scalar
field is any callable ``f(M, q)`` built from arithmetic and the elementary
functions of this module, so that it accepts floats, arrays or :class:`Dual`
components alike.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

NDIM = 6


class EvaluationError(ValueError):
    """A scalar field produced a non-finite value or gradient."""


class Signature(enum.Enum):
    EUCLIDEAN = "euclidean"
    LORENTZIAN = "lorentzian"


# ---------------------------------------------------------------------------
# forward-mode dual numbers
# ---------------------------------------------------------------------------


class Dual:
    """Value with gradient (and optionally Hessian) over the 6 phase coordinates.

    Batched: ``value`` has shape ``S``, ``grad`` shape ``S + (6,)`` and
    ``hess`` shape ``S + (6, 6)``. ``hess`` is ``None`` for first-order jets.
    """

    __slots__ = ("value", "grad", "hess")
    __array_priority__ = 1000

    def __init__(self, value, grad, hess=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = None if hess is None else np.asarray(hess, dtype=float)

    def __repr__(self) -> str:
        return f"Dual(value={self.value!r}, grad={self.grad!r})"

    # unary chain rule: f(x) with f' = d1, f'' = d2
    def _chain(self, f0, d1, d2=None) -> Dual:
        d1 = np.asarray(d1)
        grad = d1[..., None] * self.grad
        hess = None
        if self.hess is not None:
            if d2 is None:
                raise NotImplementedError("second derivative unavailable for this function")
            d2 = np.asarray(d2)
            hess = d1[..., None, None] * self.hess + d2[..., None, None] * (
                self.grad[..., :, None] * self.grad[..., None, :]
            )
        return Dual(f0, grad, hess)

    def __neg__(self) -> Dual:
        return Dual(-self.value, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self) -> Dual:
        return self

    def __add__(self, other) -> Dual:
        if isinstance(other, Dual):
            hess = None
            if self.hess is not None and other.hess is not None:
                hess = self.hess + other.hess
            return Dual(self.value + other.value, self.grad + other.grad, hess)
        return Dual(self.value + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other) -> Dual:
        return self + (-other)

    def __rsub__(self, other) -> Dual:
        return (-self) + other

    def __mul__(self, other) -> Dual:
        if isinstance(other, Dual):
            a, b = self, other
            grad = a.value[..., None] * b.grad + b.value[..., None] * a.grad
            hess = None
            if a.hess is not None and b.hess is not None:
                outer = a.grad[..., :, None] * b.grad[..., None, :]
                hess = (
                    a.value[..., None, None] * b.hess
                    + b.value[..., None, None] * a.hess
                    + outer
                    + np.swapaxes(outer, -1, -2)
                )
            return Dual(a.value * b.value, grad, hess)
        c = np.asarray(other, dtype=float)
        return Dual(
            self.value * c,
            c[..., None] * self.grad,
            None if self.hess is None else c[..., None, None] * self.hess,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> Dual:
        v = self.value
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other) -> Dual:
        if isinstance(other, Dual):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other) -> Dual:
        return self.reciprocal() * other

    def __pow__(self, n) -> Dual:
        if isinstance(n, Dual):
            raise TypeError("Dual exponent not supported")
        v = self.value
        if n == 2:
            return self * self
        return self._chain(v**n, n * v ** (n - 1), n * (n - 1) * v ** (n - 2))


def is_dual(x) -> bool:
    return isinstance(x, Dual)


def sqrt(x):
    if isinstance(x, Dual):
        r = np.sqrt(x.value)
        return x._chain(r, 0.5 / r, -0.25 / (r * x.value))
    return np.sqrt(x)


def sin(x):
    if isinstance(x, Dual):
        return x._chain(np.sin(x.value), np.cos(x.value), -np.sin(x.value))
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return x._chain(np.cos(x.value), -np.sin(x.value), -np.cos(x.value))
    return np.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.value)
        return x._chain(e, e, e)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        v = x.value
        return x._chain(np.log(v), 1.0 / v, -1.0 / v**2)
    return np.log(x)


def value_of(x):
    return x.value if isinstance(x, Dual) else np.asarray(x, dtype=float)


def seed(x, order: int = 1, ndim: int = NDIM) -> tuple[Dual, ...]:
    """Independent variables at points ``x`` of shape ``(..., ndim)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != ndim:
        raise ValueError(f"expected trailing dimension {ndim}, got {x.shape}")
    batch = x.shape[:-1]
    eye = np.eye(ndim)
    out = []
    for i in range(ndim):
        grad = np.broadcast_to(eye[i], batch + (ndim,)).copy()
        hess = np.zeros(batch + (ndim, ndim)) if order >= 2 else None
        out.append(Dual(x[..., i], grad, hess))
    return tuple(out)


# ---------------------------------------------------------------------------
# phase points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhasePoint:
    """A point ``(M, q)`` of e(3)* or so(2,1)*."""

    M: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float).reshape(3)
        q = np.asarray(self.q, dtype=float).reshape(3)
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(q))):
            raise ValueError("phase point components must be finite")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_array(cls, x) -> PhasePoint:
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.M, self.q])


def as_coords(x) -> np.ndarray:
    """Points as an array of shape ``(..., 6)``."""
    if isinstance(x, PhasePoint):
        return x.as_array()
    return np.asarray(x, dtype=float)


ScalarField = Callable[[Sequence, Sequence], object]


def call_field(f: ScalarField, z: Sequence):
    return f(z[:3], z[3:])


# ---------------------------------------------------------------------------
# Poisson structures
# ---------------------------------------------------------------------------


def _levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    return eps


def _euclidean_constants() -> np.ndarray:
    eps = _levi_civita()
    c = np.zeros((NDIM, NDIM, NDIM))
    c[:3, :3, :3] = eps  # {M_i, M_j} = eps_ijk M_k
    c[:3, 3:, 3:] = eps  # {M_i, q_j} = eps_ijk q_k
    c[3:, :3, 3:] = -np.swapaxes(eps, 0, 1)
    return c


def _lorentzian_constants() -> np.ndarray:
    c = np.zeros((NDIM, NDIM, NDIM))

    def put(i, j, k, s):
        c[i, j, k] += s
        c[j, i, k] -= s

    M1, M2, M3, q1, q2, q3 = range(6)
    put(M1, M2, M3, 1.0)
    put(M2, M3, M1, -1.0)
    put(M3, M1, M2, -1.0)
    put(M1, q2, q3, 1.0)
    put(M2, q1, q3, -1.0)
    put(M1, q3, q2, 1.0)
    put(M3, q1, q2, -1.0)
    put(M2, q3, q1, -1.0)
    put(M3, q2, q1, 1.0)
    return c


@dataclass(frozen=True)
class PoissonStructure:
    """Linear Lie-Poisson tensor ``J^{ij}(x) = C^{ij}_k x^k``."""

    signature: Signature
    constants: np.ndarray

    def tensor(self, x) -> np.ndarray:
        """``J(x)`` with shape ``(..., 6, 6)``."""
        return np.einsum("ijk,...k->...ij", self.constants, as_coords(x))

    def apply(self, x, g) -> list:
        """``J(x) g`` at a single point, looping over the nonzero structure constants."""
        out = [0.0] * NDIM
        for i, j, k, c in _nonzero(self):
            out[i] += c * x[k] * g[j]
        return out

    def metric(self) -> np.ndarray:
        if self.signature is Signature.EUCLIDEAN:
            return np.eye(3)
        return np.diag([-1.0, -1.0, 1.0])


_NONZERO: dict = {}


def _nonzero(P: PoissonStructure) -> list:
    key = P.signature
    if key not in _NONZERO:
        idx = np.argwhere(P.constants != 0)
        _NONZERO[key] = [(int(i), int(j), int(k), float(P.constants[i, j, k])) for i, j, k in idx]
    return _NONZERO[key]


EUCLIDEAN = PoissonStructure(Signature.EUCLIDEAN, _euclidean_constants())
LORENTZIAN = PoissonStructure(Signature.LORENTZIAN, _lorentzian_constants())


def structure(signature) -> PoissonStructure:
    if isinstance(signature, PoissonStructure):
        return signature
    sig = Signature(signature) if not isinstance(signature, Signature) else signature
    return EUCLIDEAN if sig is Signature.EUCLIDEAN else LORENTZIAN


def _name(f) -> str:
    return getattr(f, "__name__", repr(f))


def _evaluate(f: ScalarField, x, order: int = 1) -> Dual:
    z = seed(as_coords(x), order)
    out = call_field(f, z)
    if not isinstance(out, Dual):
        # constant field
        batch = as_coords(x).shape[:-1]
        out = Dual(
            np.broadcast_to(np.asarray(out, dtype=float), batch),
            np.zeros(batch + (NDIM,)),
            np.zeros(batch + (NDIM, NDIM)) if order >= 2 else None,
        )
    bad = ~np.isfinite(out.value) | ~np.all(np.isfinite(out.grad), axis=-1)
    if np.any(bad):
        raise EvaluationError(f"non-finite value or gradient of {_name(f)}")
    return out


def gradient(f: ScalarField, x) -> np.ndarray:
    """Forward-mode gradient of ``f`` at ``x``; shape ``(..., 6)``."""
    return _evaluate(f, x).grad


def finite_difference_gradient(f: ScalarField, x, step: float = 1e-6) -> np.ndarray:
    x = as_coords(x)
    g = np.empty(x.shape)
    for i in range(NDIM):
        e = np.zeros(NDIM)
        e[i] = step
        fp = np.asarray(call_field(f, tuple(np.moveaxis(x + e, -1, 0))), dtype=float)
        fm = np.asarray(call_field(f, tuple(np.moveaxis(x - e, -1, 0))), dtype=float)
        g[..., i] = (fp - fm) / (2 * step)
    return g


def _contract(gf, J, gg):
    return np.einsum("...i,...ij,...j->...", gf, J, gg)


def poisson_bracket(f: ScalarField, g: ScalarField, x, P=EUCLIDEAN) -> np.ndarray:
    """``{f, g}(x) = grad f . J(x) . grad g``."""
    P = structure(P)
    return _contract(gradient(f, x), P.tensor(x), gradient(g, x))


def bracket_with_scale(f: ScalarField, g: ScalarField, x, P=EUCLIDEAN):
    """Bracket and the tolerance scale ``|grad f| |J|_F |grad g|``."""
    P = structure(P)
    gf, gg = gradient(f, x), gradient(g, x)
    J = P.tensor(x)
    scale = (
        np.linalg.norm(gf, axis=-1)
        * np.linalg.norm(J, axis=(-2, -1))
        * np.linalg.norm(gg, axis=-1)
    )
    return _contract(gf, J, gg), scale


def bracket_field(f: ScalarField, g: ScalarField, P=EUCLIDEAN) -> ScalarField:
    """``{f, g}`` as a differentiable scalar field (first-order jets only).

    Needs the Hessians of ``f`` and ``g``; ``J`` is linear so its derivative
    is the constant structure tensor.
    """
    P = structure(P)

    def h(M, q):
        z = list(M) + list(q)
        if not any(isinstance(c, Dual) for c in z):
            x = np.stack(np.broadcast_arrays(*z), axis=-1)
            return poisson_bracket(f, g, x, P)
        if any(c.hess is not None for c in z if isinstance(c, Dual)):
            raise NotImplementedError("nested brackets beyond first order")
        x = np.stack([c.value for c in z], axis=-1)
        inner = np.stack([c.grad for c in z], axis=-2)  # (..., 6 coords, 6 outer)
        fa, ga = _evaluate(f, x, 2), _evaluate(g, x, 2)
        J = P.tensor(x)
        val = _contract(fa.grad, J, ga.grad)
        d = (
            np.einsum("...ki,...ij,...j->...k", fa.hess, J, ga.grad)
            + np.einsum("...i,ijk,...j->...k", fa.grad, P.constants, ga.grad)
            + np.einsum("...i,...ij,...jk->...k", fa.grad, J, ga.hess)
        )
        return Dual(val, np.einsum("...k,...kl->...l", d, inner))

    h.__name__ = f"{{{_name(f)}, {_name(g)}}}"
    return h


def hamiltonian_vector_field(H: ScalarField, x, P=EUCLIDEAN) -> np.ndarray:
    """``x_i' = {x_i, H}``; shape ``(..., 6)``."""
    P = structure(P)
    return np.einsum("...ij,...j->...i", P.tensor(x), gradient(H, x))


def casimirs(x, P=EUCLIDEAN) -> tuple:
    """``(C1, C2)``: ``(q, Gq)`` and ``(M, Gq)`` with ``G`` the ambient metric."""
    P = structure(P)
    x = as_coords(x)
    G = np.diag(P.metric())
    M, q = x[..., :3], x[..., 3:]
    return np.sum(G * q * q, axis=-1), np.sum(G * M * q, axis=-1)


def casimir_fields(P=EUCLIDEAN) -> tuple[ScalarField, ScalarField]:
    P = structure(P)
    g1, g2, g3 = np.diag(P.metric())

    def C1(M, q):
        return g1 * q[0] * q[0] + g2 * q[1] * q[1] + g3 * q[2] * q[2]

    def C2(M, q):
        return g1 * M[0] * q[0] + g2 * M[1] * q[1] + g3 * M[2] * q[2]

    return C1, C2


def coordinate_field(i: int) -> ScalarField:
    def xi(M, q):
        return (list(M) + list(q))[i]

    xi.__name__ = ["M1", "M2", "M3", "q1", "q2", "q3"][i]
    return xi
