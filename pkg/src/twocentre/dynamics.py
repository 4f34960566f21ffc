"""Integration of the Lie-Poisson flow ``x' = {x, H}`` with drift monitoring.

Two explicit schemes: classical RK4 with a fixed step, and the adaptive
Dormand-Prince 5(4) pair. Output is sampled on a fixed time grid between
accepted steps (the pair's own quartic continuous extension for RK45, cubic
Hermite interpolation for RK4), so the sample count does not depend on the
step-size history.

A run ends at ``t_end``, after ``max_steps`` steps, or when the trajectory
approaches a centre (``R(q) < singularity_radius`` or step-size underflow).
Approaching a centre is not an error; the partial trajectory is returned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import algebra as alg
from . import systems as sy

log = logging.getLogger(__name__)

T_END = "t_end"
MAX_STEPS = "max_steps"
SINGULARITY = "singularity encounter"

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45"
    step: float = 0.01
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    t_end: float = 10.0
    max_steps: int = 1_000_000
    projection: str = "none"
    singularity_radius: float = 1e-8
    sample_dt: float | None = 0.1
    h_min: float = 1e-13
    gradient: str = "closed-form"

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.projection not in ("none", "leaf"):
            raise ValueError(f"unknown projection {self.projection!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.method == "rk4" and not self.step > 0:
            raise ValueError("step must be positive")
        if self.method == "rk45" and not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.sample_dt is not None and not self.sample_dt > 0:
            raise ValueError("sample_dt must be positive")
        if self.gradient not in ("closed-form", "dual"):
            raise ValueError(f"unknown gradient mode {self.gradient!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TrajectoryRecord:
    t: np.ndarray
    states: np.ndarray
    H: np.ndarray
    F: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    reason: str
    n_steps: int = 0
    n_rejected: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("t", "states", "H", "F", "C1", "C2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class DriftSummary:
    H: float
    F: float
    C1: float
    C2: float

    def as_dict(self) -> dict:
        return {"H": self.H, "F": self.F, "C1": self.C1, "C2": self.C2}

    def max(self) -> float:
        return max(self.H, self.F, self.C1, self.C2)


def drift_report(tr: TrajectoryRecord) -> DriftSummary:
    """Max ``|Q(t) - Q(0)| / max(1, |Q(0)|)`` for ``H, F, C1, C2``."""
    if len(tr) == 0:
        raise ValueError("empty trajectory")

    def d(col):
        return float(np.max(np.abs(col - col[0])) / max(1.0, abs(col[0])))

    return DriftSummary(d(tr.H), d(tr.F), d(tr.C1), d(tr.C2))


def leaf_project(x, c1: float, c2: float, P=alg.EUCLIDEAN) -> np.ndarray:
    """Rescale ``q`` onto ``(q, Gq) = c1`` then shift ``M`` along ``q`` to ``(M, Gq) = c2``."""
    P = alg.structure(P)
    x = alg.as_coords(x).astype(float).copy()
    M, q = x[:3], x[3:]
    G = np.diag(P.metric())
    n2 = float(np.sum(G * q * q))
    if not np.any(q):
        raise sy.DomainError("leaf projection needs q != 0")
    if n2 * c1 <= 0:
        raise sy.DomainError("q on the wrong side of the light cone for this leaf")
    q = q * math.sqrt(c1 / n2)
    M = M + (c2 - float(np.sum(G * M * q))) / c1 * q
    return np.concatenate([M, q])


class _Singular(Exception):
    pass


class _Flow:
    def __init__(self, p: sy.SystemParams, cfg: IntegratorConfig):
        self.p = p
        self.cfg = cfg
        self.H, self.F = sy.fields(p)
        self.P = p.poisson

    def rhs(self, x):
        try:
            if self.cfg.gradient == "dual":
                v = alg.hamiltonian_vector_field(self.H, x, self.P)
            else:
                xl = x.tolist()
                v = np.array(self.P.apply(xl, sy.hamiltonian_gradient(xl, self.p)))
        except (sy.DomainError, alg.EvaluationError, OverflowError, ZeroDivisionError) as exc:
            raise _Singular(str(exc)) from exc
        if not np.all(np.isfinite(v)):
            raise _Singular("non-finite vector field")
        return v

    def near_singular(self, x) -> bool:
        if not np.all(np.isfinite(x)):
            return True
        try:
            R = float(sy.R_value(x[3:], self.p))
        except sy.DomainError:
            return True
        return not R > self.cfg.singularity_radius


def _hermite(t0, y0, f0, t1, y1, f1, ts):
    h = t1 - t0
    s = (np.asarray(ts) - t0) / h
    s = s[:, None]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _rk4_step(flow, x, fx, h):
    k1 = fx
    k2 = flow.rhs(x + 0.5 * h * k1)
    k3 = flow.rhs(x + 0.5 * h * k2)
    k4 = flow.rhs(x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


_AMAT = np.zeros((7, 7))
for _i, _row in enumerate(_A):
    _AMAT[_i, : len(_row)] = _row

# Dormand-Prince continuous extension: y(t + th h) = y + h K^T (P @ [th, th^2, th^3, th^4])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


def _dopri_step(flow, x, fx, h):
    K = np.empty((7, alg.NDIM))
    K[0] = fx
    for i in range(1, 7):
        K[i] = flow.rhs(x + h * (_AMAT[i, :i] @ K[:i]))
    x5 = x + h * (_B5 @ K)
    err = h * (_E @ K)
    return x5, err, K


def _dopri_dense(x, h, K, theta):
    theta = np.asarray(theta)
    powers = theta[:, None] ** np.arange(1, 5)
    return x + h * (powers @ _P.T @ K)


def integrate(x0, p: sy.SystemParams, cfg: IntegratorConfig = IntegratorConfig()) -> TrajectoryRecord:
    """Integrate from ``x0`` and record ``H, F, C1, C2`` at every sample."""
    flow = _Flow(p, cfg)
    x = alg.as_coords(x0).astype(float).copy()
    if flow.near_singular(x):
        raise sy.DomainError("initial point inside the singularity radius")
    c1_0, c2_0 = (float(c) for c in alg.casimirs(x, flow.P))

    if cfg.sample_dt is None:
        grid = None
    else:
        n = int(math.floor(cfg.t_end / cfg.sample_dt + 1e-9))
        grid = np.arange(n + 1) * cfg.sample_dt
        if grid[-1] < cfg.t_end * (1 - 1e-12):
            grid = np.append(grid, cfg.t_end)
    ts, xs = [0.0], [x.copy()]
    next_sample = 1

    t = 0.0
    fx = flow.rhs(x)
    h = cfg.step if cfg.method == "rk4" else _initial_step(flow, x, fx, cfg)
    reason = T_END
    n_steps = n_rejected = 0

    while t < cfg.t_end * (1 - 1e-14):
        if n_steps >= cfg.max_steps:
            reason = MAX_STEPS
            break
        h = min(h, cfg.t_end - t)
        try:
            if cfg.method == "rk4":
                x_new = _rk4_step(flow, x, fx, h)
                accept, fac = True, 1.0
            else:
                x_new, err, K = _dopri_step(flow, x, fx, h)
                scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
                e = float(np.max(np.abs(err) / scale))
                accept = e <= 1.0
                fac = 0.9 * e ** (-0.2) if e > 0 else 5.0
                fac = min(5.0, max(0.2, fac))
        except _Singular:
            accept, fac = False, 0.25
            if cfg.method == "rk4":
                reason = SINGULARITY
                break
        if not accept:
            n_rejected += 1
            h *= fac
            if h < cfg.h_min * max(1.0, t):
                reason = SINGULARITY
                break
            continue

        if cfg.projection == "leaf":
            x_new = leaf_project(x_new, c1_0, c2_0, flow.P)
        if flow.near_singular(x_new):
            reason = SINGULARITY
            break
        try:
            f_new = flow.rhs(x_new) if (cfg.method == "rk4" or cfg.projection == "leaf") else K[6]
        except _Singular:
            reason = SINGULARITY
            break
        t_new = t + h
        if grid is None:
            ts.append(t_new)
            xs.append(x_new.copy())
        else:
            j = next_sample
            while j < len(grid) and grid[j] <= t_new * (1 + 1e-14):
                j += 1
            if j > next_sample:
                pts = grid[next_sample:j]
                if cfg.method == "rk45":
                    dense = _dopri_dense(x, h, K, (pts - t) / h)
                else:
                    dense = _hermite(t, x, fx, t_new, x_new, f_new, pts)
                if cfg.projection == "leaf":
                    dense = [leaf_project(y, c1_0, c2_0, flow.P) for y in dense]
                xs.extend(dense)
                ts.extend(pts)
                next_sample = j
        t, x, fx = t_new, x_new, f_new
        n_steps += 1
        if cfg.method == "rk45":
            h *= fac

    if reason != T_END:
        log.info("integration stopped: %s at t=%.6g", reason, t)
    states = np.array(xs)
    H, F = sy.fields(p)
    z = tuple(states.T)
    Hv = np.asarray(H(z[:3], z[3:]), dtype=float)
    Fv = np.asarray(F(z[:3], z[3:]), dtype=float)
    C1, C2 = alg.casimirs(states, flow.P)
    return TrajectoryRecord(np.array(ts), states, Hv, Fv, C1, C2, reason, n_steps, n_rejected,
                            {"t_stop": t})


def _initial_step(flow, x, fx, cfg) -> float:
    # Hairer-Norsett-Wanner starting step heuristic
    sc = cfg.abs_tol + cfg.rel_tol * np.abs(x)
    d0 = np.sqrt(np.mean((x / sc) ** 2))
    d1 = np.sqrt(np.mean((fx / sc) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    try:
        f1 = flow.rhs(x + h0 * fx)
    except _Singular:
        return h0
    d2 = np.sqrt(np.mean(((f1 - fx) / sc) ** 2)) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, cfg.t_end)
