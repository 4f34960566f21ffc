"""Verification suites shared by the CLI and the acceptance tests.

Each suite returns a list of :class:`Check` records. A check is an upper bound
(``value <= tol``), a lower bound used for negative controls
(``value > tol``), a plain report, or a documented skip.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import algebra as alg
from . import dynamics as dy
from . import elliptic as el
from . import quantum as qm
from . import systems as sy

UPPER = "upper"
NEGATIVE_CONTROL = "negative-control"
REPORT = "report"
SKIP = "skip"

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    name: str
    kind: str
    value: float | None
    tol: float | None
    passed: bool | None
    note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def failed(self) -> bool:
        return self.passed is False


def upper(name: str, value: float, tol: float, note: str = "") -> Check:
    value = float(value)
    return Check(name, UPPER, value, tol, bool(value <= tol), note)


def negative_control(name: str, value: float, threshold: float, note: str = "") -> Check:
    """Expected failure of the property: passes when ``value > threshold``."""
    value = float(value)
    return Check(name, NEGATIVE_CONTROL, value, threshold, bool(value > threshold), note)


def report(name: str, value: float, note: str = "") -> Check:
    return Check(name, REPORT, float(value), None, None, note)


def skipped(name: str, reason: str) -> Check:
    return Check(name, SKIP, None, None, None, reason)


def all_passed(checks) -> bool:
    return not any(c.failed for c in checks)


# ---------------------------------------------------------------------------
# brackets
# ---------------------------------------------------------------------------


def _ratio(f, g, x, P) -> float:
    br, scale = alg.bracket_with_scale(f, g, x, P)
    return float(np.max(np.abs(br) / scale))


def bracket_suite(p: sy.SystemParams, rng: np.random.Generator, n: int = 1000,
                  tol: float = 1e-9, casimir_tol: float = 1e-10) -> list[Check]:
    """``{H, F}`` and the Casimir brackets at ``n`` random points, scaled."""
    tag = f"{p.signature.value}(A={p.A:g},B={p.B:g},mu={p.mu:g})"
    x = sy.random_points(rng, n, p)
    H, F = sy.fields(p)
    P = p.poisson
    out = [upper(f"{{H,F}} {tag}", _ratio(H, F, x, P), tol, f"max |{{H,F}}|/scale over {n} points")]
    C1, C2 = alg.casimir_fields(P)
    for fname, f in (("H", H), ("F", F)):
        for cname, c in (("C1", C1), ("C2", C2)):
            out.append(upper(f"{{{fname},{cname}}} {tag}", _ratio(f, c, x, P), casimir_tol))
    return out


def mamaev_suite(kp: sy.KillingParams, rng: np.random.Generator, n: int = 500,
                 tol: float = 1e-9, control_threshold: float = 1e-3) -> list[Check]:
    """Killing baseline: commuting on ``(M, q) = 0``, not on ``(M, q) = 1``."""
    H, F = sy.killing_fields(kp)
    on = sy.leaf_points(rng, n, 0.0)
    off = sy.leaf_points(rng, n, 1.0)
    br_off = alg.poisson_bracket(H, F, off, alg.EUCLIDEAN)
    return [
        upper("mamaev {H,F} on (M,q)=0", _ratio(H, F, on, alg.EUCLIDEAN), tol),
        negative_control("mamaev {H,F} on (M,q)=1", np.max(np.abs(br_off)), control_threshold,
                         "the baseline integral is not conserved off the special leaf"),
    ]


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def _leaf_candidate(rng: np.random.Generator, nu: float) -> np.ndarray:
    q = rng.normal(size=3)
    q /= np.linalg.norm(q)
    M = rng.uniform(-1.0, 1.0, size=3)
    M += (nu - M @ q) * q
    return np.concatenate([M, q])


def nonsingular_run(p: sy.SystemParams, nu: float, seed: int, cfg: dy.IntegratorConfig,
                    min_R: float = 1e-2, attempts: int = 50):
    """First seeded leaf point whose orbit reaches ``t_end`` with ``R >= min_R`` throughout."""
    rng = np.random.default_rng(seed)
    for attempt in range(attempts):
        x0 = _leaf_candidate(rng, nu)
        if sy.R_value(tuple(x0[3:]), p) < min_R:
            continue
        tr = dy.integrate(x0, p, cfg)
        if tr.reason != dy.T_END:
            continue
        if np.min(sy.R_value(tuple(tr.states[:, 3:].T), p)) < min_R:
            continue
        return x0, tr, attempt
    raise RuntimeError(f"no nonsingular orbit found in {attempts} seeded attempts")


def rk4_order_ratio(x0, p: sy.SystemParams, step: float = 0.01, t_end: float = 10.0) -> float:
    """Ratio of the max ``H`` drift at steps ``h`` and ``h / 2``."""
    drifts = []
    for h in (step, step / 2):
        cfg = dy.IntegratorConfig(method="rk4", step=h, t_end=t_end, sample_dt=None)
        tr = dy.integrate(x0, p, cfg)
        if tr.reason != dy.T_END:
            raise RuntimeError(f"fixed-step run at h={h:g} stopped early: {tr.reason}")
        drifts.append(dy.drift_report(tr).H)
    return drifts[0] / drifts[1]


def conservation_suite(p: sy.SystemParams, nu: float, seed: int, t_end: float = 100.0,
                       tol: float = 1e-10, min_R: float = 0.05) -> list[Check]:
    """Drift bounds and the RK4 order ratio on one seeded orbit.

    ``min_R`` keeps the orbit far enough from the centres that a fixed step
    of 0.01 resolves the fastest local time scale, otherwise the ratio is
    not in its asymptotic regime.
    """
    cfg = dy.IntegratorConfig(abs_tol=tol, rel_tol=tol, t_end=t_end)
    x0, tr, attempt = nonsingular_run(p, nu, seed, cfg, min_R=min_R)
    d = dy.drift_report(tr)
    tag = f"nu={nu:g}"
    note = f"seed {seed}, candidate {attempt}, {tr.n_steps} steps"
    ratio = rk4_order_ratio(x0, p)
    return [
        upper(f"drift H {tag}", d.H, 1e-6, note),
        upper(f"drift F {tag}", d.F, 1e-6, note),
        upper(f"drift C1 {tag}", d.C1, 1e-8, note),
        upper(f"drift C2 {tag}", d.C2, 1e-8, note),
        Check(f"rk4 order ratio {tag}", "range", ratio, 16.0,
              bool(12.0 <= ratio <= 20.0), "H-drift ratio for h=0.01 vs h=0.005 over t=10; expected in [12, 20]"),
    ]


# ---------------------------------------------------------------------------
# elliptic coordinates
# ---------------------------------------------------------------------------


def _unit_points(rng, n):
    q = rng.normal(size=(n, 3))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def elliptic_identity_suite(p: sy.SystemParams, rng: np.random.Generator, n: int = 10_000) -> list[Check]:
    q = _unit_points(rng, n)
    u1, u2 = el.to_elliptic(q, p)
    order = np.max(np.maximum.reduce([-u1, u1 - p.B, p.B - u2, u2 - p.A]))
    signs = np.where(q >= 0, 1, -1)
    back = np.stack(el.from_elliptic(u1, u2, p, tuple(signs.T)), axis=-1)
    R = sy.R_value(tuple(q.T), p)
    R_ell = el.R_in_elliptic(u1, u2, signs[:, 2])
    return [
        upper("root ordering 0<=u1<=B<=u2<=A (max violation)", max(order, 0.0), 1e-12),
        upper("round trip q -> u -> q", np.max(np.abs(back - q)), 1e-10),
        upper("R = (sqrt u1 - sqrt u2)^2", np.max(np.abs(R - R_ell) / np.maximum(1.0, R)), 1e-12),
    ]


def _interior_leaf_points(rng, n, nu, p, margin=1e-3):
    out = []
    while len(out) < n:
        x = sy.leaf_points(rng, 1, nu)[0]
        u1, u2 = el.to_elliptic(x[3:], p)
        if el.chart_interior(u1, u2, p, margin) and sy.R_value(tuple(x[3:]), p) > 1e-3:
            out.append(x)
    return np.array(out)


def elliptic_hamiltonian_suite(p: sy.SystemParams, nu: float, rng: np.random.Generator,
                               n: int = 100) -> list[Check]:
    pts = _interior_leaf_points(rng, n, nu, p)
    dH, dF = 0.0, 0.0
    for x in pts:
        ep = el.phase_to_elliptic(x, p)
        Hc, Fc = float(sy.hamiltonian(x, p)), float(sy.integral_F(x, p))
        dH = max(dH, abs(el.H_elliptic(ep, p, nu) - Hc) / max(1.0, abs(Hc)))
        dF = max(dF, abs(el.F_elliptic(ep, p, nu) - Fc) / max(1.0, abs(Fc)))
    return [
        upper(f"H cartesian vs elliptic nu={nu:g}", dH, 1e-9),
        report(f"F cartesian vs elliptic nu={nu:g}", dF, "max relative deviation, reported only"),
    ]


def gauge_suite(p: sy.SystemParams, nu: float, rng: np.random.Generator, n: int = 200) -> list[Check]:
    """Monopole field density from the gauge potential, two ways."""
    q = _unit_points(rng, n)
    q = q[q[:, 0] ** 2 + q[:, 1] ** 2 > 1e-2]
    outward = np.array([el.verify_dA(x, nu) for x in q])
    pos = np.abs(q)
    u1, u2 = el.to_elliptic(pos, p)
    ok = el.chart_interior(u1, u2, p, 1e-3)
    curls = np.array([el.pullback_curl(a, b, nu, p) for a, b in zip(u1[ok], u2[ok])])
    dens = el.field_density(u1[ok], u2[ok], 1.0, p)
    sign = float(np.sign(np.mean(outward))) if nu else 0.0
    return [
        upper(f"|dA| density = |nu| (outward dS) nu={nu:g}", np.max(np.abs(np.abs(outward) - abs(nu))), 1e-6,
              f"measured dA = {sign:+g}|nu| dS against the outward area form"),
        upper(f"dA density in elliptic chart = nu nu={nu:g}", np.max(np.abs(curls / dens - nu)), 1e-6,
              "curl of the pulled-back potential over the chart area density, positive octant"),
    ]


def separation_suite(p: sy.SystemParams, nu: float, seed: int, t_end: float = 50.0) -> list[Check]:
    if nu != 0:
        return [skipped("separation constants", "ν≠0: the separation applies at zero monopole charge only")]
    cfg = dy.IntegratorConfig(t_end=t_end)
    _, tr, _ = nonsingular_run(p, 0.0, seed, cfg)
    s = el.separation_check(tr.t, tr.states, p)
    note = f"{len(s.t)} samples used, {s.skipped} near chart boundaries skipped"
    return [
        upper("separation constants k1 = k2", s.max_mismatch, 1e-6, note),
        upper("separation constant drift", s.drift, 1e-6, note),
    ]


# ---------------------------------------------------------------------------
# quantum
# ---------------------------------------------------------------------------


def kinetic_spectrum_suite(nu: float, j_max: float | None = None, A: float = 2.0, B: float = 1.0) -> list[Check]:
    j_max = 6 + abs(nu) if j_max is None else j_max
    basis = qm.MonopoleBasis.from_nu(nu, j_max)
    p = sy.SystemParams(A, B, 0.0)
    H = qm.build_H(p, basis, qm.SphereQuadrature(64, 64))
    spec = qm.eigen_spectrum(H)
    return [upper(f"mu=0 spectrum j(j+1)/2 nu={nu:g}", np.max(np.abs(spec.values - qm.kinetic_levels(basis))), 1e-10,
                  f"dimension {basis.dim}, multiplicities 2j+1")]


def structure_suite(nu: float, j_max: float, quad: qm.SphereQuadrature | None = None,
                    p: sy.SystemParams | None = None) -> tuple[list[Check], dict]:
    basis = qm.MonopoleBasis.from_nu(nu, j_max)
    model = qm.QuantumModel(p or sy.SystemParams(2.0, 1.0, 1.0), basis, quad or qm.SphereQuadrature())
    G = model.asm.gram()
    q2, q2dev = qm.interior_scalar(sum(Q @ Q for Q in model.q), basis)
    s, sdev = qm.interior_scalar(model.S, basis)
    su, sudev = qm.interior_scalar(model.S_unsymmetrised, basis)
    tag = f"nu={nu:g}"
    sign = "+" if s > 0 else ("-" if s < 0 else "0")
    checks = [
        upper(f"gram residual {tag}", np.max(np.abs(G - np.eye(basis.dim))), 1e-8),
        upper(f"so(3) relations {tag}", qm.so3_residuals(model.M), 1e-12),
        upper(f"interior sum q_i^2 = Id {tag}", max(q2dev, abs(q2 - 1.0)), 1e-6),
        upper(f"S scalar = +-nu {tag}", max(sdev, abs(abs(s) - abs(nu))), 1e-6, f"measured {s:+.15g} (sign {sign})"),
        report(f"S unsymmetrised - symmetrised {tag}", float(np.max(np.abs(model.S_unsymmetrised - model.S))),
               f"unsymmetrised scalar {su:+.15g}, deviation {sudev:.3e}"),
        upper(f"[M,q] vector relations {tag}", qm.vector_operator_residual(model.M, model.q, basis), 1e-6),
    ]
    info = {"S_scalar": s, "S_sign": sign, "raw_hermiticity": model.raw_hermiticity(), "dim": basis.dim}
    return checks, info


def commutator_table(p: sy.SystemParams, nu: float, j_grid, j_cut: float,
                     quad: qm.SphereQuadrature | None = None) -> list[dict]:
    rows = []
    for j_max in j_grid:
        t0 = time.perf_counter()
        basis = qm.MonopoleBasis.from_nu(nu, j_max)
        model = qm.QuantumModel(p, basis, quad or qm.SphereQuadrature())
        value = qm.commutator_diagnostic(model.H(), model.F(), basis, j_cut)
        log.info("commutator diagnostic j_max=%g: %.3e (%.1f s)", j_max, value, time.perf_counter() - t0)
        rows.append({"j_max": float(j_max), "j_cut": float(j_cut), "dim": basis.dim, "diagnostic": value})
    return rows


def commutator_suite(p: sy.SystemParams, nu: float, steps=(8, 12, 16), cut: float = 6.0,
                     quad: qm.SphereQuadrature | None = None) -> tuple[list[Check], list[dict]]:
    """Truncation convergence of the interior commutator.

    For half-integer ``nu`` the cutoffs are shifted by ``|nu|`` so that they
    are valid angular momenta.
    """
    shift = abs(nu) % 1.0
    grid = [s + shift for s in steps]
    rows = commutator_table(p, nu, grid, cut + shift, quad)
    return [decreasing_check(f"interior [H,F] strictly decreasing nu={nu:g}", rows)], rows


def decreasing_check(name: str, rows: list[dict], exact: float = 1e-12) -> Check:
    """Strict decrease of the diagnostic along ``rows``; an all-exact table also passes."""
    vals = [r["diagnostic"] for r in rows]
    table = ", ".join(f"{r['j_max']:g}:{r['diagnostic']:.3e}" for r in rows)
    if vals and max(vals) <= exact:
        return Check(name, "monotone", max(vals), exact, True, f"commutes to rounding at every cutoff; {table}")
    worst = max((b / a if a > 0 else float("inf") for a, b in zip(vals, vals[1:])), default=0.0)
    return Check(name, "monotone", worst, 1.0, bool(worst < 1.0), f"largest successive ratio; j_max:value {table}")
