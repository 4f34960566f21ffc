"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

The lines are also collected and repeated in the terminal summary (see
``conftest.py``) so they show up without ``-s``.
"""

import time

import numpy as np
import pytest

from twocentre import checks as ck
from twocentre import cli
from twocentre import systems as sy

SEED = 20240601
RESULTS: list[str] = []

pytestmark = pytest.mark.acceptance


def verdict(number: int, title: str, results: list[ck.Check], extra: str = "") -> None:
    failed = [c for c in results if c.failed]
    status = "PASS" if not failed else "FAIL"
    worst = ", ".join(f"{c.name}={c.value:.3g}" for c in failed[:3])
    detail = extra or f"{len(results)} checks"
    line = f"[{status}] criterion {number:2d} {title}: {detail}" + (f"; failing: {worst}" if failed else "")
    print(line)
    RESULTS.append(line)
    assert not failed, line


def _worst(results, kind=ck.UPPER):
    vals = [c.value / c.tol for c in results if c.kind == kind and c.tol]
    return max(vals) if vals else 0.0


def test_criterion_01_spherical_brackets():
    rng = np.random.default_rng(SEED)
    out = []
    for A, B in ((2.0, 1.0), (5.0, 0.5)):
        for mu in (-1.0, 0.0, 1.0, 3.7):
            out += [c for c in ck.bracket_suite(sy.SystemParams(A, B, mu), rng, 1000) if c.name.startswith("{H,F}")]
    verdict(1, "spherical {H,F} <= 1e-9 scale", out, f"{len(out)} parameter sets, worst value/tol {_worst(out):.2e}")


def test_criterion_02_hyperbolic_brackets():
    rng = np.random.default_rng(SEED + 1)
    out = []
    for A, B in ((1.0, 2.0), (0.25, 3.0)):
        for mu in (-1.0, 0.0, 1.0, 3.7):
            p = sy.SystemParams(A, B, mu, sy.SystemSignature.HYPERBOLIC)
            out += [c for c in ck.bracket_suite(p, rng, 1000) if c.name.startswith("{H,F}")]
    verdict(2, "hyperbolic {H,F} <= 1e-9 scale", out, f"{len(out)} parameter sets, worst value/tol {_worst(out):.2e}")


def test_criterion_03_casimir_brackets():
    rng = np.random.default_rng(SEED + 2)
    out = []
    grid = [sy.SystemParams(A, B, mu) for A, B in ((2.0, 1.0), (5.0, 0.5)) for mu in (-1.0, 0.0, 1.0, 3.7)]
    grid += [sy.SystemParams(A, B, mu, sy.SystemSignature.HYPERBOLIC)
             for A, B in ((1.0, 2.0), (0.25, 3.0)) for mu in (-1.0, 0.0, 1.0, 3.7)]
    for p in grid:
        out += [c for c in ck.bracket_suite(p, rng, 1000) if "C" in c.name]
    verdict(3, "Casimir brackets <= 1e-10 scale", out, f"{len(out)} brackets, worst value/tol {_worst(out):.2e}")


def test_criterion_04_killing_baseline():
    rng = np.random.default_rng(SEED + 3)
    out = ck.mamaev_suite(sy.KillingParams(1.0, 0.6, 0.8), rng, 500)
    on = next(c for c in out if c.kind == ck.UPPER)
    off = next(c for c in out if c.kind == ck.NEGATIVE_CONTROL)
    verdict(4, "Killing/Mamaev leaf test", out, f"on leaf {on.value:.2e} <= 1e-9, off leaf {off.value:.3g} > 1e-3")


def test_criterion_05_conservation():
    out = []
    for nu in (0.0, 1.0):
        out += ck.conservation_suite(sy.SystemParams(2.0, 1.0, 1.0), nu, SEED)
    ratios = ", ".join(f"{c.value:.2f}" for c in out if c.kind == "range")
    verdict(5, "drift under RK45 and RK4 order", out, f"worst drift/tol {_worst(out):.2e}, RK4 ratios {ratios}")


def test_criterion_06_elliptic():
    p = sy.SystemParams(2.0, 1.0, 1.0)
    rng = np.random.default_rng(SEED + 5)
    out = ck.elliptic_identity_suite(p, rng, 10_000)
    for nu in (0.0, 0.5, -0.5, 1.0):
        out += ck.elliptic_hamiltonian_suite(p, nu, rng, 100)
    for nu in (0.5, 1.0):
        out += ck.gauge_suite(p, nu, rng)
    out += ck.separation_suite(p, 0.0, SEED, t_end=50.0)
    verdict(6, "elliptic identities, H agreement, dA, separation", out, f"{len(out)} checks, worst value/tol {_worst(out):.2e}")


def test_criterion_07_kinetic_spectrum():
    out = []
    for nu in (0.0, 0.5, 1.0):
        out += ck.kinetic_spectrum_suite(nu)
    verdict(7, "mu=0 spectrum j(j+1)/2 with multiplicity 2j+1", out, f"max error {max(c.value for c in out):.2e}")


def test_criterion_08_structure():
    out, signs = [], []
    for nu in (0.0, 0.5, 1.0):
        checks, info = ck.structure_suite(nu, 6 + abs(nu))
        out += checks
        signs.append(f"nu={nu:g}:{info['S_scalar']:+.9f}")
    verdict(8, "Gram, so(3), sum q^2, S scalar", out, f"worst value/tol {_worst(out):.2e}; S {' '.join(signs)}")


def test_criterion_09_commutator_convergence():
    p = sy.SystemParams(2.0, 1.0, 1.0)
    out, tables = [], []
    t0 = time.perf_counter()
    for nu in (0.0, 0.5):
        checks, rows = ck.commutator_suite(p, nu)
        out += checks
        tables.append(f"nu={nu:g}: " + " > ".join(f"{r['diagnostic']:.3e}" for r in rows))
    elapsed = time.perf_counter() - t0
    verdict(9, "interior [H,F] decreasing in j_max", out, "; ".join(tables) + f" ({elapsed:.0f} s)")


def test_criterion_10_determinism(tmp_path):
    runs = {
        "verify": ["verify", "--set", "verify.n_points=200"],
        "simulate": ["simulate", "--set", "integrator.t_end=5"],
        "quantum": ["quantum", "--set", "quantum.n_theta=48", "--set", "quantum.n_phi=48", "--set", "quantum.j_max=4"],
        "sweep": ["sweep", "--set", "sweep.A=[2, 3, 1]", "--set", "sweep.mu=[0, 1, 3.7]", "--set", "sweep.n_points=100"],
    }
    out = []
    for name, argv in runs.items():
        blobs = []
        variants = ([], []) if name != "sweep" else (["--set", "sweep.workers=1"], ["--set", "sweep.workers=4"])
        for k, extra in enumerate(variants):
            path = tmp_path / f"{name}{k}.{'csv' if name != 'verify' else 'json'}"
            code = cli.run(argv + extra + ["--out", str(path)])
            blobs.append(path.read_bytes() if code in (0, 1) else b"")
        same = blobs[0] == blobs[1] and blobs[0] != b""
        out.append(ck.Check(f"byte-identical {name}", "identical", float(not same), 0.0, same))
    verdict(10, "repeated CLI runs byte-identical", out, ", ".join(c.name.split()[-1] for c in out if c.passed)
            + " identical (sweep: 1 vs 4 workers)")
