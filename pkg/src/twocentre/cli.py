"""Command-line driver: ``twocentre {verify,simulate,elliptic-check,quantum,sweep}``.

Configuration is one JSON document merged over built-in defaults; command-line
flags override the JSON. Precedence, lowest first: defaults, ``--config``
file, ``--set key.path=value`` overrides, dedicated flags (``--seed``).

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import algebra as alg
from . import checks as ck
from . import dynamics as dy
from . import quantum as qm
from . import systems as sy

log = logging.getLogger("twocentre")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS: dict = {
    "seed": 20240601,
    "system": {"A": 2.0, "B": 1.0, "mu": 1.0, "signature": "spherical", "experimental": False},
    "leaf": {"radius": 1.0, "nu": 0.0},
    "initial": [0.0, 0.4, 0.3, 0.0, 0.0, 1.0],
    "integrator": {
        "method": "rk45",
        "step": 0.01,
        "abs_tol": 1e-10,
        "rel_tol": 1e-10,
        "t_end": 10.0,
        "max_steps": 1_000_000,
        "projection": "none",
        "singularity_radius": 1e-8,
        "sample_dt": 0.1,
    },
    "verify": {"n_points": 1000, "mamaev": {"mu": 1.0, "alpha": 0.6, "beta": 0.8}, "mamaev_points": 500},
    "elliptic": {"n_identity": 10_000, "n_leaf": 100, "t_end": 50.0},
    "quantum": {
        "two_nu": 0,
        "j_max": 6,
        "n_theta": 128,
        "n_phi": 128,
        "euler": list(qm.DEFAULT_EULER),
        "j_cut": None,
        "j_grid": [],
    },
    "sweep": {"A": [2.0], "B": [1.0], "mu": [1.0], "nu": [0.0], "n_points": 200, "workers": 1},
}


class ConfigError(ValueError):
    """Invalid configuration or command-line usage."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"configuration key {where!r} must be an object")
            out[key] = _merge(out[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _set_path(cfg: dict, dotted: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"--set {dotted}: {k!r} is not a configuration section")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(f"--set {dotted}: unknown key {keys[-1]!r}")
    node[keys[-1]] = value


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, doc)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key.path=value, got {item!r}")
        key, raw = item.split("=", 1)
        _set_path(cfg, key.strip(), raw.strip())
    if args.seed is not None:
        cfg["seed"] = args.seed
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return cfg


# execution-only settings: they change how a run is scheduled, never its output
EXECUTION_KEYS = (("sweep", "workers"),)


def config_hash(cfg: dict) -> str:
    view = copy.deepcopy(cfg)
    for section, key in EXECUTION_KEYS:
        view.get(section, {}).pop(key, None)
    blob = json.dumps(view, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def system_params(section: dict) -> sy.SystemParams:
    try:
        sig = sy.SystemSignature(section["signature"])
        return sy.SystemParams(float(section["A"]), float(section["B"]), float(section["mu"]), sig,
                               bool(section.get("experimental", False)))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid system parameters: {exc}") from exc


def integrator_config(section: dict, **override) -> dy.IntegratorConfig:
    try:
        return dy.IntegratorConfig(**{**section, **override})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid integrator configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# results and serialisation
# ---------------------------------------------------------------------------


@dataclass
class ResultBundle:
    command: str
    config: dict
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.provenance = {"seed": self.config["seed"], "version": __version__, "config_hash": config_hash(self.config)}

    def add(self, items) -> None:
        names = {c.name for c in self.checks}
        for c in items:
            if c.name in names:
                raise RuntimeError(f"duplicate check name {c.name!r}")
            names.add(c.name)
            self.checks.append(c)

    @property
    def passed(self) -> bool:
        return ck.all_passed(self.checks)

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "passed": self.passed,
            "provenance": self.provenance,
            "checks": [{**c.as_dict(), "status": _status(c)} for c in self.checks],
            **self.extra,
        }


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def provenance_line(prov: dict) -> str:
    return f"# twocentre {prov['version']} seed={prov['seed']} config_sha256={prov['config_hash']}\n"


def render_csv(header, rows, prov: dict) -> str:
    buf = io.StringIO()
    buf.write(provenance_line(prov))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def render_json(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def checks_csv(bundle: ResultBundle) -> str:
    rows = [(c.name, c.kind, c.value, c.tol, _status(c), c.note) for c in bundle.checks]
    return render_csv(["check", "kind", "value", "tolerance", "status", "note"], rows, bundle.provenance)


def _status(c: ck.Check) -> str:
    if c.kind == ck.SKIP:
        return "SKIP"
    if c.kind == ck.REPORT:
        return "REPORT"
    if c.kind == ck.NEGATIVE_CONTROL:
        return "FAIL-expected" if c.passed else "UNEXPECTED-PASS"
    return "PASS" if c.passed else "FAIL"


def _write(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _sidecar(path: Path | None, suffix: str) -> Path | None:
    return None if path is None else path.with_name(path.stem + suffix)


def emit_bundle(bundle: ResultBundle, out: Path | None, form: str) -> None:
    _write(checks_csv(bundle) if form == "csv" else render_json(bundle.as_dict()), out)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _jacobi_checks(P, rng, n=100) -> list:
    coords = [alg.coordinate_field(i) for i in range(alg.NDIM)]
    x = rng.uniform(-2, 2, size=(n, alg.NDIM))
    worst = 0.0
    for i in range(alg.NDIM):
        for j in range(i + 1, alg.NDIM):
            for k in range(j + 1, alg.NDIM):
                f, g, h = coords[i], coords[j], coords[k]
                total = np.zeros(n)
                scale = np.zeros(n)
                for a, b, c in ((f, g, h), (g, h, f), (h, f, g)):
                    br, sc = alg.bracket_with_scale(alg.bracket_field(a, b, P), c, x, P)
                    total += br
                    scale += sc + 1e-300
                worst = max(worst, float(np.max(np.abs(total) / np.maximum(scale, 1.0))))
    return [ck.upper(f"jacobi identity coordinates {P.signature.value}", worst, 1e-10)]


def cmd_verify(cfg: dict) -> ResultBundle:
    p = system_params(cfg["system"])
    rng = np.random.default_rng(cfg["seed"])
    v = cfg["verify"]
    bundle = ResultBundle("verify", cfg)
    bundle.add(ck.bracket_suite(p, rng, int(v["n_points"])))
    bundle.add(_jacobi_checks(p.poisson, rng))
    km = v["mamaev"]
    try:
        kp = sy.KillingParams(float(km["mu"]), float(km["alpha"]), float(km["beta"]))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid baseline parameters: {exc}") from exc
    bundle.add(ck.mamaev_suite(kp, rng, int(v["mamaev_points"])))
    return bundle


def cmd_simulate(cfg: dict) -> tuple[ResultBundle, dy.TrajectoryRecord]:
    p = system_params(cfg["system"])
    icfg = integrator_config(cfg["integrator"])
    try:
        x0 = alg.as_coords(np.asarray(cfg["initial"], dtype=float))
        tr = dy.integrate(x0, p, icfg)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid initial point: {exc}") from exc
    d = dy.drift_report(tr)
    bundle = ResultBundle("simulate", cfg)
    extra = {
        "termination": tr.reason,
        "n_samples": len(tr),
        "n_steps": tr.n_steps,
        "n_rejected": tr.n_rejected,
        "t_stop": tr.meta["t_stop"],
        "drift": d.as_dict(),
    }
    if tr.reason != dy.T_END:
        extra["warning"] = f"integration stopped early: {tr.reason}"
    bundle.extra = extra
    return bundle, tr


def trajectory_csv(tr: dy.TrajectoryRecord, prov: dict) -> str:
    header = ["t", "M1", "M2", "M3", "q1", "q2", "q3", "H", "F", "C1", "C2"]
    rows = (
        (t, *x, h, f, c1, c2)
        for t, x, h, f, c1, c2 in zip(tr.t, tr.states, tr.H, tr.F, tr.C1, tr.C2)
    )
    return render_csv(header, rows, prov)


def cmd_elliptic_check(cfg: dict) -> ResultBundle:
    p = system_params(cfg["system"])
    if p.signature is not sy.SystemSignature.SPHERICAL:
        raise ConfigError("elliptic-check needs the spherical family")
    nu = float(cfg["leaf"]["nu"])
    if float(cfg["leaf"]["radius"]) != 1.0:
        raise ConfigError("elliptic-check works on the unit sphere (leaf.radius = 1)")
    e = cfg["elliptic"]
    rng = np.random.default_rng(cfg["seed"])
    bundle = ResultBundle("elliptic-check", cfg)
    bundle.add(ck.elliptic_identity_suite(p, rng, int(e["n_identity"])))
    bundle.add(ck.elliptic_hamiltonian_suite(p, nu, rng, int(e["n_leaf"])))
    bundle.add(ck.gauge_suite(p, nu, rng))
    bundle.add(ck.separation_suite(p, nu, int(cfg["seed"]), float(e["t_end"])))
    return bundle


def _quantum_inputs(cfg: dict):
    qc = cfg["quantum"]
    p = system_params(cfg["system"])
    two_nu = qc["two_nu"]
    if isinstance(two_nu, bool) or not float(two_nu).is_integer():
        raise ConfigError(f"quantum.two_nu={two_nu!r}: 2ν must be an integer (Dirac quantisation)")
    nu = int(two_nu) / 2
    j_max = float(qc["j_max"])
    if j_max < abs(nu) + 2:
        raise ConfigError(f"quantum.j_max={j_max} must be at least |ν| + 2 = {abs(nu) + 2}")
    try:
        basis = qm.MonopoleBasis(int(two_nu), j_max)
        quad = qm.SphereQuadrature(int(qc["n_theta"]), int(qc["n_phi"]), tuple(float(a) for a in qc["euler"]))
    except qm.QuantumDomainError as exc:
        raise ConfigError(str(exc)) from exc
    j_cut = qc["j_cut"]
    j_cut = basis.j_max - 2 if j_cut is None else float(j_cut)
    return p, nu, basis, quad, j_cut, [float(j) for j in qc["j_grid"]]


def cmd_quantum(cfg: dict):
    p, nu, basis, quad, j_cut, j_grid = _quantum_inputs(cfg)
    try:
        model = qm.QuantumModel(p, basis, quad)
    except qm.QuantumDomainError as exc:
        raise ConfigError(str(exc)) from exc
    H, F = model.H(), model.F()
    spec = qm.eigen_spectrum(H, vectors=True)
    labels = qm.spectrum_labels(basis, spec.vectors)
    bundle = ResultBundle("quantum", cfg)
    structure, info = ck.structure_suite(nu, basis.j_max, quad, p)
    bundle.add(structure)
    res = spec.residuals(H.data)
    bundle.add([ck.upper("eigenpair residual / ||H||", float(np.max(res)) / np.linalg.norm(H.data, 2), 1e-10)])
    diag = qm.commutator_diagnostic(H, F, basis, j_cut)
    bundle.add([ck.report(f"interior [H,F] j_max={basis.j_max:g} j_cut={j_cut:g}", diag)])
    table = []
    if j_grid:
        if any(j_cut > j - 2 + 1e-9 for j in j_grid):
            raise ConfigError("every j_grid entry must satisfy j_cut <= j_max - 2")
        table = ck.commutator_table(p, nu, j_grid, j_cut, quad)
        bundle.add([ck.decreasing_check("interior [H,F] decreasing over j_grid", table)])
    bundle.extra = {
        "dimension": basis.dim,
        "gram_residual": float(np.max(np.abs(model.asm.gram() - np.eye(basis.dim)))),
        "hermiticity": {"H": qm.hermiticity_residual(0.5 * model.casimir + model.potential), **info["raw_hermiticity"]},
        "S_scalar": info["S_scalar"],
        "S_sign": info["S_sign"],
        "commutator_table": table,
    }
    rows = [(i, val, lab[0], lab[1]) for i, (val, lab) in enumerate(zip(spec.values, labels))]
    return bundle, rows


def _sweep_point(args):
    index, point, seed, n_points = args
    A, B, mu, nu = point
    try:
        p = sy.SystemParams(A, B, mu)
    except ValueError as exc:
        return [(index, A, B, mu, nu, "all", None, None, "SKIP", str(exc))]
    rng = np.random.default_rng([seed, index])
    rows = []
    checks = ck.bracket_suite(p, rng, n_points)
    H, F = sy.fields(p)
    leaf = sy.leaf_points(rng, n_points, nu)
    leaf = leaf[sy.R_value_factored(tuple(leaf[:, 3:].T), p) > 1e-3]
    br, scale = alg.bracket_with_scale(H, F, leaf, p.poisson)
    checks.append(ck.upper(f"{{H,F}} on leaf (M,q)={nu:g}", float(np.max(np.abs(br) / scale)), 1e-9))
    for c in checks:
        rows.append((index, A, B, mu, nu, c.name, c.value, c.tol, _status(c), c.note))
    return rows


def cmd_sweep(cfg: dict):
    s = cfg["sweep"]
    try:
        grid = [(float(a), float(b), float(m), float(n))
                for a in s["A"] for b in s["B"] for m in s["mu"] for n in s["nu"]]
        workers = int(s["workers"])
        n_points = int(s["n_points"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid sweep grid: {exc}") from exc
    if workers < 1:
        raise ConfigError("sweep.workers must be at least 1")
    jobs = [(i, pt, cfg["seed"], n_points) for i, pt in enumerate(grid)]
    if workers == 1:
        results = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    rows = [r for chunk in results for r in chunk]
    bundle = ResultBundle("sweep", cfg)
    failed = any(r[8] == "FAIL" for r in rows)
    return bundle, rows, failed


SWEEP_HEADER = ["point", "A", "B", "mu", "nu", "check", "value", "tolerance", "status", "note"]


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twocentre", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", type=Path, help="output path (stdout if omitted)")
    common.add_argument("--seed", type=int, help="random seed, overrides the config")
    common.add_argument("--format", choices=("csv", "json"), default="json",
                        help="report format for verify/elliptic-check (default json)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field, e.g. --set system.mu=0 (value parsed as JSON)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("verify", "bracket certification suites"),
        ("simulate", "integrate one trajectory"),
        ("elliptic-check", "elliptic-coordinate cross-checks"),
        ("quantum", "truncated quantum spectrum and diagnostics"),
        ("sweep", "bracket checks over a parameter grid"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"twocentre: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args, cfg) -> int:
    out = args.out
    if args.command == "verify":
        bundle = cmd_verify(cfg)
    elif args.command == "elliptic-check":
        bundle = cmd_elliptic_check(cfg)
    elif args.command == "simulate":
        bundle, tr = cmd_simulate(cfg)
        if "warning" in bundle.extra:
            print(f"twocentre: warning: {bundle.extra['warning']}", file=sys.stderr)
        if args.format == "json" and out is None:
            _write(render_json(bundle.as_dict()), None)
            return EXIT_OK
        _write(trajectory_csv(tr, bundle.provenance), out)
        if out is not None:
            _write(render_json(bundle.as_dict()), _sidecar(out, ".summary.json"))
        return EXIT_OK
    elif args.command == "quantum":
        bundle, rows = cmd_quantum(cfg)
        text = render_csv(["index", "eigenvalue", "j", "m"], rows, bundle.provenance)
        if out is None:
            _write(render_json(bundle.as_dict()) if args.format == "json" else text, None)
        else:
            _write(text, out)
            _write(render_json(bundle.as_dict()), _sidecar(out, ".diagnostics.json"))
        return EXIT_OK if bundle.passed else EXIT_FAIL
    else:
        bundle, rows, failed = cmd_sweep(cfg)
        _write(render_csv(SWEEP_HEADER, rows, bundle.provenance), out)
        return EXIT_FAIL if failed else EXIT_OK
    emit_bundle(bundle, out, args.format)
    for c in bundle.checks:
        log.info("%-60s %s %s", c.name, _status(c), fmt(c.value))
    return EXIT_OK if bundle.passed else EXIT_FAIL


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
