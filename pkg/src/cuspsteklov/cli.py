"""Command line front end wiring geometry, meshing, and the eigensolvers.

Five subcommands: ``mesh`` writes a triangulation and prints its quality
summary, ``spectrum`` solves the linear eigenproblem, ``principal`` runs the
nonlinear inverse iteration, ``convergence`` climbs a refinement ladder, and
``check`` samples the operator property suite on a coarse mesh.

Conventions shared by all commands: configuration precedence is command
line over ``--config`` file over built-in defaults; every run writes a
manifest JSON (resolved inputs, seed, package versions, wall time) next to
its outputs; all quantitative output is JSON/CSV.  With ``--threads 1``
(the default) reruns with the same seed are bitwise reproducible; the
manifest's timing block is the one intentionally non-reproducible record.

Exit codes: 0 success, 1 usage or configuration error, 2 geometry or solver
error (diagnostic JSON on stderr), 3 non-convergence (partial trace still
written), 4 property-suite failure.
"""

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from types import SimpleNamespace

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .assembly import (boundary_source, boundary_weighted_mass,
                       boundary_weighted_pnorm, mass, p_energy_gradient,
                       sobolev_pnorm, stiffness)
from .errors import (BudgetError, GeometryError, MeshError,
                     NonConvergenceError, NotSPDError, QuotientUndefinedError)
from .geometry import CuspDomain, CuspProfile, DiskDomain, domain_to_dict
from .linear_eigen import (convergence_study, minmax_check,
                           spectrum_json_dict, steklov_spectrum,
                           write_trace_csv)
from .meshing import (SizeField, disk_mesh, generate, mesh_quality,
                      refine_uniform, write_mesh)
from .numerics import factor_spd
from .p_solver import default_outer_tol, inverse_iteration, iteration_json_dict

log = logging.getLogger("cuspsteklov")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_NONCONVERGENCE = 3
EXIT_PROPERTY = 4

_SOLVER_ERRORS = (GeometryError, MeshError, NotSPDError, BudgetError,
                  QuotientUndefinedError, np.linalg.LinAlgError)


class UsageError(Exception):
    """Bad flags or config values; maps to exit code 1."""


# -- configuration -----------------------------------------------------------------

_COMMANDS = ("mesh", "spectrum", "principal", "convergence", "check")

# level = number of uniform refinements of the base mesh, except for
# convergence where it is the ladder length (level count).
_LEVEL_DEFAULTS = {"mesh": 0, "spectrum": 1, "principal": 1,
                   "convergence": 3, "check": 0}

_DEFAULTS = {
    "alpha": None,          # resolved to 2.0 when no profile source is given
    "gamma_file": None,
    "p": 2.0,
    "k": 6,
    "levels": None,         # per-command default
    "hmax": 0.25,
    "problem": "harmonic",
    "constrained": False,
    "weight_mode": "weighted",
    "oracle_disk": False,
    "radius": 1.0,
    "w0": "const",
    "outer_tol": None,      # resolved per p by the solver default
    "seed": 0,
    "threads": 1,
    "out": None,
    "log_level": "warning",
    "perturb_weight": False,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage problems exit 1 per the CLI contract (argparse default is 2)
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(sp):
    sp.add_argument("--config", metavar="FILE", default=None,
                    help="JSON file of flag values; command line overrides it")
    sp.add_argument("--alpha", type=float, default=None,
                    help="power profile exponent (requires alpha > 1)")
    sp.add_argument("--gamma-file", metavar="PATH", default=None,
                    help="JSON cusp profile, validated before meshing: "
                         '{"kind": "power", "alpha": A} or '
                         '{"kind": "tabulated", "samples": [[t, g], ...]}')
    sp.add_argument("--p", type=float, default=None,
                    help="nonlinearity exponent in [1.1, 6]; 2 is linear")
    sp.add_argument("--k", type=int, default=None,
                    help="number of eigenvalues to compute")
    sp.add_argument("--levels", type=int, default=None,
                    help="uniform refinements of the base mesh "
                         "(for convergence: ladder length, at least 2)")
    sp.add_argument("--hmax", type=float, default=None,
                    help="target edge length of the base mesh")
    sp.add_argument("--problem", choices=["harmonic", "schrodinger"],
                    default=None, help="volume operator of the linear solve")
    sp.add_argument("--constrained", action="store_true", default=None,
                    help="restrict traces to zero weighted boundary mean")
    grp = sp.add_mutually_exclusive_group()
    grp.add_argument("--weighted", dest="weight_mode", action="store_const",
                     const="weighted", default=None,
                     help="cusp boundary weight on (default)")
    grp.add_argument("--unweighted", dest="weight_mode", action="store_const",
                     const="unweighted", help="replace the boundary weight by 1")
    sp.add_argument("--oracle-disk", action="store_true", default=None,
                    help="run on a disk (analytic oracle) instead of a cusp")
    sp.add_argument("--radius", type=float, default=None,
                    help="disk radius for --oracle-disk")
    sp.add_argument("--w0", metavar="const|random|file:PATH", default=None,
                    help="starting iterate for the inverse iteration")
    sp.add_argument("--outer-tol", type=float, default=None,
                    help="outer stopping tolerance of the inverse iteration")
    sp.add_argument("--seed", type=int, default=None,
                    help="random seed for sampled checks and random starts")
    sp.add_argument("--threads", type=int, default=None,
                    help="BLAS thread cap; 1 gives bitwise reproducibility")
    sp.add_argument("--out", metavar="PATH", default=None,
                    help="output file (mesh) or output directory (others)")
    sp.add_argument("--log-level", default=None,
                    choices=["debug", "info", "warning", "error"])


def build_parser():
    parser = _Parser(prog="cuspsteklov",
                     description="Weighted Steklov eigensolvers on cusped "
                                 "planar domains")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{" + ",".join(_COMMANDS) + "}")
    helps = {
        "mesh": "generate a mesh and print its quality summary",
        "spectrum": "solve the linear (weighted) Steklov eigenproblem",
        "principal": "inverse iteration for the principal eigenvalue",
        "convergence": "eigenvalues on a uniform refinement ladder",
        "check": "run the sampled operator property suite",
    }
    for name in _COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        _add_common(sp)
        if name == "check":
            sp.add_argument("--perturb-weight", action="store_true",
                            default=None,
                            help="fault injection: scale one boundary "
                                 "quadrature weight by 1.1")
    return parser


def _resolve(args):
    """Merge defaults, config file, and flags into a validated namespace."""
    cfg = dict(_DEFAULTS)
    cfg["levels"] = _LEVEL_DEFAULTS[args.command]
    if args.config is not None:
        try:
            with open(args.config) as fh:
                file_vals = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}")
        if not isinstance(file_vals, dict):
            raise UsageError("config file must hold a JSON object")
        for key, val in file_vals.items():
            if key not in _DEFAULTS:
                raise UsageError(f"unknown config key {key!r}")
            cfg[key] = val
    for key in _DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    _validate(cfg)
    return SimpleNamespace(**cfg)


def _validate(cfg):
    if cfg["oracle_disk"]:
        if cfg["alpha"] is not None or cfg["gamma_file"] is not None:
            raise UsageError("--oracle-disk excludes --alpha/--gamma-file")
        if not cfg["radius"] > 0.0:
            raise UsageError(f"radius must be positive, got {cfg['radius']}")
    else:
        if cfg["alpha"] is not None and cfg["gamma_file"] is not None:
            raise UsageError("give either --alpha or --gamma-file, not both")
        if cfg["alpha"] is None and cfg["gamma_file"] is None:
            cfg["alpha"] = 2.0
        if cfg["alpha"] is not None and not cfg["alpha"] > 1.0:
            raise UsageError(
                f"alpha = {cfg['alpha']} is invalid: the cusp profile "
                "t**alpha requires alpha > 1")
    if not 1.1 <= cfg["p"] <= 6.0:
        raise UsageError(f"p = {cfg['p']} is outside [1.1, 6]; quadrature "
                         "and conditioning degrade beyond that range")
    if cfg["k"] < 1:
        raise UsageError("k must be at least 1")
    if cfg["levels"] < 0:
        raise UsageError("levels must be non-negative")
    if cfg["command"] == "convergence" and cfg["levels"] < 2:
        raise UsageError("convergence needs at least 2 ladder levels")
    if not cfg["hmax"] > 0.0:
        raise UsageError(f"hmax must be positive, got {cfg['hmax']}")
    if cfg["problem"] not in ("harmonic", "schrodinger"):
        raise UsageError(f"unknown problem {cfg['problem']!r}")
    if cfg["weight_mode"] not in ("weighted", "unweighted"):
        raise UsageError(f"unknown weight mode {cfg['weight_mode']!r}")
    w0 = cfg["w0"]
    if w0 not in ("const", "random") and not (
            isinstance(w0, str) and w0.startswith("file:")):
        raise UsageError(f"w0 must be const, random, or file:PATH, got {w0!r}")
    if cfg["outer_tol"] is not None and not cfg["outer_tol"] > 0.0:
        raise UsageError("outer-tol must be positive")
    if cfg["seed"] < 0:
        raise UsageError("seed must be non-negative")
    if cfg["threads"] < 1:
        raise UsageError("threads must be at least 1")


# -- shared pipeline pieces --------------------------------------------------------


def _load_profile(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read gamma file: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"gamma file is not valid JSON: {exc}")
    kind = data.get("kind") if isinstance(data, dict) else None
    if kind == "power":
        if "alpha" not in data:
            raise UsageError("power profile needs an 'alpha' entry")
        alpha = float(data["alpha"])
        if not alpha > 1.0:
            raise UsageError(f"alpha = {alpha} is invalid: the cusp profile "
                             "t**alpha requires alpha > 1")
        profile = CuspProfile.power(alpha)
    elif kind == "tabulated":
        if "samples" not in data:
            raise UsageError("tabulated profile needs a 'samples' entry")
        profile = CuspProfile.tabulated(np.asarray(data["samples"], float))
    else:
        raise UsageError("gamma file must set kind to 'power' or 'tabulated'")
    violations = profile.validate()
    if violations:
        raise UsageError("gamma file fails profile validation: "
                         + "; ".join(violations))
    return profile


def _build_domain(cfg):
    if cfg.oracle_disk:
        return DiskDomain(cfg.radius)
    if cfg.gamma_file is not None:
        profile = _load_profile(cfg.gamma_file)
    else:
        profile = CuspProfile.power(cfg.alpha)
    # all commands place the tip cutoff at a fixed channel width so that
    # meshes (hence eigenvalues) agree across commands for the same flags
    return CuspDomain.with_tip_width(profile)


def _build_mesh(cfg, domain):
    if isinstance(domain, DiskDomain):
        mesh = disk_mesh(domain.radius, h=cfg.hmax)
    else:
        mesh = generate(domain, SizeField(h_max=cfg.hmax))
    for _ in range(cfg.levels):
        mesh = refine_uniform(mesh, domain)
    log.info("mesh: %d vertices, %d triangles",
             mesh.n_vertices, mesh.n_triangles)
    return mesh


def _domain_desc(domain):
    if isinstance(domain, DiskDomain):
        return {"kind": "disk", "radius": domain.radius}
    return {"kind": "cusp", **domain_to_dict(domain)}


def _profile_alpha(domain):
    if isinstance(domain, CuspDomain) and domain.gamma.kind == "power":
        return domain.gamma.alpha
    return None


def _plain(obj):
    """JSON-safe copy: numpy scalars/arrays to python, non-finite to None."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _json_text(obj):
    return json.dumps(_plain(obj), indent=2) + "\n"


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _out_dir(cfg):
    out = cfg.out if cfg.out is not None else "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(cfg, path, t0):
    inputs = {k: getattr(cfg, k) for k in _DEFAULTS}
    manifest = {
        "command": cfg.command,
        "inputs": inputs,
        "seed": cfg.seed,
        "versions": {
            "cuspsteklov": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timing": {"wall_seconds": time.perf_counter() - t0},
    }
    _atomic_write(path, _json_text(manifest))


def _diagnostic(exc):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
          file=sys.stderr)


# -- commands ----------------------------------------------------------------------


def cmd_mesh(cfg, t0):
    domain = _build_domain(cfg)
    mesh = _build_mesh(cfg, domain)
    out = cfg.out if cfg.out is not None else "mesh.txt"
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    tmp = f"{out}.tmp"
    write_mesh(tmp, mesh)
    os.replace(tmp, out)
    quality = dict(mesh_quality(mesh))
    quality["mesh_file"] = out
    quality["domain"] = _domain_desc(domain)
    sys.stdout.write(_json_text(quality))
    _write_manifest(cfg, f"{out}.manifest.json", t0)
    return EXIT_OK


def cmd_spectrum(cfg, t0):
    domain = _build_domain(cfg)
    mesh = _build_mesh(cfg, domain)
    result = steklov_spectrum(mesh, domain, problem=cfg.problem, k=cfg.k,
                              constrained=cfg.constrained,
                              weight_mode=cfg.weight_mode)
    out = _out_dir(cfg)
    csv_path = os.path.join(out, "traces.csv")
    write_trace_csv(f"{csv_path}.tmp", result, domain)
    os.replace(f"{csv_path}.tmp", csv_path)
    record = spectrum_json_dict(result, cfg.levels,
                                {"domain": _domain_desc(domain)},
                                "traces.csv")
    text = _json_text(record)
    _atomic_write(os.path.join(out, "spectrum.json"), text)
    sys.stdout.write(text)
    _write_manifest(cfg, os.path.join(out, "manifest.json"), t0)
    return EXIT_OK


def _starting_iterate(cfg, mesh):
    if cfg.w0 == "const":
        return None                      # solver default: normalized constant
    if cfg.w0 == "random":
        rng = np.random.default_rng(cfg.seed)
        return rng.standard_normal(mesh.n_vertices)
    path = cfg.w0[len("file:"):]
    try:
        vec = np.loadtxt(path, dtype=float).ravel()
    except OSError as exc:
        raise UsageError(f"cannot read w0 file: {exc}")
    except ValueError as exc:
        raise UsageError(f"w0 file is not a numeric vector: {exc}")
    if vec.shape != (mesh.n_vertices,):
        raise UsageError(f"w0 file has {vec.size} entries for a mesh with "
                         f"{mesh.n_vertices} vertices")
    return vec


def _write_iteration(cfg, out, trace, domain):
    lines = ["n,mu,sobolev_p,step_diff,inner_iters"]
    for s in trace.steps:
        lines.append(f"{s.n},{s.mu:.17g},{s.sobolev_p:.17g},"
                     f"{s.step_diff:.17g},{s.inner_iterations}")
    _atomic_write(os.path.join(out, "steps.csv"), "\n".join(lines) + "\n")
    record = iteration_json_dict(trace, alpha=_profile_alpha(domain),
                                 mesh_level=cfg.levels, trace_csv="steps.csv")
    text = _json_text(record)
    _atomic_write(os.path.join(out, "trace.json"), text)
    sys.stdout.write(text)


def cmd_principal(cfg, t0):
    domain = _build_domain(cfg)
    mesh = _build_mesh(cfg, domain)
    w0 = _starting_iterate(cfg, mesh)
    outer_tol = cfg.outer_tol if cfg.outer_tol is not None \
        else default_outer_tol(cfg.p)
    out = _out_dir(cfg)
    try:
        trace = inverse_iteration(mesh, domain, cfg.p, w0=w0,
                                  outer_tol=outer_tol)
    except NonConvergenceError as exc:
        partial = getattr(exc, "outer_trace", None)
        if partial is not None:
            _write_iteration(cfg, out, partial, domain)
        _write_manifest(cfg, os.path.join(out, "manifest.json"), t0)
        _diagnostic(exc)
        return EXIT_NONCONVERGENCE
    _write_iteration(cfg, out, trace, domain)
    _write_manifest(cfg, os.path.join(out, "manifest.json"), t0)
    if not trace.converged:
        _diagnostic(NonConvergenceError(
            f"inverse iteration left unconverged after {len(trace.steps)} "
            f"steps (outer_tol {outer_tol})"))
        return EXIT_NONCONVERGENCE
    log.info("principal eigenvalue %.12g after %d outer steps",
             trace.mu, len(trace.steps))
    return EXIT_OK


def cmd_convergence(cfg, t0):
    domain = _build_domain(cfg)
    study = convergence_study(domain, SizeField(h_max=cfg.hmax),
                              problem=cfg.problem, k=cfg.k,
                              levels=cfg.levels,
                              weight_mode=cfg.weight_mode,
                              constrained=cfg.constrained)
    out = _out_dir(cfg)
    header = ["level", "vertices", "triangles", "max_residual"]
    header += [f"lambda{j}" for j in range(cfg.k)]
    lines = [",".join(header)]
    for rec in study.levels:
        cells = [str(rec["level"]), str(rec["vertices"]),
                 str(rec["triangles"]), f"{rec['max_residual']:.17g}"]
        cells += [f"{v:.17g}" for v in rec["eigenvalues"]]
        lines.append(",".join(cells))
    _atomic_write(os.path.join(out, "ladder.csv"), "\n".join(lines) + "\n")
    record = {
        "problem": study.problem,
        "weight_mode": study.weight_mode,
        "constrained": study.constrained,
        "domain": _domain_desc(domain),
        "k": cfg.k,
        "levels": study.levels,
        "deltas": study.deltas,
        "richardson": study.richardson,
        "ladder_csv": "ladder.csv",
    }
    text = _json_text(record)
    _atomic_write(os.path.join(out, "summary.json"), text)
    sys.stdout.write(text)
    _write_manifest(cfg, os.path.join(out, "manifest.json"), t0)
    return EXIT_OK


# -- property suite ----------------------------------------------------------------


def _perturbation(mesh, domain, enabled):
    """Fault tuple scaling the heaviest boundary edge's first quadrature
    weight by 1.1, or None.  The heaviest edge keeps the injected defect
    well above every tolerance regardless of mesh grading."""
    if not enabled:
        return None
    e = mesh.boundary_edges
    pa = mesh.vertices[e[:, 0]]
    pb = mesh.vertices[e[:, 1]]
    length = np.linalg.norm(pb - pa, axis=1)
    w = np.asarray(domain.boundary_weight(0.5 * (pa + pb)), float)
    return (int(np.argmax(length * w)), 0, 1.1)


def _sample_pairs(rng, n, count):
    for _ in range(count):
        yield rng.standard_normal(n), rng.standard_normal(n)


def run_property_suite(mesh, domain, p, seed, perturb=None, n_pairs=200,
                       problem="harmonic", k=6, constrained=False,
                       weight_mode="weighted"):
    """Sampled invariants of the assembled operators and the linear solve.

    Returns an ordered list of {name, passed, worst, tol} records.  The
    2-point boundary mass matrix is checked against the 4-point norm rule,
    so a perturbed quadrature weight (fault injection) is caught by the
    route comparison rather than by the solver's own internal consistency.
    """
    rng = np.random.default_rng(seed)
    n = mesh.n_vertices
    results = []

    def add(name, worst, tol):
        results.append({"name": name, "passed": bool(worst <= tol),
                        "worst": float(worst), "tol": float(tol)})

    k_mat = stiffness(mesh).tocsr()
    m_mat = mass(mesh).tocsr()
    wdom = domain if weight_mode == "weighted" else None
    b_mat = boundary_weighted_mass(mesh, wdom, perturb).tocsr()
    scale_k = float(np.max(np.abs(k_mat.data)))

    add("stiffness_symmetry",
        float(np.max(np.abs((k_mat - k_mat.T).data))) if (k_mat - k_mat.T).nnz
        else 0.0, 1e-15 * scale_k)
    add("mass_symmetry",
        float(np.max(np.abs((m_mat - m_mat.T).data))) if (m_mat - m_mat.T).nnz
        else 0.0, 1e-15)
    add("boundary_mass_symmetry",
        float(np.max(np.abs((b_mat - b_mat.T).data))) if (b_mat - b_mat.T).nnz
        else 0.0, 1e-15)
    add("stiffness_constant_kernel",
        float(np.max(np.abs(k_mat @ np.ones(n)))), 1e-12 * scale_k)
    try:
        factor_spd((k_mat + m_mat).tocsc())
        add("energy_positive_definite", 0.0, 1.0)
    except NotSPDError:
        add("energy_positive_definite", np.inf, 1.0)

    # degree p-1 homogeneity of the volume and boundary operators
    worst_a = worst_b = 0.0
    for _ in range(n_pairs):
        u = rng.standard_normal(n)
        t = float(rng.uniform(0.2, 5.0)) * (1.0 if rng.uniform() < 0.5 else -1.0)
        fac = np.sign(t) * abs(t) ** (p - 1.0)
        ga = p_energy_gradient(mesh, u, p)
        res_a = p_energy_gradient(mesh, t * u, p) - fac * ga
        worst_a = max(worst_a, float(np.max(np.abs(res_a)))
                      / max(float(np.max(np.abs(fac * ga))), 1e-300))
        gb = boundary_source(mesh, u, p, domain)
        res_b = boundary_source(mesh, t * u, p, domain) - fac * gb
        worst_b = max(worst_b, float(np.max(np.abs(res_b)))
                      / max(float(np.max(np.abs(fac * gb))), 1e-300))
    add("gradient_homogeneity", worst_a, 1e-13)
    add("source_homogeneity", worst_b, 1e-13)

    # duality bounds <A(f), v> <= |f|^(p-1) |v| in the volume and boundary
    # norms, with equality on the ray v = t f
    q = (p - 1.0) / p
    worst_ineq = worst_eq = 0.0
    for f, v in _sample_pairs(rng, n, n_pairs):
        lhs = float(p_energy_gradient(mesh, f, p) @ v)
        rhs = sobolev_pnorm(mesh, f, p) ** q * sobolev_pnorm(mesh, v, p) ** (1.0 / p)
        worst_ineq = max(worst_ineq, (lhs - rhs) / max(rhs, 1.0))
        t = float(rng.uniform(0.2, 5.0))
        ray = float(p_energy_gradient(mesh, f, p) @ (t * f))
        ray_rhs = sobolev_pnorm(mesh, f, p) ** q \
            * sobolev_pnorm(mesh, t * f, p) ** (1.0 / p)
        worst_eq = max(worst_eq, abs(ray - ray_rhs) / max(ray_rhs, 1e-300))
    add("gradient_duality_bound", worst_ineq, 1e-10)
    add("gradient_duality_equality", worst_eq, 1e-10)

    worst_ineq = worst_eq = 0.0
    for f, v in _sample_pairs(rng, n, n_pairs):
        lhs = float(boundary_source(mesh, f, p, wdom) @ v)
        rhs = boundary_weighted_pnorm(mesh, f, p, wdom) ** q \
            * boundary_weighted_pnorm(mesh, v, p, wdom) ** (1.0 / p)
        worst_ineq = max(worst_ineq, (lhs - rhs) / max(rhs, 1.0))
        t = float(rng.uniform(0.2, 5.0))
        ray = float(boundary_source(mesh, f, p, wdom) @ (t * f))
        ray_rhs = boundary_weighted_pnorm(mesh, f, p, wdom) ** q \
            * boundary_weighted_pnorm(mesh, t * f, p, wdom) ** (1.0 / p)
        worst_eq = max(worst_eq, abs(ray - ray_rhs) / max(ray_rhs, 1e-300))
    add("source_duality_bound", worst_ineq, 1e-10)
    add("source_duality_equality", worst_eq, 1e-10)

    worst = 0.0
    for u, v in _sample_pairs(rng, n, n_pairs):
        du = u - v
        gap = float((p_energy_gradient(mesh, u, p)
                     - p_energy_gradient(mesh, v, p)) @ du)
        norm = sobolev_pnorm(mesh, u, p) + sobolev_pnorm(mesh, v, p)
        worst = max(worst, -gap / max(norm, 1e-300))
    add("gradient_monotonicity", worst, 1e-10)

    # the assembled boundary mass against an independent evaluation of the
    # same 2-point rule (agreement to rounding; a perturbed quadrature
    # weight breaks this while the solver stays self-consistent), plus a
    # coarse cross-rule comparison against the 4-point norm rule whose gap
    # is genuine quadrature error of the non-polynomial weight
    e = mesh.boundary_edges
    pa = mesh.vertices[e[:, 0]]
    pb = mesh.vertices[e[:, 1]]
    length = np.linalg.norm(pb - pa, axis=1)
    half = 0.5 / np.sqrt(3.0)
    worst = worst_rule = 0.0
    for _ in range(50):
        u = rng.standard_normal(n)
        ua, ub = u[e[:, 0]], u[e[:, 1]]
        direct = 0.0
        for t in (0.5 - half, 0.5 + half):
            x = (1.0 - t) * pa + t * pb
            w = np.asarray(wdom.boundary_weight(x), float) if wdom is not None \
                else np.ones(len(e))
            uq = (1.0 - t) * ua + t * ub
            direct += 0.5 * float(np.sum(length * w * uq * uq))
        q2 = float(u @ (b_mat @ u))
        q4 = boundary_weighted_pnorm(mesh, u, 2.0, wdom)
        worst = max(worst, abs(q2 - direct) / max(direct, 1e-300))
        worst_rule = max(worst_rule, abs(q2 - q4) / max(q4, 1e-300))
    add("boundary_quadrature_consistency", worst, 1e-12)
    add("boundary_rule_agreement", worst_rule, 1e-2)

    a_mat = k_mat if problem == "harmonic" else (k_mat + m_mat).tocsr()
    result = steklov_spectrum(mesh, domain, problem=problem, k=k,
                              constrained=constrained,
                              weight_mode=weight_mode, perturb=perturb)
    mm = minmax_check(result, a_mat, b_mat, trials=20, seed=seed)
    add("minmax_bound", max(mm["max_violation"], 0.0), 1e-9)

    worst = 0.0
    for pair in result.pairs:
        v = pair.volume
        quot = float(v @ (a_mat @ v)) / float(v @ (b_mat @ v))
        worst = max(worst, abs(quot - pair.value) / max(abs(pair.value), 1.0))
    add("rayleigh_identity", worst, 1e-10)
    return results


def cmd_check(cfg, t0):
    domain = _build_domain(cfg)
    mesh = _build_mesh(cfg, domain)
    perturb = _perturbation(mesh, domain, cfg.perturb_weight)
    properties = run_property_suite(
        mesh, domain, cfg.p, cfg.seed, perturb=perturb,
        problem=cfg.problem, k=cfg.k, constrained=cfg.constrained,
        weight_mode=cfg.weight_mode)
    passed = all(rec["passed"] for rec in properties)
    report = {
        "domain": _domain_desc(domain),
        "mesh": {"level": cfg.levels, "vertices": mesh.n_vertices,
                 "triangles": mesh.n_triangles},
        "p": cfg.p,
        "seed": cfg.seed,
        "perturb_weight": cfg.perturb_weight,
        "properties": properties,
        "passed": passed,
    }
    out = _out_dir(cfg)
    text = _json_text(report)
    _atomic_write(os.path.join(out, "report.json"), text)
    sys.stdout.write(text)
    _write_manifest(cfg, os.path.join(out, "manifest.json"), t0)
    if not passed:
        first = next(r["name"] for r in properties if not r["passed"])
        print(f"property failed: {first}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


# -- entry point -------------------------------------------------------------------

_RUNNERS = {"mesh": cmd_mesh, "spectrum": cmd_spectrum,
            "principal": cmd_principal, "convergence": cmd_convergence,
            "check": cmd_check}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except UsageError as exc:
        print(f"cuspsteklov {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, cfg.log_level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        with threadpool_limits(limits=cfg.threads):
            return _RUNNERS[cfg.command](cfg, t0)
    except UsageError as exc:
        print(f"cuspsteklov {cfg.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergenceError as exc:
        _diagnostic(exc)
        return EXIT_NONCONVERGENCE
    except _SOLVER_ERRORS as exc:
        _diagnostic(exc)
        return EXIT_SOLVER
    except ValueError as exc:
        # library-level validation (bad k, too few levels, ...)
        print(f"cuspsteklov {cfg.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
