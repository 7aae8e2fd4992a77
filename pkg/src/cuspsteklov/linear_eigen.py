"""Linear Steklov eigensolver by reduction to the boundary.

The pencil of the full FEM matrices pairs a volume operator with a boundary
mass whose support excludes every interior vertex, so most of its spectrum
is "infinite".  Eliminating the interior through a Schur complement leaves a
small dense boundary operator whose generalized eigenvalues are exactly the
Steklov eigenvalues; that reduction is exact, not an approximation.

The harmonic problem keeps constants in its kernel.  They are removed by an
explicit Householder deflation against the weighted-mass direction before
factorization and the zero eigenvalue is re-inserted afterwards, which keeps
round-off from leaking tiny negative eigenvalues.  The same deflation with
no re-insertion realizes the zero-weighted-mean constraint.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm

from .assembly import boundary_weighted_mass, mass, stiffness
from .errors import GeometryError, MeshError, NotSPDError
from .geometry import CuspDomain
from .meshing import TriMesh, disk_mesh, generate, refine_uniform
from .numerics import DENSE_CAP, factor_spd, pencil_smallest

_SOLVE_BLOCK = 128

PROBLEMS = ("harmonic", "schrodinger")
WEIGHT_MODES = ("weighted", "unweighted")


@dataclass
class DtnMap:
    """Boundary Schur complement of a volume operator."""
    schur: np.ndarray        # dense (nb, nb), symmetric
    boundary: np.ndarray     # boundary vertex indices, ascending
    interior: np.ndarray     # the remaining vertex indices
    extension: np.ndarray    # (ni, nb); interior values are -extension @ g
    n_vertices: int

    def extend(self, trace):
        """Lift boundary values to the full mesh by the interior solve."""
        trace = np.asarray(trace, dtype=float)
        full = np.zeros((self.n_vertices,) + trace.shape[1:])
        full[self.boundary] = trace
        if len(self.interior):
            full[self.interior] = -self.extension @ trace
        return full


@dataclass
class EigenPair:
    value: float
    trace: np.ndarray
    volume: np.ndarray
    residual: float
    rayleigh: float


@dataclass
class SpectrumResult:
    problem: str
    constrained: bool
    weight_mode: str
    pairs: list
    boundary: np.ndarray
    mesh: TriMesh

    @property
    def values(self):
        return np.array([p.value for p in self.pairs])

    @property
    def traces(self):
        return np.column_stack([p.trace for p in self.pairs])


def boundary_vertices(mesh):
    return np.unique(mesh.boundary_edges)


def dtn_reduce(system, mesh):
    """Schur-complement a sparse symmetric system onto the boundary DOFs.

    Interior columns are eliminated through the SPD factorization of the
    interior block, solved in blocks; the result is symmetrized to scrub
    the last-bit asymmetry of the two solve sweeps.
    """
    a = sp.csr_matrix(system)
    bidx = boundary_vertices(mesh)
    iidx = np.setdiff1d(np.arange(mesh.n_vertices), bidx)
    a_bb = a[np.ix_(bidx, bidx)].toarray()
    if len(iidx) == 0:
        ext = np.zeros((0, len(bidx)))
        return DtnMap(a_bb, bidx, iidx, ext, mesh.n_vertices)
    a_ii = a[np.ix_(iidx, iidx)].tocsc()
    a_ib = sp.csc_matrix(a[np.ix_(iidx, bidx)])
    try:
        factor = factor_spd(a_ii)
    except NotSPDError as exc:
        raise MeshError(
            f"interior block is not positive definite: {exc}") from exc
    ext = np.empty((len(iidx), len(bidx)))
    for j0 in range(0, len(bidx), _SOLVE_BLOCK):
        j1 = min(j0 + _SOLVE_BLOCK, len(bidx))
        ext[:, j0:j1] = factor.solve(a_ib[:, j0:j1].toarray())
    schur = a_bb - a_ib.T @ ext
    schur = 0.5 * (schur + schur.T)
    return DtnMap(schur, bidx, iidx, ext, mesh.n_vertices)


def _complement_basis(direction):
    """Orthonormal basis of the hyperplane orthogonal to ``direction``,
    via one Householder reflector."""
    v = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(v)
    if not nrm > 0.0:
        raise GeometryError("deflation direction vanishes")
    w = v.copy()
    w[0] += np.copysign(nrm, v[0])
    h = np.eye(len(v)) - (2.0 / (w @ w)) * np.outer(w, w)
    return h[:, 1:]


def _full_residual(a, b, lam, u):
    num = np.linalg.norm(a @ u - lam * (b @ u))
    scale = sparse_norm(a, 1) + abs(lam) * max(sparse_norm(b, 1), 1.0)
    return float(num / (scale * np.linalg.norm(u)))


def steklov_spectrum(mesh, domain=None, problem="harmonic", k=6,
                     constrained=False, weight_mode="weighted", perturb=None):
    """Smallest k eigenpairs of the weighted Steklov pencil.

    ``problem`` selects the volume operator (pure stiffness or stiffness
    plus mass); ``constrained`` restricts to traces with zero weighted mean;
    ``weight_mode`` "unweighted" replaces the cusp weight by 1.  ``perturb``
    is passed through to the boundary mass assembly (fault injection).
    """
    if problem not in PROBLEMS:
        raise ValueError(f"unknown problem {problem!r}")
    if weight_mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    if k < 1:
        raise ValueError("k must be at least 1")
    k_mat = stiffness(mesh)
    a = k_mat if problem == "harmonic" else (k_mat + mass(mesh)).tocsr()
    wdom = domain if weight_mode == "weighted" else None
    b = boundary_weighted_mass(mesh, wdom, perturb)
    dtn = dtn_reduce(a, mesh)
    nb = len(dtn.boundary)
    if nb > DENSE_CAP:
        raise ValueError(
            f"{nb} boundary DOFs exceed the dense solver cap {DENSE_CAP}")
    if k > nb:
        raise ValueError(f"k = {k} exceeds the {nb} boundary DOFs")
    m_g = b[np.ix_(dtn.boundary, dtn.boundary)].toarray()
    m_g = 0.5 * (m_g + m_g.T)
    if np.any(m_g.diagonal() <= 0.0):
        raise GeometryError(
            "weighted boundary mass is degenerate (weight vanishes on a"
            " whole edge neighborhood)")

    deflate = constrained or problem == "harmonic"
    values = []
    traces = []
    if deflate:
        direction = m_g @ np.ones(nb)
        q = _complement_basis(direction)
        s_r = q.T @ dtn.schur @ q
        m_r = q.T @ m_g @ q
        reinsert = problem == "harmonic" and not constrained
        want = k - 1 if reinsert else k
        if want > 0:
            lam, y = pencil_smallest(s_r, m_r, want)
            values.extend(lam.tolist())
            traces.extend((q @ y).T)
        if reinsert:
            ones = np.ones(nb)
            g0 = ones / np.sqrt(ones @ m_g @ ones)
            values.insert(0, 0.0)
            traces.insert(0, g0)
    else:
        lam, g = pencil_smallest(dtn.schur, m_g, k)
        values.extend(lam.tolist())
        traces.extend(g.T)

    pairs = []
    for lam_j, g_j in zip(values, traces):
        u = dtn.extend(g_j)
        ray = float((g_j @ dtn.schur @ g_j) / (g_j @ m_g @ g_j))
        res = _full_residual(a, b, lam_j, u)
        pairs.append(EigenPair(value=float(lam_j), trace=g_j, volume=u,
                               residual=res, rayleigh=ray))
    pairs.sort(key=lambda pr: pr.value)
    return SpectrumResult(problem=problem, constrained=constrained,
                          weight_mode=weight_mode, pairs=pairs,
                          boundary=dtn.boundary, mesh=mesh)


def minmax_check(result, system, b_matrix, trials=20, seed=0):
    """Sample the variational characterization of the computed spectrum.

    Within the span of the first n eigenvectors the quotient never exceeds
    the n-th eigenvalue, and it attains that value at the n-th eigenvector;
    violations beyond rounding slack indicate a broken pencil solve.
    """
    if len(result.pairs) < 2:
        raise ValueError("need at least two pairs to check")
    rng = np.random.default_rng(seed)
    vecs = np.column_stack([p.volume for p in result.pairs])
    values = result.values
    report = {"levels": [], "max_violation": -np.inf, "passed": True}
    for n in range(1, len(values) + 1):
        lam_n = values[n - 1]
        worst = -np.inf
        for _ in range(trials):
            c = rng.standard_normal(n)
            u = vecs[:, :n] @ c
            num = float(u @ (system @ u))
            den = float(u @ (b_matrix @ u))
            worst = max(worst, num / den - lam_n)
        v = vecs[:, n - 1]
        attained = float(v @ (system @ v)) / float(v @ (b_matrix @ v))
        gap = abs(attained - lam_n) / max(abs(lam_n), 1.0)
        ok = worst <= 1e-9 and gap <= 1e-9
        report["levels"].append({"n": n, "lambda": lam_n,
                                 "max_excess": worst,
                                 "attained_gap": gap, "passed": ok})
        report["max_violation"] = max(report["max_violation"], worst)
        report["passed"] = report["passed"] and ok
    return report


@dataclass
class ConvergenceStudy:
    problem: str
    weight_mode: str
    constrained: bool
    levels: list = field(default_factory=list)   # per-level dicts
    deltas: np.ndarray = None                    # (L-1, k) relative changes
    richardson: np.ndarray = None                # (k,) extrapolated limits

    @property
    def eigenvalue_table(self):
        return np.array([lv["eigenvalues"] for lv in self.levels])


def convergence_study(domain, size=None, problem="harmonic", k=6, levels=3,
                      weight_mode="weighted", constrained=False):
    """Eigenvalues on a uniform refinement ladder plus stabilization data.

    Reports the relative change of each eigenvalue between consecutive
    levels and a Richardson extrapolation from the observed decay rate.
    Stabilizing deltas are the discreteness signal; steadily drifting
    values are the degeneration signal.
    """
    if levels < 2:
        raise ValueError("need at least two ladder levels")
    mesh = generate(domain, size)
    records = []
    table = []
    for lev in range(levels):
        if lev:
            mesh = refine_uniform(mesh, domain)
        result = steklov_spectrum(mesh, domain, problem=problem, k=k,
                                  constrained=constrained,
                                  weight_mode=weight_mode)
        records.append({
            "level": lev,
            "vertices": mesh.n_vertices,
            "triangles": mesh.n_triangles,
            "eigenvalues": result.values.tolist(),
            "max_residual": float(max(p.residual for p in result.pairs)),
        })
        table.append(result.values)
    table = np.array(table)
    diffs = np.diff(table, axis=0)
    scale = np.maximum(np.abs(table[1:]), 1e-12)
    deltas = np.abs(diffs) / scale
    rich = np.full(k, np.nan)
    for j in range(k):
        e_last = diffs[-1, j]
        if levels >= 3:
            e_prev = diffs[-2, j]
            if abs(e_last) > 0.0 and abs(e_prev) > abs(e_last):
                rho = e_prev / e_last
                if rho > 1.2:
                    rich[j] = table[-1, j] + e_last / (rho - 1.0)
        else:
            # assume second-order decay when only two levels exist
            rich[j] = table[-1, j] + e_last / 3.0
    return ConvergenceStudy(problem=problem, weight_mode=weight_mode,
                            constrained=constrained, levels=records,
                            deltas=deltas, richardson=rich)


def boundary_chain(mesh):
    """Boundary vertices ordered along the closed boundary walk, starting at
    the smallest vertex index, plus cumulative chord arc length."""
    succ = {int(a): int(b) for a, b in mesh.boundary_edges}
    start = min(succ)
    order = [start]
    while True:
        nxt = succ[order[-1]]
        if nxt == start:
            break
        order.append(nxt)
    order = np.array(order)
    pts = mesh.vertices[order]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    return order, arc


def write_trace_csv(path, result, domain=None):
    """One row per boundary vertex: arc length, x, y, weight, then one
    column per eigenfunction."""
    mesh = result.mesh
    order, arc = boundary_chain(mesh)
    pos = {int(v): i for i, v in enumerate(result.boundary)}
    use_weight = domain is not None and result.weight_mode == "weighted"
    if use_weight:
        w = np.asarray(domain.boundary_weight(mesh.vertices[order]), float)
    else:
        w = np.ones(len(order))
    header = ["s", "x", "y", "w"] + [f"phi{j}" for j in range(len(result.pairs))]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row, v in enumerate(order):
            cells = [arc[row], mesh.vertices[v, 0], mesh.vertices[v, 1], w[row]]
            cells += [p.trace[pos[int(v)]] for p in result.pairs]
            fh.write(",".join(f"{c:.17g}" for c in cells) + "\n")


def spectrum_json_dict(result, level, domain_desc, traces_csv):
    """Assemble the machine-readable spectrum record."""
    out = {
        "problem": result.problem,
        "constrained": result.constrained,
        "weight_mode": result.weight_mode,
    }
    out.update(domain_desc)
    out["mesh"] = {"level": level, "vertices": result.mesh.n_vertices,
                   "triangles": result.mesh.n_triangles}
    out["eigenvalues"] = [p.value for p in result.pairs]
    out["residuals"] = [p.residual for p in result.pairs]
    out["traces_csv"] = traces_csv
    return out
