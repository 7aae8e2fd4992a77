"""P1 finite element operators: volume energies and weighted boundary terms.

Gradients of P1 functions are constant per triangle, so gradient terms are
integrated exactly for every exponent.  Volume value terms use the three
edge-midpoint rule, exact through quadratics and therefore exact at p = 2.
Boundary terms integrate over the straight boundary edges with the weight
evaluated analytically at the quadrature nodes: a 2-point Gauss rule for the
weighted boundary mass matrix and a 4-point rule for the nonlinear boundary
functionals.  Each functional family sticks to one rule, which makes the
duality, scaling and differentiation identities between them hold to machine
precision; the property tests rely on that.

``boundary_weighted_mass`` accepts a deliberate perturbation of a single
quadrature weight so consistency checks have a fault to detect.
"""

import numpy as np
from scipy.sparse import coo_matrix

from .errors import QuotientUndefinedError

_G2 = ((0.5 - 0.5 / np.sqrt(3.0), 0.5), (0.5 + 0.5 / np.sqrt(3.0), 0.5))
_x4, _w4 = np.polynomial.legendre.leggauss(4)
_G4 = tuple((0.5 * (x + 1.0), 0.5 * w) for x, w in zip(_x4, _w4))


def _check_p(p):
    if not p > 1.0:
        raise ValueError(f"exponent must satisfy p > 1, got {p}")


def _tri_geometry(mesh):
    """Areas and P1 shape gradients, (m,) and (m, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    g = np.stack([b, c], axis=2) / (2.0 * area)[:, None, None]
    return area, g


def _assemble(tri, elem, n):
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return coo_matrix((elem.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness(mesh):
    """Sparse matrix of the gradient inner product."""
    area, g = _tri_geometry(mesh)
    elem = np.einsum("tif,tjf->tij", g, g) * area[:, None, None]
    return _assemble(mesh.triangles, elem, mesh.n_vertices)


def mass(mesh):
    """Sparse matrix of the volume inner product (exact P1 mass)."""
    area = _tri_geometry(mesh)[0]
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    elem = base[None, :, :] * area[:, None, None]
    return _assemble(mesh.triangles, elem, mesh.n_vertices)


def _edge_geometry(mesh):
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    return a, b, np.linalg.norm(b - a, axis=1)


def _edge_weight(domain, x):
    if domain is None:
        return np.ones(len(x))
    return np.asarray(domain.boundary_weight(x), dtype=float)


def boundary_weighted_mass(mesh, domain=None, perturb=None):
    """Sparse matrix of the weighted boundary inner product (2-point rule).

    ``perturb = (edge, node, factor)`` scales the weight at one quadrature
    node of one boundary edge; anything downstream that assumes the exact
    rule will then disagree measurably.
    """
    a, b, length = _edge_geometry(mesh)
    elem = np.zeros((len(length), 2, 2))
    for q, (t, wq) in enumerate(_G2):
        x = (1.0 - t) * a + t * b
        w = _edge_weight(domain, x).copy()
        if perturb is not None:
            edge, node, factor = perturb
            if node == q:
                w[edge] *= factor
        phi = np.array([1.0 - t, t])
        elem += (wq * length * w)[:, None, None] * np.outer(phi, phi)[None]
    e = mesh.boundary_edges
    rows = np.repeat(e, 2, axis=1).ravel()
    cols = np.tile(e, (1, 2)).ravel()
    return coo_matrix((elem.ravel(), (rows, cols)),
                      shape=(mesh.n_vertices,) * 2).tocsr()


def _signed_power(v, q):
    """sign(v) |v|^q with the v = 0 singularity masked to 0 (valid for q > 0)."""
    out = np.zeros_like(v)
    nz = v != 0.0
    out[nz] = np.sign(v[nz]) * np.abs(v[nz]) ** q
    return out


def boundary_weighted_pnorm(mesh, u, p=2.0, domain=None):
    """Integral of w |u|^p over the boundary (4-point rule)."""
    _check_p(p)
    a, b, length = _edge_geometry(mesh)
    ua = u[mesh.boundary_edges[:, 0]]
    ub = u[mesh.boundary_edges[:, 1]]
    total = 0.0
    for t, wq in _G4:
        x = (1.0 - t) * a + t * b
        w = _edge_weight(domain, x)
        uq = (1.0 - t) * ua + t * ub
        total += np.sum(wq * length * w * np.abs(uq) ** p)
    return float(total)


def boundary_source(mesh, u, p=2.0, domain=None):
    """Load vector of the weighted boundary pairing, node i holding the
    integral of w |u|^(p-2) u phi_i (same 4-point rule as the p-norm, so
    pairing the result with u reproduces the p-norm exactly)."""
    _check_p(p)
    a, b, length = _edge_geometry(mesh)
    ea = mesh.boundary_edges[:, 0]
    eb = mesh.boundary_edges[:, 1]
    out = np.zeros(mesh.n_vertices)
    for t, wq in _G4:
        x = (1.0 - t) * a + t * b
        w = _edge_weight(domain, x)
        uq = (1.0 - t) * u[ea] + t * u[eb]
        coef = wq * length * w * _signed_power(uq, p - 1.0)
        np.add.at(out, ea, coef * (1.0 - t))
        np.add.at(out, eb, coef * t)
    return out


def boundary_moment(mesh, u, p=2.0, domain=None):
    """Integral of w |u|^(p-2) u over the boundary; the constraint functional
    whose kernel the constrained spectrum lives in."""
    return float(boundary_source(mesh, u, p, domain).sum())


def _pnorm_terms(mesh, u, p):
    area, g = _tri_geometry(mesh)
    ul = u[mesh.triangles]
    gu = np.einsum("tif,ti->tf", g, ul)
    gn2 = np.sum(gu * gu, axis=1)
    grad_term = float(np.sum(area * gn2 ** (0.5 * p)))
    um = 0.5 * (ul + np.roll(ul, -1, axis=1))
    val_term = float(np.sum((area / 3.0)[:, None] * np.abs(um) ** p))
    return grad_term, val_term


def sobolev_pnorm(mesh, u, p=2.0):
    """Integral of |grad u|^p + |u|^p (exact gradient part, midpoint values)."""
    _check_p(p)
    grad_term, val_term = _pnorm_terms(mesh, u, p)
    return grad_term + val_term


def p_energy_gradient(mesh, u, p=2.0):
    """Exact discrete gradient of sobolev_pnorm(u, p) / p in the nodal values.

    At p = 2 this action equals (stiffness + mass) @ u to rounding.
    """
    _check_p(p)
    area, g = _tri_geometry(mesh)
    ul = u[mesh.triangles]
    gu = np.einsum("tif,ti->tf", g, ul)
    gn2 = np.sum(gu * gu, axis=1)
    cg = np.zeros_like(gn2)
    nz = gn2 > 0.0
    cg[nz] = gn2[nz] ** (0.5 * p - 1.0)
    grad_part = np.einsum("tif,tf->ti", g, (area * cg)[:, None] * gu)

    um = 0.5 * (ul + np.roll(ul, -1, axis=1))
    vc = (area / 3.0)[:, None] * _signed_power(um, p - 1.0)
    # midpoint k sits between local nodes k and k+1 where the hats are 1/2
    val_part = 0.5 * (vc + np.roll(vc, 1, axis=1))

    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), (grad_part + val_part).ravel())
    return out


def p_tangent_matrix(mesh, u, p=2.0, epsilon=0.0):
    """Sparse regularized second derivative of sobolev_pnorm(u, p) / p.

    The gradient coefficient is (|grad u|^2 + epsilon^2)^((p-2)/2) with the
    rank-one correction (p - 2) along grad u; the value coefficient is
    (p - 1) (u^2 + epsilon^2)^((p-2)/2).  Positive definite for p > 1 when
    epsilon > 0.  At p = 2 it equals stiffness + mass for any epsilon.
    """
    _check_p(p)
    area, g = _tri_geometry(mesh)
    ul = u[mesh.triangles]
    gu = np.einsum("tif,ti->tf", g, ul)
    gn2 = np.sum(gu * gu, axis=1)
    e2 = epsilon * epsilon
    base = gn2 + e2
    cg = np.zeros_like(base)
    nz = base > 0.0
    cg[nz] = base[nz] ** (0.5 * p - 1.0)
    elem = np.einsum("tif,tjf->tij", g, g) * (area * cg)[:, None, None]
    if p != 2.0:
        d = np.einsum("tif,tf->ti", g, gu)
        c1 = np.zeros_like(base)
        c1[nz] = (p - 2.0) * cg[nz] / base[nz]
        # multiply the symmetric outer product as a unit to keep the
        # assembled matrix symmetric to the last bit
        elem = elem + (area * c1)[:, None, None] * (d[:, :, None] * d[:, None, :])

    um = 0.5 * (ul + np.roll(ul, -1, axis=1))
    if p == 2.0:
        cv = np.ones_like(um)
    else:
        vbase = um * um + e2
        cv = np.zeros_like(vbase)
        vnz = vbase > 0.0
        cv[vnz] = (p - 1.0) * vbase[vnz] ** (0.5 * p - 1.0)
    melem = np.zeros_like(elem)
    for k in range(3):
        l = (k + 1) % 3
        wk = 0.25 * (area / 3.0) * cv[:, k]
        melem[:, k, k] += wk
        melem[:, l, l] += wk
        melem[:, k, l] += wk
        melem[:, l, k] += wk
    return _assemble(mesh.triangles, elem + melem, mesh.n_vertices)


def rayleigh_quotient(mesh, u, p=2.0, domain=None, problem="schrodinger"):
    """Energy over weighted boundary p-norm.

    "schrodinger" uses the full Sobolev p-norm over the 4-point boundary
    p-norm (any p > 1); "harmonic" is the quadratic form ratio
    u'Ku / u'B_wu and only makes sense at p = 2.  Raises
    QuotientUndefinedError when the trace of u carries no boundary mass.
    """
    _check_p(p)
    if problem == "harmonic":
        if p != 2.0:
            raise ValueError("the harmonic quotient is a p = 2 object")
        num = float(u @ (stiffness(mesh) @ u))
        den = float(u @ (boundary_weighted_mass(mesh, domain) @ u))
    elif problem == "schrodinger":
        num = sobolev_pnorm(mesh, u, p)
        den = boundary_weighted_pnorm(mesh, u, p, domain)
    else:
        raise ValueError(f"unknown problem {problem!r}")
    if not den > 0.0:
        raise QuotientUndefinedError(
            "boundary p-norm of the trace vanishes; quotient undefined")
    return num / den


def write_matrix_text(path, matrix):
    """Dump a sparse matrix as 0-based "i j value" lines for inspection."""
    c = matrix.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(c.row, c.col, c.data):
            fh.write(f"{i} {j} {v!r}\n")
