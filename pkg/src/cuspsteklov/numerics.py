"""Linear algebra kernels behind the eigensolvers.

Sparse SPD systems go through a symmetric-mode sparse LU restricted to
diagonal pivoting, which doubles as a positive definiteness certificate:
a nonpositive pivot aborts with NotSPDError instead of silently returning
garbage.  Solves apply one step of iterative refinement, which is cheap and
recovers most of the accuracy lost to the extreme element-size spread near
the cusp tip.

Generalized symmetric eigenproblems here are small and dense (boundary
traces after elimination of the interior), but the weighted boundary mass
can span twenty orders of magnitude, so ``pencil_smallest`` never inverts
it: it factors the SPD stiffness side and reads the smallest pencil values
off the top of a bounded similar matrix.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NonConvergenceError, NotSPDError

DENSE_CAP = 4000


class SPDFactor:
    """Factorization of a sparse SPD matrix with refined solves.

    The matrix is symmetrically equilibrated to unit diagonal before the
    factorization.  On strongly graded meshes the assembled matrices carry
    row scales spanning many orders of magnitude; equilibration keeps the
    elimination pivots near unit size, which both sharpens the positivity
    check and improves the accuracy of the solves.
    """

    def __init__(self, matrix):
        a = sp.csc_matrix(matrix)
        if a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        self._matrix = a
        diag = a.diagonal()
        if not np.all(diag > 0.0):
            raise NotSPDError("matrix is not positive definite"
                              f" (diagonal min {diag.min():.3e})")
        d = np.sqrt(diag)
        self._dinv = 1.0 / d
        self._logdiag = 2.0 * float(np.sum(np.log(d)))
        scal = sp.diags(self._dinv)
        try:
            self._lu = splu(sp.csc_matrix(scal @ a @ scal),
                            permc_spec="MMD_AT_PLUS_A",
                            diag_pivot_thresh=0.0,
                            options={"SymmetricMode": True})
        except RuntimeError as exc:  # exactly singular
            raise NotSPDError(f"matrix is not positive definite: {exc}") from exc
        piv = self._lu.U.diagonal()
        if not np.all(piv > 0.0):
            raise NotSPDError(
                f"matrix is not positive definite (smallest pivot {piv.min():.3e})")

    @property
    def shape(self):
        return self._matrix.shape

    def _apply(self, b):
        dinv = self._dinv if b.ndim == 1 else self._dinv[:, None]
        return dinv * self._lu.solve(dinv * b)

    def solve(self, rhs):
        """Solve with one iterative refinement pass; rhs may be a matrix."""
        b = np.asarray(rhs, dtype=float)
        x = self._apply(b)
        r = b - self._matrix @ x
        return x + self._apply(r)

    def logdet(self):
        return float(np.sum(np.log(self._lu.U.diagonal()))) + self._logdiag


def factor_spd(matrix):
    return SPDFactor(matrix)


def _as_matvec(op):
    if callable(op) and not sp.issparse(op):
        return op
    return lambda v: op @ v


def cg_solve(op, b, rtol=1e-10, atol=0.0, maxiter=None, kernel=None, x0=None):
    """Conjugate gradients for SPD (or PSD with known kernel) operators.

    ``kernel`` is a (n, k) array spanning the null space; right-hand side
    and iterates are kept orthogonal to it, so the returned solution is the
    minimum-norm representative.  Raises NonConvergenceError on stall.
    """
    matvec = _as_matvec(op)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if kernel is not None:
        kernel = np.atleast_2d(np.asarray(kernel, dtype=float))
        if kernel.shape[0] != n:
            kernel = kernel.T
        kernel = np.linalg.qr(kernel)[0]

    def project(v):
        if kernel is None:
            return v
        return v - kernel @ (kernel.T @ v)

    b = project(b)
    x = np.zeros(n) if x0 is None else project(np.asarray(x0, dtype=float))
    r = project(b - matvec(x))
    d = r.copy()
    rs = r @ r
    tol2 = max(rtol * np.linalg.norm(b), atol) ** 2
    if maxiter is None:
        maxiter = 10 * n
    if rs <= tol2:
        return x
    for _ in range(maxiter):
        ad = project(matvec(d))
        dad = d @ ad
        if dad <= 0.0:
            raise NotSPDError("conjugate gradients hit a nonpositive curvature"
                              f" direction (d'Ad = {dad:.3e})")
        alpha = rs / dad
        x += alpha * d
        r -= alpha * ad
        rs_new = r @ r
        if rs_new <= tol2:
            return project(x)
        d = r + (rs_new / rs) * d
        rs = rs_new
    raise NonConvergenceError(
        f"conjugate gradients: no convergence in {maxiter} iterations",
        residual=float(np.sqrt(rs)))


def _to_dense_sym(a, name):
    if sp.issparse(a):
        if a.shape[0] > DENSE_CAP:
            raise ValueError(
                f"{name} has dimension {a.shape[0]}, over the dense solver"
                f" cap {DENSE_CAP}")
        a = a.toarray()
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def sym_eigen(a, m=None, k=None):
    """Dense (generalized) symmetric eigendecomposition, ascending.

    Returns (values, vectors); ``k`` keeps only the smallest k pairs.
    """
    ad = _to_dense_sym(a, "operator")
    md = None if m is None else _to_dense_sym(m, "mass")
    vals, vecs = sla.eigh(ad, md)
    if k is not None:
        vals, vecs = vals[:k], vecs[:, :k]
    return vals, vecs


def pencil_smallest(s, m, k):
    """Smallest k eigenpairs of the pencil (s, m) with s SPD, m PSD.

    Works through theta = 1 / lambda: with s = R' R the pencil spectrum is
    the reciprocal spectrum of R^{-T} m R^{-1}, whose entries stay bounded
    however degenerate m is, so a nearly singular weighted boundary mass
    (the cusp tip) costs no accuracy on the smallest eigenvalues.
    Eigenvectors come back m-normalized.
    """
    sd = _to_dense_sym(s, "stiffness side")
    md = _to_dense_sym(m, "mass side")
    n = sd.shape[0]
    k = min(k, n)
    try:
        r = sla.cholesky(sd, lower=False)
    except sla.LinAlgError as exc:
        raise NotSPDError(f"stiffness side of the pencil: {exc}") from exc
    w = sla.solve_triangular(r.T, md, lower=True)
    t = sla.solve_triangular(r.T, w.T, lower=True)
    theta, y = sla.eigh(0.5 * (t + t.T))
    order = np.argsort(theta)[::-1][:k]
    lam = np.empty(k)
    vecs = np.empty((n, k))
    for j, idx in enumerate(order):
        th = theta[idx]
        if th <= 0.0:
            raise NotSPDError(
                "mass side of the pencil is not positive semidefinite on the"
                f" requested subspace (theta = {th:.3e})")
        lam[j] = 1.0 / th
        x = sla.solve_triangular(r, y[:, idx], lower=False)
        vecs[:, j] = x / np.sqrt(th)
    return lam, vecs
