"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Invalid domain data: bad cusp profile, self-intersecting polyline, etc."""


class MeshError(RuntimeError):
    """Mesh generation or validation failure."""


class BudgetError(MeshError):
    """Refinement exceeded its vertex or round budget.

    Carries diagnostics so the caller can see how far refinement got.
    """

    def __init__(self, message, n_vertices=None, n_rounds=None, worst=None):
        super().__init__(message)
        self.n_vertices = n_vertices
        self.n_rounds = n_rounds
        self.worst = worst


class NotSPDError(ValueError):
    """A matrix required to be symmetric positive definite is not."""


class QuotientUndefinedError(ValueError):
    """Rayleigh quotient requested for a function with zero boundary norm."""


class NonConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations.

    The partial iteration history, when available, is attached as ``trace``.
    """

    def __init__(self, message, trace=None, residual=None):
        super().__init__(message)
        self.trace = trace
        self.residual = residual


class CertificationError(RuntimeError):
    """A posteriori verification of a computed quantity failed."""
