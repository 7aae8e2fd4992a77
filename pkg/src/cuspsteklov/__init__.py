"""Finite element eigensolver for weighted Steklov problems on cusped domains.

The package builds planar domains consisting of a power-law (or tabulated)
outward cusp glued to a disk, meshes them with grading into the cusp tip,
assembles the linear and p-nonlinear forms of the Steklov eigenvalue problem
with a boundary weight that vanishes at the tip, and solves for the bottom of
the spectrum by dense pencil reduction (linear case) or inverse iteration
(nonlinear case).
"""

from .errors import (BudgetError, GeometryError, MeshError, NonConvergenceError,
                     NotSPDError, QuotientUndefinedError)
from .geometry import (ARC, LINE, TIP, WALL_LEFT, WALL_RIGHT, BoundarySample,
                       CuspDomain, CuspProfile, DiskDomain, Polyline,
                       domain_from_dict, domain_to_dict, load_domain)
from .meshing import (SizeField, TriMesh, disk_mesh, generate, mesh_quality,
                      read_mesh, refine_uniform, write_mesh)
from .assembly import (boundary_moment, boundary_source, boundary_weighted_mass,
                       boundary_weighted_pnorm, mass, p_energy_gradient,
                       p_tangent_matrix, rayleigh_quotient, sobolev_pnorm,
                       stiffness)
from .numerics import (DENSE_CAP, SPDFactor, cg_solve, factor_spd,
                       pencil_smallest, sym_eigen)
from .linear_eigen import (ConvergenceStudy, DtnMap, EigenPair, SpectrumResult,
                           boundary_chain, boundary_vertices, convergence_study,
                           dtn_reduce, minmax_check, spectrum_json_dict,
                           steklov_spectrum, write_trace_csv)
from .p_solver import (InnerSolveConfig, InnerSolution, IterationStep,
                       IterationTrace, default_outer_tol, eigen_residual,
                       inner_energy, inverse_iteration, iteration_json_dict,
                       rayleigh_minimize_check, solve_inner, trace_constant)

__version__ = "0.1.0"
