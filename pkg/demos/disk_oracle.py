"""Check the solver against the unit disk, where everything is explicit.

The boundary eigenvalues of the harmonic problem on a disk of radius R are
k/R, each positive one twice (sin and cos pairs).  Adding the volume term
shifts the principal eigenvalue to I1(R)/I0(R), a modified Bessel ratio.
This script prints both comparisons on a refinement ladder so the expected
second-order convergence is visible.
"""

import numpy as np
from scipy.special import iv

from cuspsteklov import DiskDomain, disk_mesh, refine_uniform, steklov_spectrum

domain = DiskDomain(1.0)
mesh = disk_mesh(1.0, h=0.15)

# exact references
harmonic_exact = np.array([0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0])
bessel_ratio = iv(1, 1.0) / iv(0, 1.0)

print("level  vertices  worst harmonic rel err   bessel rel err")
for level in range(4):
    if level:
        mesh = refine_uniform(mesh, domain)
    res = steklov_spectrum(mesh, domain, problem="harmonic", k=7)
    errs = np.abs(res.values[1:] - harmonic_exact[1:]) / harmonic_exact[1:]
    res_s = steklov_spectrum(mesh, domain, problem="schrodinger", k=2)
    berr = abs(res_s.values[0] - bessel_ratio) / bessel_ratio
    print(f"{level:5d}  {mesh.n_vertices:8d}  {errs.max():22.3e}   {berr:14.3e}")

print()
print("finest-level harmonic eigenvalues vs k/R:")
for lam, exact in zip(res.values, harmonic_exact):
    print(f"  {lam:12.8f}   exact {exact:.0f}")
print(f"\nprincipal eigenvalue with the volume term: {res_s.values[0]:.8f}")
print(f"I1(1)/I0(1)                              = {bessel_ratio:.8f}")
