"""Refinement study probing whether the boundary spectrum is discrete.

On a strong cusp (alpha = 3) the unweighted Steklov problem loses
discreteness: under mesh refinement the first nonzero eigenvalue keeps
sliding toward zero instead of settling.  With the channel-width boundary
weight the same domain produces eigenvalues that stabilize level after
level.  The two ladders below print that contrast; relative deltas between
consecutive levels are the signal, and the Richardson column extrapolates
the stabilizing sequence to its apparent limit.
"""

from cuspsteklov import CuspDomain, CuspProfile, SizeField, convergence_study

domain = CuspDomain.with_tip_width(CuspProfile.power(3.0))
size = SizeField(h_max=0.25)

for mode in ("weighted", "unweighted"):
    study = convergence_study(domain, size, problem="harmonic", k=3,
                              levels=4, weight_mode=mode)
    print(f"\n{mode} ladder, alpha = 3")
    print("level  vertices   lambda1        lambda2        delta lambda1")
    for i, rec in enumerate(study.levels):
        delta = f"{study.deltas[i - 1][1]:12.2e}" if i else "           -"
        print(f"{rec['level']:5d}  {rec['vertices']:8d}"
              f"   {rec['eigenvalues'][1]:.10f}"
              f"   {rec['eigenvalues'][2]:.10f}  {delta}")
    if mode == "weighted":
        print(f"Richardson limit for lambda1: {study.richardson[1]:.10f}")
    else:
        lam1 = [rec["eigenvalues"][1] for rec in study.levels]
        ratio = lam1[-1] / lam1[-2]
        print(f"lambda1 keeps shrinking (last ratio {ratio:.3f}): "
              "no sign of a limit above zero")
