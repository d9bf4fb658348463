"""Threshold resonance versus threshold eigenvalue.

At mu = mu(p) the function f = phi / (w_p - m(p)) solves the eigenvalue
equation at the band bottom.  When phi vanishes to first order it behaves
like 1/|q - q0| (integrable, not square integrable); to second order it is
bounded.  Octave masses make the difference visible.

Run:  python3 demos/threshold_solutions.py
"""
from threshold_spectra import reference_models, threshold_norm_profile

models = reference_models()
for tag in ("II", "III"):
    prof = threshold_norm_profile(models[tag], (0.0, 0.0), k_max=20)
    print(f"case {tag}: verdict {prof.verdict}")
    print("   k   int|f| on annulus   int|f|^2 on annulus")
    for k in (1, 4, 8, 12, 16, 20):
        print(f"  {k:2d}   {prof.octave_l1[k - 1]:.6e}      {prof.octave_l2sq[k - 1]:.6e}")
    print(f"  decay per octave: L1 {prof.l1_decay:.3f}, L2 {prof.l2_decay:.3f}\n")
