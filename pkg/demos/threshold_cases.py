"""Classify the threshold and compute the leading coefficients two ways.

Run:  python3 demos/threshold_cases.py
"""
from threshold_spectra import leading_coefficients, reference_models

for p in ((0.0, 0.0), (0.4, 0.2)):
    models = reference_models(center=(p[0] / 2, p[1] / 2))
    print(f"p = {p}")
    for tag, model in models.items():
        r = leading_coefficients(model, p)
        name = {"I": "alpha0", "II": "alpha1_hat", "III": "c1_hat"}[tag]
        extra = f", slope_a = {r.slope_a:.6f}" if r.slope_a else ""
        print(f"  case {r.case.tag:3s} mu(p) = {r.mu_threshold:.10f}  {name}: closed {r.leading:+.6f}"
              f" fit {r.fitted:+.6f} (dev {r.crosscheck_dev:.1e}){extra}")
