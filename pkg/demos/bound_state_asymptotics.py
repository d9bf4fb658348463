"""How the bound state leaves the band bottom as the coupling decreases.

For each case we sweep mu toward mu(p), fit the expected law and compare
the fitted leading coefficient with the prediction from the threshold data.

Run:  python3 demos/bound_state_asymptotics.py
"""
from threshold_spectra import asymptotics, leading_coefficients, reference_models

p = (0.0, 0.0)
laws = {
    "I": "log(gap) vs 1/mu, slope -> 1/alpha0",
    "II": "gap log(1/mu_hat)/mu_hat -> 1/(alpha1_hat mu(p)^2)",
    "III": "gap/mu_hat -> 1/(-c1_hat mu(p)^2)",
}
for tag, model in reference_models().items():
    report = leading_coefficients(model, p)
    mus = asymptotics.default_mu_values(tag, report.mu_threshold)
    table = asymptotics.sweep_eigenvalues(model, p, mus, jobs=4)
    fit = asymptotics.fit_case(table, report)
    print(f"case {tag}: {laws[tag]}")
    for row in table.rows:
        print(f"    mu = {row.mu:.10f}  mu_hat = {row.mu_hat:.3e}  gap = {row.gap:.6e}")
    print(f"  fitted {fit.leading_coefficient:.6f}  predicted {fit.reference_value:.6f}"
          f"  rel. dev {fit.rel_dev:.2e}  corrections ok: {fit.correction_order_ok}\n")
