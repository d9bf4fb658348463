"""Band edges and the Birman-Schwinger function of the reference models.

Run:  python3 demos/band_and_birman_schwinger.py
"""
import numpy as np

from threshold_spectra import band_edges, omega, reference_models

p = (0.4, 0.2)
models = reference_models(center=(p[0] / 2, p[1] / 2))
band = band_edges(models["I"], p)
print(f"p = {p}: m = {band.m:.12f}, M = {band.M:.12f}, q0 = ({band.q0.q1:.6f}, {band.q0.q2:.6f})")
print("Hessian at q0:\n", np.round(band.hessian, 12))

# Omega grows without bound as z -> m for phi = 1, stays finite when phi(q0) = 0
print("\n m - z        Omega_I          Omega_II         Omega_III")
for gap in (1.0, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10):
    z = band.m - gap
    vals = [omega(models[t], p, z).value for t in ("I", "II", "III")]
    print(f"{gap:7.0e}  " + "  ".join(f"{v:15.10f}" for v in vals))

# above the band Omega is negative, so no eigenvalue can appear there
print(f"\nOmega_I(M + 0.5) = {omega(models['I'], p, band.M + 0.5).value:.6f}")
