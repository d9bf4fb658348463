import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from threshold_spectra import spectral
from threshold_spectra.catalog import reference_models
from threshold_spectra.errors import DivergenceError, NonConvergenceError, NumericError
from threshold_spectra.quadrature import (
    INNER_RADIUS,
    PhiSquared,
    integrate_auto,
    integrate_near_threshold,
    integrate_periodic,
    partition,
    radial_log_integral,
)

# (2 pi)^2 I_0(1)^2 and the 1-D reduction of int dq / (5 - cos q1 - cos q2), both by mpmath
EXP_COS_INTEGRAL = 63.28085595471352987
INV_FIVE_INTEGRAL = 8.243538448781111573
# Omega for phi = 1, p = 0, z = -1, from the closed-form q2 integral and mpmath quadrature in q1
OMEGA_I_Z_MINUS_1 = 10.02948567679811589
# Omega for phi = sin q1, p = 0, z = m = 0 (same oracle)
OMEGA_II_THRESHOLD = 7.172838187819544284


@pytest.fixture(scope="module")
def models():
    return reference_models()


def inv_five(q1, q2):
    return 1.0 / (5.0 - np.cos(q1) - np.cos(q2))


# --- integrate_periodic ---------------------------------------------------

@pytest.mark.parametrize("n", [4, 16, 64])
def test_constant_integrand(n):
    assert integrate_periodic(lambda a, b: np.ones_like(a + b), n) == pytest.approx(4 * math.pi**2, rel=1e-15)


def test_pure_harmonic_is_exact():
    assert abs(integrate_periodic(lambda a, b: np.cos(a) + 0 * b, 16)) < 1e-14


def test_analytic_self_convergence():
    a, b = integrate_periodic(inv_five, 64), integrate_periodic(inv_five, 128)
    assert abs(a - b) < 1e-12 * abs(b)
    assert b == pytest.approx(INV_FIVE_INTEGRAL, rel=1e-14)


def test_inter_level_differences_shrink():
    vals = [integrate_periodic(inv_five, n) for n in (4, 8, 16, 32)]
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] < diffs[:-1])


def test_bad_grid_size():
    with pytest.raises(ValueError):
        integrate_periodic(inv_five, 7)


@pytest.mark.filterwarnings("ignore:divide by zero")
def test_non_finite_sample_reports_node():
    with pytest.raises(NumericError) as info:
        integrate_periodic(lambda a, b: 1.0 / (np.sin(a / 2) ** 2 + np.sin(b / 2) ** 2), 8)
    assert info.value.node == (0.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 31), st.integers(0, 31))
def test_linearity_and_lattice_translation(a, b, s1, s2):
    n = 32
    h = 2 * math.pi / n
    f = lambda x, y: np.exp(np.cos(x) + 0.5 * np.sin(2 * y))
    g = inv_five
    lin = integrate_periodic(lambda x, y: a * f(x, y) + b * g(x, y), n)
    assert lin == pytest.approx(a * integrate_periodic(f, n) + b * integrate_periodic(g, n), abs=1e-11)
    shifted = integrate_periodic(lambda x, y: f(x + s1 * h, y + s2 * h), n)
    assert shifted == pytest.approx(integrate_periodic(f, n), rel=1e-14)


# --- integrate_auto -------------------------------------------------------

def test_auto_constant_uses_two_levels():
    est = integrate_auto(lambda a, b: np.ones_like(a + b), 1e-10)
    assert est.nodes_used == 64
    assert est.value == pytest.approx(4 * math.pi**2, rel=1e-15)


def test_auto_exp_cos():
    est = integrate_auto(lambda a, b: np.exp(np.cos(a) + np.cos(b)), 1e-10)
    assert est.error_estimate < 1e-10 * est.value
    assert est.value == pytest.approx(EXP_COS_INTEGRAL, rel=1e-13)


@pytest.mark.filterwarnings("ignore:divide by zero")
def test_auto_pole_does_not_return_a_number():
    with pytest.raises(NonConvergenceError):
        integrate_auto(lambda a, b: 1.0 / (np.sin(a / 2) ** 2 + np.sin(b / 2) ** 2), 1e-8)


def test_auto_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        integrate_auto(inv_five, 0.5)


# --- radial_log_integral --------------------------------------------------

def test_radial_base_case():
    assert radial_log_integral(0, 1.0, 1.0) == pytest.approx(0.5 * math.log(2), rel=1e-15)


def test_radial_against_adaptive_quadrature():
    ref, _ = integrate.quad(lambda r: r**3 / (r * r + 0.1), 0, 1, epsabs=1e-14, epsrel=1e-14)
    assert abs(radial_log_integral(1, 0.1, 1.0) - ref) < 1e-12
    ref2, _ = integrate.quad(lambda r: r**5 / (r * r + 0.03), 0, 0.7, epsabs=1e-15, epsrel=1e-14)
    assert abs(radial_log_integral(2, 0.03, 0.7) - ref2) < 1e-13


def test_radial_small_eps_asymptotics():
    eps = 1e-12
    val = radial_log_integral(0, eps, 1.0)
    assert abs(val / (0.5 * math.log(1 / eps)) - 1) < 1e-9


@pytest.mark.parametrize("n", [0, 1, 2])
def test_radial_regular_part_converges(n):
    eps = [10.0**-k for k in range(4, 11)]
    regular = [radial_log_integral(n, e, 1.0) + 0.5 * (-e) ** n * math.log(e) for e in eps]
    diffs = np.abs(np.diff(regular))
    assert np.all(diffs <= 2 * np.array(eps[:-1]))
    assert diffs[-1] < 1e-8


def test_radial_rejects_bad_input():
    with pytest.raises(ValueError):
        radial_log_integral(0, 0.0, 1.0)


# --- partition ------------------------------------------------------------

def test_partition_shape():
    assert partition(0.0, 0.0) == 1.0
    assert partition(INNER_RADIUS, 0.0) < 1e-17
    r = np.linspace(0, INNER_RADIUS, 50)
    vals = partition(r, 0 * r)
    assert np.all(np.diff(vals) <= 0)


# --- integrate_near_threshold ---------------------------------------------

def _near(model, eps, **kw):
    band = spectral.band_edges(model, (0, 0))
    return integrate_near_threshold(model, (0, 0), band, PhiSquared(model), eps, **kw)


def test_near_threshold_matches_dense_grid(models):
    m = models["I"]
    eps = 1e-4
    brute = integrate_periodic(lambda a, b: 1.0 / (4 - 2 * np.cos(a) - 2 * np.cos(b) + eps), 4096)
    assert _near(m, eps).value == pytest.approx(brute, rel=1e-6)


def test_near_threshold_away_from_band_matches_oracle(models):
    assert _near(models["I"], 1.0).value == pytest.approx(OMEGA_I_Z_MINUS_1, rel=1e-13)


def test_case_ii_threshold_integral_is_finite_and_stable(models):
    a = _near(models["II"], 0.0, rel_tol=1e-6).value
    b = _near(models["II"], 0.0, rel_tol=1e-8).value
    assert abs(a - b) <= 1e-8 * b
    assert b == pytest.approx(OMEGA_II_THRESHOLD, rel=1e-12)


def test_case_i_threshold_integral_diverges(models):
    with pytest.raises(DivergenceError) as info:
        _near(models["I"], 0.0)
    octs = np.abs(info.value.octaves)
    assert len(octs) > 10
    # log divergence: octave contributions tend to a constant
    assert octs[-1] == pytest.approx(octs[-2], rel=0.05)


def test_case_i_log_slope(models):
    eps = np.geomspace(1e-3, 1e-9, 7)
    F = np.array([_near(models["I"], e).value for e in eps])
    slope = np.polyfit(np.log(eps), F, 1)[0]
    assert abs(slope / -math.pi - 1) < 5e-3
    bounded = F + math.pi * np.log(eps)
    assert np.ptp(bounded) < 1e-2


def test_error_estimate_nonnegative(models):
    est = _near(models["III"], 1e-6)
    assert est.error_estimate >= 0 and est.nodes_used > 0
