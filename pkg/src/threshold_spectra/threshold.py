"""Threshold classification and leading expansion coefficients.

Near the band bottom the Birman-Schwinger function behaves as

    Omega(p, m - eps) = log(eps) * sum_n alpha_n eps^n + sum_n c_n eps^n

and the leading nontrivial coefficient depends on how fast ``phi`` vanishes
at the minimizer ``q0``:

case I   (phi(q0) != 0)                 log coefficient ``alpha0 < 0``
case II  (phi(q0) = 0, grad phi != 0)   ``eps log eps`` coefficient ``alpha1_hat > 0``
case III (phi and grad phi vanish)      ``eps`` coefficient ``c1_hat < 0``

Each coefficient is computed twice: from local data at ``q0`` (or, in case
III, a convergent threshold integral) and from a least-squares fit of
sampled ``Omega`` values.  Measure is plain ``dq`` on (-pi, pi]^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import spectral
from .catalog import TorusPoint
from .errors import PoorFitError
from .quadrature import PhiSquared, integrate_near_threshold

CASE_TAGS = {0: "I", 1: "II", 2: "III"}
FIT_EPS = np.geomspace(1e-3, 1e-9, 7)
CROSSCHECK_FLAG = 0.05
FIT_RESIDUAL_TOL = 1e-3


@dataclass(frozen=True)
class ThresholdCase:
    tag: str
    phi_at_min: float
    grad_phi_at_min: tuple

    def to_dict(self):
        return {"tag": self.tag, "phi_at_min": self.phi_at_min, "grad_phi_at_min": list(self.grad_phi_at_min)}


@dataclass(frozen=True)
class LogFit:
    """Least-squares fit of ``Omega(p, m - eps)`` on the eps grid."""

    columns: tuple
    coefficients: dict
    residuals: np.ndarray
    eps: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class ThresholdReport:
    case: ThresholdCase
    mu_threshold: float
    alpha0: Optional[float] = None
    alpha1_hat: Optional[float] = None
    c1_hat: Optional[float] = None
    slope_a: Optional[float] = None
    fitted: float = float("nan")
    crosscheck_dev: float = float("nan")
    flagged: bool = False
    fit_coefficients: dict = field(default_factory=dict)

    @property
    def leading(self):
        return {"I": self.alpha0, "II": self.alpha1_hat, "III": self.c1_hat}[self.case.tag]

    def to_dict(self):
        return {
            "case": self.case.to_dict(),
            "mu_threshold": self.mu_threshold,
            "alpha0": self.alpha0,
            "alpha1_hat": self.alpha1_hat,
            "c1_hat": self.c1_hat,
            "slope_a": self.slope_a,
            "fitted": self.fitted,
            "crosscheck_dev": self.crosscheck_dev,
            "flagged": self.flagged,
            "fit_coefficients": dict(self.fit_coefficients),
        }


def classify(model, p) -> ThresholdCase:
    """Threshold case from the vanishing order of ``phi`` at ``q0(p)``."""
    order, value, grad = spectral.vanishing_order(model, p)
    return ThresholdCase(CASE_TAGS[order], float(value), (float(grad[0]), float(grad[1])))


def log_coefficient_from_hessian(phi0: float, hessian) -> float:
    """Coefficient of ``log(eps)`` in ``Omega`` when ``phi(q0) != 0``.

    With ``w - m ~ (1/2) d^T H d`` the local integral is
    ``phi0^2 * (2 / sqrt(det H)) * int dy / (|y|^2 + eps)``, whose log part
    is ``-pi log(eps)``.
    """
    H = np.asarray(hessian, dtype=float)
    return -2.0 * math.pi * phi0**2 / math.sqrt(np.linalg.det(H))


def alpha1_hat_from_hessian(grad_phi, hessian) -> float:
    """``eps log eps`` coefficient of ``Omega`` when ``phi(q0) = 0``.

    In Morse coordinates ``d = D y`` with ``D D^T = 2 H^-1`` and Jacobian
    ``2 / sqrt(det H)``; the angular average of ``(grad.D y)^2`` leaves
    ``(pi/2) * J * grad^T D D^T grad = 2 pi grad^T H^-1 grad / sqrt(det H)``,
    which does not depend on the orthogonal freedom in ``D``.
    """
    g = np.asarray(grad_phi, dtype=float)
    H = np.asarray(hessian, dtype=float)
    return 2.0 * math.pi * float(g @ np.linalg.solve(H, g)) / math.sqrt(np.linalg.det(H))


def _design(tag, eps, extended=False):
    le = np.log(eps)
    if tag == "I":
        cols = {"alpha0": le, "c0": np.ones_like(eps)}
    elif tag == "II":
        cols = {"c0": np.ones_like(eps), "alpha1": eps * le, "c1": eps}
    else:
        cols = {"c0": np.ones_like(eps), "c1": eps, "alpha2": eps**2 * le}
        if extended:
            cols["alpha1"] = eps * le
    return cols


def omega_samples(model, p, eps=FIT_EPS, rel_tol=spectral.DEFAULT_REL_TOL):
    p = TorusPoint.of(p)
    band = spectral.require_admissible(model, p)
    return np.array([spectral._omega_eps(model, p, band, float(e), rel_tol).value for e in eps])


def log_fit(model, p, case: ThresholdCase, eps=FIT_EPS, extended=False, rel_tol=spectral.DEFAULT_REL_TOL) -> LogFit:
    """Fit the case-appropriate expansion of ``Omega(p, m - eps)``.

    ``extended=True`` adds an ``eps log eps`` column in case III, whose
    coefficient should vanish.
    """
    eps = np.asarray(eps, dtype=float)
    values = omega_samples(model, p, eps, rel_tol)
    cols = _design(case.tag, eps, extended)
    A = np.column_stack(list(cols.values()))
    scale = np.max(np.abs(A), axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, values, rcond=None)
    coef = coef / scale
    resid = values - A @ coef
    return LogFit(tuple(cols), dict(zip(cols, map(float, coef))), resid, eps, values)


_LEADING_COLUMN = {"I": "alpha0", "II": "alpha1", "III": "c1"}


def log_fit_coefficient(model, p, case: Optional[ThresholdCase] = None, eps=FIT_EPS) -> float:
    """Leading coefficient of ``Omega`` from the regression on sampled values.

    Returns the ``log eps`` coefficient (case I), the ``eps log eps``
    coefficient (case II) or the ``eps`` coefficient (case III).

    Raises
    ------
    PoorFitError
        If a residual exceeds ``1e-3`` of the largest leading-term magnitude.
    """
    case = case or classify(model, p)
    return _leading_from_fit(log_fit(model, p, case, eps), case)


def _leading_from_fit(fit: LogFit, case: ThresholdCase) -> float:
    key = _LEADING_COLUMN[case.tag]
    cols = _design(case.tag, fit.eps)
    leading_term = np.max(np.abs(fit.coefficients[key] * cols[key]))
    if np.max(np.abs(fit.residuals)) > FIT_RESIDUAL_TOL * leading_term:
        raise PoorFitError(f"case {case.tag} log-fit residuals too large", residuals=fit.residuals.tolist())
    return fit.coefficients[key]


def threshold_eps_derivative(model, p, rel_tol=spectral.DEFAULT_REL_TOL) -> float:
    """``c1_hat = -int phi^2 / (w_p - m)^2 dq``; finite when ``phi`` vanishes to second order."""
    p = TorusPoint.of(p)
    band = spectral.require_admissible(model, p)
    est = integrate_near_threshold(model, p, band, PhiSquared(model), 0.0, rel_tol, power=2)
    return -est.value


def leading_coefficients(model, p, case: Optional[ThresholdCase] = None,
                         rel_tol: float = spectral.DEFAULT_REL_TOL) -> ThresholdReport:
    """Closed-form leading coefficient for the case, cross-checked by log-fit."""
    p = TorusPoint.of(p)
    band = spectral.require_admissible(model, p)
    case = case or classify(model, p)
    mu_c = spectral.coupling_threshold(model, p, rel_tol)
    fit = log_fit(model, p, case, rel_tol=rel_tol)
    fitted = _leading_from_fit(fit, case)
    kwargs = {}
    if case.tag == "I":
        closed = log_coefficient_from_hessian(case.phi_at_min, band.hessian)
        kwargs["alpha0"] = closed
    elif case.tag == "II":
        closed = alpha1_hat_from_hessian(case.grad_phi_at_min, band.hessian)
        kwargs["alpha1_hat"] = closed
    else:
        closed = threshold_eps_derivative(model, p, rel_tol)
        kwargs["c1_hat"] = closed
        kwargs["slope_a"] = 1.0 / (-closed * mu_c**2)
    dev = abs(fitted - closed) / abs(closed)
    return ThresholdReport(
        case=case,
        mu_threshold=mu_c,
        fitted=fitted,
        crosscheck_dev=dev,
        flagged=dev > CROSSCHECK_FLAG,
        fit_coefficients=fit.coefficients,
        **kwargs,
    )
