"""Band edges, Birman-Schwinger function, coupling threshold and bound states.

For ``H_mu(p) = w_p - mu <., phi> phi`` on L^2 of the torus, a number ``z``
outside the band ``[m(p), M(p)]`` is an eigenvalue iff the determinant
``Delta(mu, p; z) = 1 - mu * Omega(p; z)`` vanishes, with
``Omega(p; z) = int phi^2 / (w_p - z) dq``.  Since ``Omega`` increases
strictly in ``z`` below the band, there is at most one eigenvalue below
``m(p)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import optimize

from . import catalog
from .catalog import TorusPoint
from .errors import (
    DivergenceError,
    DomainError,
    InadmissibleMomentumError,
    InconsistencyError,
    ResolutionError,
)
from .quadrature import (
    EPS_FLOOR,
    PhiSquared,
    QuadratureEstimate,
    integrate_auto,
    integrate_near_threshold,
    torus_grid,
)

ADMISSIBLE_CONDITION = 1e6
PHI_GATE = 1e-9
DEFAULT_REL_TOL = 1e-10
RESIDUAL_TOL = 1e-10
THRESHOLD_OFFSET = 1e-8


@dataclass(frozen=True)
class BandInfo:
    """Band bottom/top of ``w_p`` with the minimizer and its Hessian."""

    m: float
    M: float
    q0: TorusPoint
    hessian: np.ndarray
    admissible: bool
    q_max: Optional[TorusPoint] = None
    diagnostics: str = ""

    @property
    def bandwidth(self):
        return self.M - self.m

    def to_dict(self):
        return {
            "m": self.m,
            "M": self.M,
            "q0": [self.q0.q1, self.q0.q2],
            "hessian": np.asarray(self.hessian).tolist(),
            "admissible": self.admissible,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class EigenvalueResult:
    """A bound state below the band; ``gap = m(p) - energy`` is kept separately."""

    energy: float
    gap: float
    bracket: tuple
    determinant_residual: float
    iterations: int

    def to_dict(self):
        return {
            "energy": self.energy,
            "gap": self.gap,
            "bracket": list(self.bracket),
            "determinant_residual": self.determinant_residual,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class NormProfile:
    """Per-octave ``L^1`` and squared ``L^2`` mass of the threshold solution."""

    octave_l1: list
    octave_l2sq: list
    verdict: str
    l1_decay: float = float("nan")
    l2_decay: float = float("nan")
    l1_tail: str = ""
    l2_tail: str = ""
    ks: list = field(default_factory=list)

    def to_dict(self):
        return {
            "octave_l1": list(self.octave_l1),
            "octave_l2sq": list(self.octave_l2sq),
            "verdict": self.verdict,
            "l1_decay": self.l1_decay,
            "l2_decay": self.l2_decay,
        }


# --------------------------------------------------------------------------
# band edges
# --------------------------------------------------------------------------

def _newton_stationary(model, p, q, sign, tol=1e-12, max_iter=60):
    """Newton iteration on the gradient of ``sign * w_p`` starting at ``q``."""
    q = np.asarray(q, dtype=float)
    for it in range(max_iter):
        d = catalog.derivatives_w(model, p, q)
        g = sign * d.gradient
        H = sign * d.hessian
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return q, False, f"singular Hessian after {it} Newton steps"
        if not np.all(np.isfinite(step)):
            return q, False, f"non-finite Newton step after {it} steps"
        q = q - step
        if np.max(np.abs(step)) < tol or np.max(np.abs(g)) < 1e-15:
            return q, True, f"converged in {it + 1} Newton steps"
    return q, False, f"no convergence in {max_iter} Newton steps"


def _extremum(model, p, sign, n_scan=128):
    q, _ = torus_grid(n_scan)
    Q1, Q2 = np.meshgrid(q, q, indexing="ij")
    vals = sign * catalog.w_values(model, p, Q1, Q2)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    start = np.array([Q1[i, j], Q2[i, j]])
    qx, ok, msg = _newton_stationary(model, p, start, sign)
    if not ok or sign * catalog.eval_w(model, p, (qx[0], qx[1])) > vals[i, j] + 1e-12:
        # fall back on the grid point; flagged inadmissible by the caller
        return TorusPoint(*start), False, msg
    return TorusPoint(qx[0], qx[1]), True, msg


@lru_cache(maxsize=256)
def _band_edges(model, p):
    q0, ok_min, msg_min = _extremum(model, p, +1.0)
    qmax, ok_max, msg_max = _extremum(model, p, -1.0)
    H = catalog.derivatives_w(model, p, q0).hessian
    eig = np.linalg.eigvalsh(H)
    admissible = bool(ok_min and eig[0] > 0 and eig[1] / eig[0] < ADMISSIBLE_CONDITION)
    diag = f"min: {msg_min}; max: {msg_max}; hessian eigenvalues {eig[0]:.3e}, {eig[1]:.3e}"
    if not admissible:
        diag = "inadmissible (degenerate or non-isolated minimum); " + diag
    return BandInfo(
        m=catalog.eval_w(model, p, q0),
        M=catalog.eval_w(model, p, qmax),
        q0=q0,
        hessian=H,
        admissible=admissible,
        q_max=qmax,
        diagnostics=diag,
    )


def band_edges(model, p) -> BandInfo:
    """Minimum ``m(p)`` and maximum ``M(p)`` of ``q -> w(p, q)``.

    A 128 x 128 grid scan seeds Newton's method on the gradient.  The
    momentum is admissible when the Hessian at the minimizer is positive
    definite with condition number below ``1e6``.
    """
    p = TorusPoint.of(p)
    return _band_edges(model, p)


def require_admissible(model, p) -> BandInfo:
    band = band_edges(model, p)
    if not band.admissible:
        raise InadmissibleMomentumError(band.diagnostics)
    return band


# --------------------------------------------------------------------------
# vanishing gates
# --------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _phi_scale(model):
    return max(1.0, catalog.phi_sup_norm(model))


def vanishing_order(model, p) -> tuple:
    """Order of vanishing of ``phi`` at ``q0(p)`` as (order, value, gradient).

    Order is 0 (``phi(q0) != 0``), 1 (``phi(q0) = 0``, gradient nonzero) or
    2 (value and gradient vanish).  The numeric gates are checked against
    the catalog metadata; a disagreement raises :class:`InconsistencyError`.
    """
    band = require_admissible(model, p)
    d = catalog.eval_phi(model, band.q0)
    gate = PHI_GATE * _phi_scale(model)
    if abs(d.value) >= gate:
        order = 0
    elif np.max(np.abs(d.gradient)) >= gate:
        order = 1
    else:
        order = 2
    nominal = min(model.phi.vanishing_order(band.q0.as_array()), 2)
    if nominal != order:
        raise InconsistencyError(
            f"numeric vanishing order {order} at q0={tuple(band.q0)} disagrees with catalog order {nominal}"
        )
    return order, d.value, d.gradient


# --------------------------------------------------------------------------
# Birman-Schwinger function and determinant
# --------------------------------------------------------------------------

def omega(model, p, z: float, rel_tol: float = DEFAULT_REL_TOL) -> QuadratureEstimate:
    """``Omega(p; z) = int phi^2 / (w_p - z) dq`` for real ``z`` outside the band.

    ``z == m(p)`` is allowed (threshold mode) and raises
    :class:`DivergenceError` when the integral diverges.
    """
    p = TorusPoint.of(p)
    band = require_admissible(model, p)
    return _omega_eps(model, p, band, band.m - z, rel_tol, z)


def _omega_eps(model, p, band, eps, rel_tol, z=None):
    if eps >= 0:
        if 0 < eps < EPS_FLOOR:
            raise DomainError(f"m(p) - z = {eps:.3e} is below the eps floor {EPS_FLOOR:.0e}")
        return integrate_near_threshold(model, p, band, PhiSquared(model), eps, rel_tol)
    if z is None:
        z = band.m - eps
    if z <= band.M:
        raise DomainError(f"z = {z!r} lies inside the essential spectrum [{band.m}, {band.M}]")
    f = lambda q1, q2: PhiSquared(model)(q1, q2) / (catalog.w_values(model, p, q1, q2) - z)
    return integrate_auto(f, max(rel_tol, 1e-14))


def delta(model, mu: float, p, z: float, rel_tol: float = DEFAULT_REL_TOL) -> float:
    """Fredholm determinant ``1 - mu * Omega(p; z)``."""
    if mu <= 0:
        raise DomainError("mu must be positive")
    return 1.0 - mu * omega(model, p, z, rel_tol).value


def delta_at_gap(model, mu, p, gap, rel_tol=DEFAULT_REL_TOL) -> float:
    """``Delta(mu, p; m(p) - gap)`` without forming ``z`` explicitly."""
    p = TorusPoint.of(p)
    band = require_admissible(model, p)
    return 1.0 - mu * _omega_eps(model, p, band, gap, rel_tol).value


@lru_cache(maxsize=256)
def _coupling_threshold(model, p, rel_tol):
    order, _, _ = vanishing_order(model, p)
    if order == 0:
        return 0.0
    band = require_admissible(model, p)
    try:
        est = integrate_near_threshold(model, p, band, PhiSquared(model), 0.0, rel_tol)
    except DivergenceError as exc:
        raise InconsistencyError(
            "threshold integral diverges although phi vanishes at the band minimum"
        ) from exc
    return 1.0 / est.value


def coupling_threshold(model, p, rel_tol: float = DEFAULT_REL_TOL) -> float:
    """``mu(p)``: zero if ``phi(q0) != 0``, else ``1 / Omega(p; m(p))``."""
    return _coupling_threshold(model, TorusPoint.of(p), float(rel_tol))


# --------------------------------------------------------------------------
# bound state
# --------------------------------------------------------------------------

def eigenvalue(model, mu: float, p, rel_tol: float = DEFAULT_REL_TOL) -> Optional[EigenvalueResult]:
    """The unique eigenvalue of ``H_mu(p)`` below ``m(p)``, or ``None``.

    ``None`` is returned when ``mu <= mu(p)``.  Otherwise the root of
    ``Delta`` is bracketed by stepping ``m - z`` up by decades from ``1e-8``
    and located with Brent's method in ``log(m - z)``, where ``Delta`` is
    smooth and nearly linear.

    Raises
    ------
    ResolutionError
        If ``mu > mu(p)`` but the bound state lies within the eps floor of
        the threshold.
    """
    if mu <= 0:
        raise DomainError("mu must be positive")
    p = TorusPoint.of(p)
    band = require_admissible(model, p)
    mu_c = coupling_threshold(model, p, rel_tol)
    if mu <= mu_c:
        return None

    calls = 0

    def det(log_gap):
        nonlocal calls
        calls += 1
        # exp(log(EPS_FLOOR)) can round just below the floor
        return 1.0 - mu * _omega_eps(model, p, band, max(math.exp(log_gap), EPS_FLOOR), rel_tol).value

    hi = math.log(THRESHOLD_OFFSET)
    d_hi = det(hi)
    if d_hi >= 0:
        hi = math.log(EPS_FLOOR)
        d_hi = det(hi)
        if d_hi >= 0:
            raise ResolutionError(
                f"mu={mu!r} exceeds mu(p)={mu_c!r} but m(p) - E(mu, p) < {EPS_FLOOR:.0e}"
            )
    lo = hi
    d_lo = d_hi
    while d_lo < 0:
        lo += math.log(10.0)
        if lo > math.log(1e12):
            return None
        d_lo = det(lo)
    # Delta decreases in z, hence increases in log(m - z)
    root, info = optimize.brentq(det, hi, lo, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200,
                                 full_output=True)
    gap = math.exp(root)
    residual = abs(det(root))
    x0, x1 = root, root * (1 + 1e-12)
    f0, f1 = det(x0), det(x1)
    polish = 0
    while residual >= RESIDUAL_TOL and polish < 20 and f1 != f0:
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        x0, f0, x1, f1 = x1, f1, x2, det(x2)
        polish += 1
        if abs(f1) < residual:
            root, residual = x1, abs(f1)
            gap = math.exp(root)
    return EigenvalueResult(
        energy=band.m - gap,
        gap=gap,
        bracket=(band.m - math.exp(lo), band.m - math.exp(hi)),
        determinant_residual=residual,
        iterations=calls,
    )


def grid_oracle_eigenvalue(model, mu: float, p, n_per_axis: int) -> Optional[float]:
    """Lowest root of the finite-grid secular equation.

    Solves ``sum_j phi(q_j)^2 h^2 / (w_p(q_j) - lam) = 1/mu`` for
    ``lam < min_j w_p(q_j)`` on the ``n x n`` equispaced grid; this is the
    exact bound state of the rank-one problem restricted to the grid.
    Returns ``None`` if there is no root below the grid minimum.
    """
    if mu <= 0:
        raise DomainError("mu must be positive")
    n = int(n_per_axis)
    if n < 4 or n % 2:
        raise ValueError("n_per_axis must be even and >= 4")
    p = TorusPoint.of(p)
    q, area = torus_grid(n)
    Q1, Q2 = np.meshgrid(q, q, indexing="ij")
    w = catalog.w_values(model, p, Q1, Q2).ravel()
    a = (catalog.phi_values(model, Q1, Q2) ** 2).ravel() * area
    w_min = float(w.min())
    W = w - w_min
    target = 1.0 / mu
    at_min = W == 0.0
    if not np.any(a[at_min] > 0):
        with np.errstate(divide="ignore"):
            limit = float(np.sum(a[~at_min] / W[~at_min]))
        if limit <= target:
            return None

    def secular(log_gap):
        return float(np.sum(a / (W + math.exp(log_gap)))) - target

    hi = math.log(1e-300)
    while secular(hi) <= 0:
        hi += 1.0
    lo = hi
    while secular(lo) > 0:
        lo += math.log(10.0)
    root = optimize.brentq(secular, hi, lo, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=300)
    return w_min - math.exp(root)


def grid_oracle_extrapolated(model, mu, p, n_per_axis=1024):
    """Oracle energies at ``n`` and ``2n``; returns ``(energy, |difference|)``.

    The grid sum is a rectangle rule for an analytic periodic integrand, so it
    converges geometrically in ``n`` and the finer level is the extrapolant.
    """
    e1 = grid_oracle_eigenvalue(model, mu, p, n_per_axis)
    e2 = grid_oracle_eigenvalue(model, mu, p, 2 * n_per_axis)
    if e1 is None or e2 is None:
        return None, None
    return e2, abs(e2 - e1)


def eigenfunction_residual(model, mu: float, p, E: float) -> float:
    """``|1 - mu int phi^2 / (w_p - E)|`` recomputed at tightened tolerance.

    After contracting the eigen-equation for ``f = mu phi / (w_p - E)`` with
    ``phi`` this is the residual of ``H_mu(p) f = E f``.
    """
    p = TorusPoint.of(p)
    band = require_admissible(model, p)
    est = _omega_eps(model, p, band, band.m - E, 1e-12)
    return abs(1.0 - mu * est.value)


# --------------------------------------------------------------------------
# threshold solution
# --------------------------------------------------------------------------

def _decay_rate(ks, values):
    """Least-squares decay rate of ``log2(values)`` per octave."""
    v = np.maximum(np.asarray(values, dtype=float), 1e-300)
    slope = np.polyfit(np.asarray(ks, dtype=float), np.log2(v), 1)[0]
    return -float(slope)


def _tail_kind(rate):
    if rate > 0.5:
        return "convergent"
    if abs(rate) <= 0.25:
        return "log-divergent"
    if rate < -0.5:
        return "power-divergent"
    return "undetermined"


def threshold_norm_profile(model, p, k_max: int = 20, n_angle: int = 256) -> NormProfile:
    """Octave masses of ``f = phi / (w_p - m(p))`` around the band minimizer.

    Annuli ``2^-(k+1) <= |q - q0| <= 2^-k`` for ``k = 1..k_max``.  The decay
    rate of ``log2`` of the octave masses over ``k >= 4`` decides the tail:
    rate > 0.5 convergent, |rate| <= 0.25 log-divergent, rate < -0.5
    power-divergent.  The verdict is ``L2`` if the squared masses converge,
    ``L1_not_L2`` if only the ``L^1`` masses converge, else ``not_L1``.
    """
    p = TorusPoint.of(p)
    band = require_admissible(model, p)
    order, _, _ = vanishing_order(model, p)
    if order == 0:
        raise DomainError("phi(q0(p)) != 0: the threshold solution is not integrable (case I)")
    q0 = band.q0
    theta = 2 * math.pi * (np.arange(n_angle) + 0.5) / n_angle
    c, s = np.cos(theta), np.sin(theta)
    x, wts = np.polynomial.legendre.leggauss(16)
    l1, l2 = [], []
    ks = list(range(1, k_max + 1))
    for k in ks:
        a, b = 2.0 ** -(k + 1), 2.0 ** -k
        r = 0.5 * (b - a) * x + 0.5 * (b + a)
        wr = 0.5 * (b - a) * wts
        d1 = r[:, None] * c
        d2 = r[:, None] * s
        W = catalog.w_excess(model, p, q0, d1, d2)
        f = catalog.phi_values(model, q0.q1 + d1, q0.q2 + d2) / W
        dth = 2 * math.pi / n_angle
        l1.append(float(np.sum(np.abs(f).sum(axis=1) * dth * r * wr)))
        l2.append(float(np.sum((f * f).sum(axis=1) * dth * r * wr)))
    fit_ks = [k for k in ks if k >= 4]
    r1 = _decay_rate(fit_ks, l1[3:])
    r2 = _decay_rate(fit_ks, l2[3:])
    t1, t2 = _tail_kind(r1), _tail_kind(r2)
    if t2 == "convergent":
        verdict = "L2"
    elif t1 == "convergent":
        verdict = "L1_not_L2"
    else:
        verdict = "not_L1"
    return NormProfile(l1, l2, verdict, r1, r2, t1, t2, ks)


def threshold_solution(model, p, rel_tol: float = DEFAULT_REL_TOL):
    """Threshold solution ``f = C mu(p) phi / (w_p - m(p))`` and its constant ``C``.

    ``C`` normalizes ``f`` in ``L^2`` when the solution is square integrable
    (threshold eigenvalue); for a threshold resonance ``C = 1``.
    """
    p = TorusPoint.of(p)
    band = require_admissible(model, p)
    order, _, _ = vanishing_order(model, p)
    if order == 0:
        raise DomainError("no threshold solution when phi(q0(p)) != 0")
    mu_c = coupling_threshold(model, p, rel_tol)
    if order == 2:
        sq = integrate_near_threshold(model, p, band, PhiSquared(model), 0.0, rel_tol, power=2).value
        C = 1.0 / (mu_c * math.sqrt(sq))
    else:
        C = 1.0

    def f(q1, q2):
        w = catalog.w_values(model, p, q1, q2)
        return C * mu_c * catalog.phi_values(model, q1, q2) / (w - band.m)

    return f, C
