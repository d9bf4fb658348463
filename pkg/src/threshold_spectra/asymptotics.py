"""Coupling-constant sweeps and regression checks of the eigenvalue asymptotics.

For each threshold case the gap ``m(p) - E(mu, p)`` has a known leading law
as ``mu`` decreases to ``mu(p)``:

case I    gap ~ a * exp(1 / (alpha0 * mu))            (mu(p) = 0)
case II   gap ~ mu_hat / (alpha1_hat mu(p)^2 log(1/mu_hat))
case III  gap ~ mu_hat / (-c1_hat mu(p)^2)

with ``mu_hat = mu - mu(p)``.  The fits below extract the leading
coefficient from a sweep and compare it with the value predicted from the
threshold coefficients.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .catalog import TorusPoint
from .errors import DomainError, PoorFitError, ThresholdSpectraError
from .threshold import ThresholdReport

CSV_COLUMNS = ("mu", "mu_hat", "energy", "gap")


@dataclass(frozen=True)
class SweepRow:
    mu: float
    mu_hat: float
    energy: float
    gap: float


@dataclass
class SweepTable:
    """Bound-state energies along a coupling sweep, sorted by ``mu``."""

    rows: list
    model: object = None
    p: tuple = (0.0, 0.0)
    mu_threshold: float = 0.0
    rel_tol: float = spectral.DEFAULT_REL_TOL
    errors: list = field(default_factory=list)

    @property
    def mu(self):
        return np.array([r.mu for r in self.rows])

    @property
    def mu_hat(self):
        return np.array([r.mu_hat for r in self.rows])

    @property
    def gap(self):
        return np.array([r.gap for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([repr_float(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self):
        return {
            "columns": list(CSV_COLUMNS),
            "rows": [[r.mu, r.mu_hat, r.energy, r.gap] for r in self.rows],
            "mu_threshold": self.mu_threshold,
            "rel_tol": self.rel_tol,
            "errors": [list(e) for e in self.errors],
        }


def repr_float(x) -> str:
    """Locale-independent 17-significant-digit rendering."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class FitResult:
    case: str
    leading_coefficient: float
    reference_value: float
    rel_dev: float
    r_squared: float
    correction_order_ok: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "case": self.case,
            "leading_coefficient": self.leading_coefficient,
            "reference_value": self.reference_value,
            "rel_dev": self.rel_dev,
            "r_squared": self.r_squared,
            "correction_order_ok": self.correction_order_ok,
            "details": dict(self.details),
        }


def default_mu_values(case: str, mu_threshold: float, n: int = 7) -> np.ndarray:
    """Sweep grids that stay above the quadrature eps floor."""
    if case == "I":
        return np.geomspace(0.015, 0.08, n)
    if case == "II":
        return mu_threshold + np.geomspace(1e-6, 1e-3, n)
    if case == "III":
        return mu_threshold + np.geomspace(1e-4, 1e-2, n)
    raise ValueError(f"unknown case {case!r}")


def sweep_eigenvalues(model, p, mu_values, rel_tol: float = spectral.DEFAULT_REL_TOL, jobs: int = 1) -> SweepTable:
    """Solve for ``E(mu, p)`` at each ``mu``; failed solves are kept as errors."""
    p = TorusPoint.of(p)
    mu_c = spectral.coupling_threshold(model, p, rel_tol)
    mu_values = sorted(float(m) for m in mu_values)
    bad = [m for m in mu_values if m <= mu_c]
    if bad:
        raise DomainError(f"mu values at or below mu(p)={mu_c!r}: {bad}")

    def solve(mu):
        try:
            return spectral.eigenvalue(model, mu, p, rel_tol), None
        except ThresholdSpectraError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if jobs > 1 and len(mu_values) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(solve, mu_values))
    else:
        results = [solve(mu) for mu in mu_values]

    rows, errors = [], []
    for mu, (res, err) in zip(mu_values, results):
        if res is None:
            errors.append((mu, err or "no eigenvalue found"))
            continue
        rows.append(SweepRow(mu, mu - mu_c, res.energy, res.gap))
    return SweepTable(rows, model, (p.q1, p.q2), mu_c, rel_tol, errors)


def _r_squared(y, fitted):
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def _rel_dev(value, reference):
    return abs(value - reference) / abs(reference)


def fit_case_i(table: SweepTable, report: ThresholdReport) -> FitResult:
    """Slope of ``log(gap)`` against ``1/mu``; predicted to be ``1/alpha0``."""
    if len(table.rows) < 3:
        raise PoorFitError("case I fit needs at least 3 rows")
    x = 1.0 / table.mu
    y = np.log(table.gap)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    r2 = _r_squared(y, fitted)
    if r2 < 0.999:
        raise PoorFitError(f"case I fit r^2={r2:.6f} < 0.999", residuals=(y - fitted).tolist())
    reference = 1.0 / report.alpha0
    ratios = order_ratios_case_i(table, slope, intercept)
    return FitResult(
        "I", float(slope), reference, _rel_dev(slope, reference), r2, bool(np.all(ratios <= 10.0)),
        {"intercept": float(intercept), "order_ratios": ratios.tolist()},
    )


def order_ratios_case_i(table, slope, intercept):
    """``|gap - a sigma| / (a mu^2 tau)`` with ``tau = sigma / mu``: relative deviation over ``mu``."""
    lead = np.exp(intercept + slope / table.mu)
    return np.abs(table.gap / lead - 1.0) / table.mu


def _self_consistent_limit(mu_hat, gap):
    """Limit of ``gap log(1/gap) / mu_hat`` by two-level Richardson.

    At leading order ``gap (log(1/gap) + k) = R mu_hat``, so the reciprocal
    ``mu_hat / (gap log(1/gap))`` is linear in ``s = 1 / log(1/gap)`` with
    intercept ``1/R``.  The two rows nearest the threshold are used.
    """
    L = np.log(1.0 / gap)
    inv = mu_hat / (gap * L)
    s = 1.0 / L
    i, j = np.argsort(mu_hat)[:2]
    intercept = (s[j] * inv[i] - s[i] * inv[j]) / (s[j] - s[i])
    return 1.0 / intercept, inv, s


def fit_case_ii(table: SweepTable, report: ThresholdReport) -> FitResult:
    """Limit of ``gap log(1/mu_hat) / mu_hat``; predicted ``1/(alpha1_hat mu(p)^2)``."""
    if len(table.rows) < 2:
        raise PoorFitError("case II extrapolation needs at least 2 rows")
    mu_hat, gap = table.mu_hat, table.gap
    y = gap * np.log(1.0 / mu_hat) / mu_hat
    limit, inv, s = _self_consistent_limit(mu_hat, gap)
    order = np.argsort(mu_hat)
    d = np.diff(inv[order])
    if np.any(d < -1e-9 * np.max(np.abs(inv))):
        raise PoorFitError("mu_hat / (gap log(1/gap)) is not monotone along the sweep", residuals=inv.tolist())
    A = np.column_stack([np.ones_like(s), s])
    coef, *_ = np.linalg.lstsq(A, inv, rcond=None)
    r2 = _r_squared(inv, A @ coef)
    reference = 1.0 / (report.alpha1_hat * report.mu_threshold**2)
    ratios = order_ratios_case_ii(table, limit)
    # plain two-level Richardson in 1/log(1/mu_hat), kept as a diagnostic
    t = 1.0 / np.log(1.0 / mu_hat)
    i, j = order[:2]
    naive = (t[j] * y[i] - t[i] * y[j]) / (t[j] - t[i])
    return FitResult(
        "II", float(limit), reference, _rel_dev(limit, reference), r2, bool(np.all(ratios <= 3.0)),
        {
            "raw_last_point": float(y[order[0]]),
            "richardson_log_mu_hat": float(naive),
            "order_ratios": ratios.tolist(),
        },
    )


def order_ratios_case_ii(table, limit):
    """``|y - Y| / (Y omega)`` with ``omega = log log(1/mu_hat) / log(1/mu_hat)``."""
    L = np.log(1.0 / table.mu_hat)
    y = table.gap * L / table.mu_hat
    omega = np.log(L) / L
    return np.abs(y / limit - 1.0) / omega


def fit_case_iii(table: SweepTable, report: ThresholdReport) -> FitResult:
    """``gap = a mu_hat + b mu_hat^2 log(mu_hat) + c mu_hat^2``; predicted ``a = slope_a``."""
    if len(table.rows) < 4:
        raise PoorFitError("case III fit needs at least 4 rows")
    mh, gap = table.mu_hat, table.gap
    A = np.column_stack([mh, mh**2 * np.log(mh), mh**2])
    scale = np.max(np.abs(A), axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, gap, rcond=None)
    a, b, c = coef / scale
    full = A @ (coef / scale)
    r2 = _r_squared(gap, full)
    if r2 < 0.9999:
        raise PoorFitError(f"case III fit r^2={r2:.8f} < 0.9999", residuals=(gap - full).tolist())
    a_lin = float(mh @ gap / (mh @ mh))
    res_lin = float(np.linalg.norm(gap - a_lin * mh))
    res_full = float(np.linalg.norm(gap - full))
    improvement = res_lin / res_full if res_full > 0 else math.inf
    ok = res_lin <= 1e-14 * float(np.linalg.norm(gap)) or improvement >= 10.0
    return FitResult(
        "III", float(a), report.slope_a, _rel_dev(a, report.slope_a), r2, bool(ok),
        {"b": float(b), "c": float(c), "linear_only_a": a_lin, "residual_improvement": improvement},
    )


def order_ratios_case_iii(table, slope_a):
    """``|gap - a mu_hat| / (a mu_hat^2 |log mu_hat|)``."""
    mh = table.mu_hat
    return np.abs(table.gap - slope_a * mh) / (slope_a * mh**2 * np.abs(np.log(mh)))


FITTERS = {"I": fit_case_i, "II": fit_case_ii, "III": fit_case_iii}


def fit_case(table: SweepTable, report: ThresholdReport) -> FitResult:
    return FITTERS[report.case.tag](table, report)
