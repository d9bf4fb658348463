"""Quadrature on the torus (-pi, pi]^2 with plain Lebesgue measure ``dq``.

Two regimes are covered:

* analytic periodic integrands, for which the equispaced tensor rule
  converges geometrically (:func:`integrate_periodic`,
  :func:`integrate_auto`);
* integrands ``numerator / (w_p - m + eps)**power`` that become singular at
  the band minimizer ``q0`` as ``eps -> 0`` (:func:`integrate_near_threshold`).

The near-threshold scheme splits the torus with an analytic partition of
unity ``chi(q) = exp(-(rho^2 / s^2)^4)``, ``rho^2 = 4 sin^2(d1/2) + 4 sin^2(d2/2)``
centered at ``q0``.  The outer part ``(1 - chi) * integrand`` is integrated
with the equispaced rule; the inner part ``chi * integrand`` in polar
coordinates around ``q0`` with Gauss-Legendre panels that cluster
geometrically at ``r = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import catalog
from .errors import DivergenceError, NonConvergenceError, NumericError

TWO_PI = 2.0 * math.pi

INNER_RADIUS = 0.5          # gamma: support radius of the inner zone
_PARTITION_WIDTH = INNER_RADIUS / 1.6
EPS_FLOOR = 1e-10
MAX_N_PER_AXIS = 8192
_ROW_BLOCK = 256

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class QuadratureEstimate:
    """An integral value with an absolute error estimate."""

    value: float
    error_estimate: float
    nodes_used: int

    def to_dict(self):
        return {"value": self.value, "error_estimate": self.error_estimate, "nodes_used": self.nodes_used}


def torus_grid(n):
    """Equispaced nodes ``-pi + 2 pi j / n`` and the cell area ``h**2``."""
    h = TWO_PI / n
    return -math.pi + h * np.arange(n), h * h


def integrate_periodic(f, n_per_axis: int) -> float:
    """Tensor-product rectangle rule for ``f(q1, q2)`` over the torus.

    ``f`` must accept broadcastable coordinate arrays.  Rows are evaluated in
    fixed-size blocks, and block sums are accumulated in a fixed order, so
    the result does not depend on memory layout.
    """
    n = int(n_per_axis)
    if n < 4 or n % 2:
        raise ValueError(f"n_per_axis must be an even integer >= 4, got {n_per_axis!r}")
    q, area = torus_grid(n)
    partial = []
    for start in range(0, n, _ROW_BLOCK):
        rows = q[start:start + _ROW_BLOCK, None]
        vals = np.asarray(f(rows, q[None, :]), dtype=float)
        vals = np.broadcast_to(vals, (rows.shape[0], n))
        if not np.all(np.isfinite(vals)):
            i, j = np.argwhere(~np.isfinite(vals))[0]
            node = (float(rows[i, 0]), float(q[j]))
            raise NumericError(f"non-finite integrand sample at q={node}", node=node)
        partial.append(vals.sum())
    return float(np.sum(partial) * area)


def integrate_auto(f, rel_tol: float) -> QuadratureEstimate:
    """Double the grid from 32 per axis until two levels agree to ``rel_tol``."""
    if not 0.0 < rel_tol < 1e-2:
        raise ValueError("rel_tol must lie in (0, 1e-2)")
    n = 32
    try:
        prev = integrate_periodic(f, n)
    except NumericError as exc:
        raise NonConvergenceError(f"integrand is singular on the grid: {exc}") from exc
    last = None
    while n < MAX_N_PER_AXIS:
        n *= 2
        try:
            cur = integrate_periodic(f, n)
        except NumericError as exc:
            raise NonConvergenceError(f"integrand is singular on the grid: {exc}", last) from exc
        err = abs(cur - prev)
        last = QuadratureEstimate(cur, err, n)
        if err <= rel_tol * abs(cur):
            return last
        prev = cur
    raise NonConvergenceError(f"no convergence to rel_tol={rel_tol} up to n_per_axis={n}", last)


def radial_log_integral(n: int, eps: float, delta: float) -> float:
    """``I_n = int_0^delta r^(2n+1) / (r^2 + eps) dr`` in closed form.

    Uses ``I_0 = log(1 + delta^2/eps) / 2`` and
    ``I_n = delta^(2n) / (2n) - eps * I_(n-1)``.
    """
    if n < 0 or eps <= 0 or delta <= 0:
        raise ValueError("need n >= 0, eps > 0, delta > 0")
    val = 0.5 * math.log1p(delta * delta / eps)
    for k in range(1, n + 1):
        val = delta ** (2 * k) / (2 * k) - eps * val
    return val


# --------------------------------------------------------------------------
# near-threshold integration
# --------------------------------------------------------------------------

def partition(d1, d2):
    """Analytic periodic bump ``chi`` centered at displacement zero."""
    rho2 = 4.0 * np.sin(0.5 * d1) ** 2 + 4.0 * np.sin(0.5 * d2) ** 2
    return np.exp(-((rho2 / _PARTITION_WIDTH**2) ** 4))


@dataclass(frozen=True)
class PhiSquared:
    """Numerator ``phi(q)^2`` for a model; hashable so node data can be cached."""

    model: catalog.ModelSpec

    def __call__(self, q1, q2):
        v = catalog.phi_values(self.model, q1, q2)
        return v * v


def _gl_panels(edges, order_scale=1):
    """Gauss-Legendre nodes/weights on consecutive panels given by ``edges``."""
    if order_scale == 1:
        x, wts = _GL_NODES, _GL_WEIGHTS
    else:
        x, wts = np.polynomial.legendre.leggauss(16 * order_scale)
    a = edges[:-1, None]
    b = edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (b + a)
    weights = 0.5 * (b - a) * wts[None, :]
    return nodes, weights


@dataclass(frozen=True)
class _Level:
    n_outer: int
    n_angle: int
    n_panels: int


def _level(k):
    return _Level(n_outer=256 * 2**k, n_angle=64 * 2**k, n_panels=64 * 2**k)


class _NearThreshold:
    """Cached node data for one (model, p, q0, numerator, power) combination."""

    def __init__(self, model, p, q0, m, numerator, power):
        self.model = model
        self.p = p
        self.q0 = q0
        self.m = m
        self.numerator = numerator
        self.power = power
        self._outer = {}

    def outer_arrays(self, n):
        if n not in self._outer:
            q, area = torus_grid(n)
            Q1, Q2 = np.meshgrid(q, q, indexing="ij")
            d1 = catalog.wrap_angle(Q1 - self.q0[0])
            d2 = catalog.wrap_angle(Q2 - self.q0[1])
            W = catalog.w_excess(self.model, self.p, self.q0, d1, d2)
            A = np.asarray(self.numerator(Q1, Q2), dtype=float) * (1.0 - partition(d1, d2)) * area
            mask = A != 0.0
            self._outer[n] = (W[mask], A[mask])
        return self._outer[n]

    def outer(self, eps, n):
        W, A = self.outer_arrays(n)
        denom = (W + eps) ** self.power
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = A / denom
        if not np.all(np.isfinite(terms)):
            raise NumericError("outer-zone integrand is non-finite; the minimizer is not isolated")
        return float(terms.sum()), W.size

    def _inner_integrand(self, r, n_angle):
        theta = TWO_PI * (np.arange(n_angle) + 0.5) / n_angle
        c, s = np.cos(theta), np.sin(theta)
        d1 = r[..., None] * c
        d2 = r[..., None] * s
        q1 = self.q0[0] + d1
        q2 = self.q0[1] + d2
        W = catalog.w_excess(self.model, self.p, self.q0, d1, d2)
        num = np.asarray(self.numerator(q1, q2), dtype=float) * partition(d1, d2)
        return W, num, TWO_PI / n_angle

    def inner(self, eps, level):
        """Polar integral of ``chi * integrand`` over ``r < INNER_RADIUS``."""
        if eps > 0:
            r_min = min(math.sqrt(eps) / 8.0, INNER_RADIUS / 4)
            edges = np.concatenate(([0.0], np.geomspace(r_min, INNER_RADIUS, level.n_panels + 1)))
        else:
            raise ValueError("use inner_octaves for eps = 0")
        r, wr = _gl_panels(edges)
        W, num, dth = self._inner_integrand(r, level.n_angle)
        vals = num / (W + eps) ** self.power
        total = np.sum(vals.sum(axis=-1) * dth * r * wr)
        return float(total), r.size * level.n_angle

    def inner_octaves(self, level, k_max=40):
        """Per-octave contributions on annuli ``[g 2^-(k+1), g 2^-k]`` at eps = 0."""
        edges = INNER_RADIUS * 2.0 ** -np.arange(k_max + 1, dtype=float)
        edges = edges[::-1]
        sub = max(1, level.n_panels // 64)
        fine = np.concatenate([np.geomspace(a, b, sub + 1)[:-1] for a, b in zip(edges[:-1], edges[1:])] + [edges[-1:]])
        r, wr = _gl_panels(fine)
        W, num, dth = self._inner_integrand(r, level.n_angle)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(num == 0.0, 0.0, num / W**self.power)
        per_panel = (vals.sum(axis=-1) * dth * r * wr).sum(axis=-1)
        octaves = per_panel.reshape(k_max, sub).sum(axis=-1)[::-1]  # k = 0 is the outermost annulus
        return octaves, r.size * level.n_angle


@lru_cache(maxsize=64)
def _integrator(model, p, q0, m, numerator, power):
    return _NearThreshold(model, p, q0, m, numerator, power)


def _check_octave_decay(octaves, scale):
    """Raise DivergenceError unless the innermost octaves decay geometrically."""
    tail = np.abs(octaves[-6:])
    if np.all(tail <= 1e-300 + 1e-17 * scale):
        return 0.0
    ratios = tail[1:] / np.maximum(tail[:-1], 1e-300)
    if np.median(ratios) > 0.75:
        data = [float(x) for x in octaves]
        raise DivergenceError(
            f"threshold integral diverges: innermost octave ratio {float(np.median(ratios)):.3f}", octaves=data
        )
    rho = float(np.median(ratios))
    return float(octaves[-1] * rho / (1.0 - rho))


def integrate_near_threshold(model, p, band, numerator, eps: float, rel_tol: float = 1e-10, power: int = 1,
                             max_level: int = 3) -> QuadratureEstimate:
    """``int numerator(q) / (w_p(q) - m(p) + eps)**power dq`` over the torus.

    Parameters
    ----------
    model : ModelSpec
    p : TorusPoint or pair
    band : BandInfo
        Supplies the minimizer ``q0`` and band bottom ``m``.
    numerator : callable
        Vectorized ``numerator(q1, q2)``; for caching it should be a hashable,
        long-lived object such as :class:`PhiSquared`.
    eps : float
        ``m(p) - z >= 0``.  At ``eps == 0`` integrability is checked a
        posteriori from the decay of per-octave contributions.
    rel_tol : float
        Two successive refinement levels must agree to this relative accuracy.
    power : int
        Power of the denominator (1 for the resolvent kernel, 2 for its
        derivative).

    Raises
    ------
    DivergenceError
        When ``eps == 0`` and the integral diverges.
    NonConvergenceError
        When ``max_level`` refinements do not reach ``rel_tol``.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    p = catalog.TorusPoint.of(p)
    q0 = catalog.TorusPoint.of(band.q0)
    integ = _integrator(model, (p.q1, p.q2), (q0.q1, q0.q2), float(band.m), numerator, int(power))

    def evaluate(k):
        lv = _level(k)
        out, n_out = integ.outer(eps, lv.n_outer)
        if eps > 0:
            inn, n_in = integ.inner(eps, lv)
        else:
            octaves, n_in = integ.inner_octaves(lv)
            scale = abs(out) + float(np.sum(np.abs(octaves)))
            tail = _check_octave_decay(octaves, scale)
            inn = float(np.sum(octaves)) + tail
        return out + inn, n_out + n_in

    prev, _ = evaluate(0)
    for k in range(1, max_level + 1):
        cur, nodes = evaluate(k)
        err = abs(cur - prev)
        if err <= rel_tol * abs(cur) or err <= 1e-15 * abs(cur):
            return QuadratureEstimate(cur, err, nodes)
        prev = cur
    raise NonConvergenceError(
        f"near-threshold quadrature did not reach rel_tol={rel_tol} (eps={eps})",
        QuadratureEstimate(cur, err, nodes),
    )
