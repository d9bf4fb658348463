"""Dispersion relations and form factors on the two-dimensional torus.

Every model consumed by the rest of the package is a :class:`ModelSpec`,
i.e. a pair (dispersion tag, form-factor tag) plus real parameters.  The
families below are analytic and come with exact first and second
derivatives, so that band minima, Hessians and form-factor gradients can be
computed without finite differences.  A finite-difference path is kept for
cross-checking.

Dispersions (``w(p, q) = shift + sum_j t_j [2 - cos(k_j.q) - cos(k_j.(p-q))]``):

``standard``
    ``eps(q) + eps(p - q)`` with ``eps(q) = 2 - cos q1 - cos q2``.
``anisotropic``
    hoppings ``t1``, ``t2`` along the two axes.
``triangular``
    adds a diagonal hopping ``t3`` along ``(1, 1)``; non-diagonal Hessian.

Form factors (amplitude ``a``, center ``(c1, c2)``):

``case_i``      ``a``
``case_ii``     ``a sin(q1 - c1)``
``case_ii_diag`` ``a (sin(q1 - c1) + sin(q2 - c2))``
``case_iii``    ``a sin(q1 - c1) sin(q2 - c2)``
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigurationError

TWO_PI = 2.0 * math.pi

# Finite-difference steps.  The gradient uses a small step; the Hessian needs
# a larger one because second differences amplify round-off by 1/h^2.
FD_STEP_GRADIENT = 1e-5
FD_STEP_HESSIAN = 1e-3


def wrap_angle(x):
    """Reduce an angle (scalar or array) to the interval (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    r = np.remainder(x + math.pi, TWO_PI) - math.pi
    r = np.where(r <= -math.pi, r + TWO_PI, r)
    # leave in-range angles bit-identical
    r = np.where((x > -math.pi) & (x <= math.pi), x, r)
    if np.ndim(r) == 0:
        return float(r)
    return r


@dataclass(frozen=True)
class TorusPoint:
    """A point of (-pi, pi]^2; components are canonicalized on construction."""

    q1: float
    q2: float

    def __post_init__(self):
        object.__setattr__(self, "q1", wrap_angle(float(self.q1)))
        object.__setattr__(self, "q2", wrap_angle(float(self.q2)))

    @classmethod
    def of(cls, value) -> "TorusPoint":
        if isinstance(value, TorusPoint):
            return value
        a, b = value
        return cls(a, b)

    def __add__(self, other):
        other = TorusPoint.of(other)
        return TorusPoint(self.q1 + other.q1, self.q2 + other.q2)

    def __sub__(self, other):
        other = TorusPoint.of(other)
        return TorusPoint(self.q1 - other.q1, self.q2 - other.q2)

    def __neg__(self):
        return TorusPoint(-self.q1, -self.q2)

    def __iter__(self):
        yield self.q1
        yield self.q2

    def as_array(self) -> np.ndarray:
        return np.array([self.q1, self.q2])


@dataclass(frozen=True)
class Derivatives2:
    """Value, gradient and Hessian of a scalar function of two variables."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gradient, dtype=float).reshape(2)
        h = np.asarray(self.hessian, dtype=float).reshape(2, 2)
        h = 0.5 * (h + h.T)
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "hessian", h)


# --------------------------------------------------------------------------
# Families
# --------------------------------------------------------------------------

_HOPPING_VECTORS = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


class HoppingDispersion:
    """Two-particle dispersion built from cosine hoppings along fixed vectors."""

    def __init__(self, t1=1.0, t2=1.0, t3=0.0, shift=0.0):
        self.t = np.array([t1, t2, t3], dtype=float)
        if np.any(self.t < 0) or self.t[0] <= 0 or self.t[1] <= 0:
            raise ConfigurationError("hopping amplitudes must satisfy t1, t2 > 0 and t3 >= 0")
        self.shift = float(shift)

    def value(self, p, q1, q2):
        q1 = np.asarray(q1, dtype=float)
        q2 = np.asarray(q2, dtype=float)
        out = np.full(np.broadcast(q1, q2).shape, self.shift + 2.0 * self.t.sum())
        for (k1, k2), t in zip(_HOPPING_VECTORS, self.t):
            if t == 0.0:
                continue
            kq = k1 * q1 + k2 * q2
            kp = k1 * p[0] + k2 * p[1]
            out -= t * (np.cos(kq) + np.cos(kp - kq))
        return out

    def excess(self, p, q0, d1, d2):
        """``w(p, q0 + d) - w(p, q0)`` without cancellation for small ``d``."""
        d1 = np.asarray(d1, dtype=float)
        d2 = np.asarray(d2, dtype=float)
        out = np.zeros(np.broadcast(d1, d2).shape)
        for (k1, k2), t in zip(_HOPPING_VECTORS, self.t):
            if t == 0.0:
                continue
            a = k1 * q0[0] + k2 * q0[1]
            b = k1 * p[0] + k2 * p[1] - a
            x = k1 * d1 + k2 * d2
            # cos(a) - cos(a+x) + cos(b) - cos(b-x)
            #   = 4 sin(x/2) cos((a+b)/2) sin((a-b)/2 + x/2)
            out += 4.0 * t * np.sin(0.5 * x) * np.cos(0.5 * (a + b)) * np.sin(0.5 * (a - b) + 0.5 * x)
        return out

    def derivatives(self, p, q):
        grad = np.zeros(2)
        hess = np.zeros((2, 2))
        val = self.shift + 2.0 * self.t.sum()
        for k, t in zip(_HOPPING_VECTORS, self.t):
            if t == 0.0:
                continue
            kq = k @ q
            kp = k @ p
            val -= t * (math.cos(kq) + math.cos(kp - kq))
            grad += t * (math.sin(kq) - math.sin(kp - kq)) * k
            hess += t * (math.cos(kq) + math.cos(kp - kq)) * np.outer(k, k)
        return val, grad, hess


class FormFactor:
    """Base for the analytic form factors; subclasses set ``kind``."""

    kind = ""
    nominal_case = ""

    def __init__(self, amplitude=1.0, c1=0.0, c2=0.0):
        if amplitude == 0.0:
            raise ConfigurationError("form factor amplitude must be nonzero")
        self.a = float(amplitude)
        self.c = np.array([c1, c2], dtype=float)

    def vanishing_order(self, q, tol=1e-7) -> int:
        """Catalog metadata: order of vanishing of the form factor at ``q``."""
        raise NotImplementedError


def _sine_zero(x, tol):
    return abs(math.sin(x)) < tol


class ConstantFormFactor(FormFactor):
    kind = "case_i"
    nominal_case = "I"

    def value(self, q1, q2):
        return np.full(np.broadcast(np.asarray(q1), np.asarray(q2)).shape, self.a)

    def derivatives(self, q):
        return self.a, np.zeros(2), np.zeros((2, 2))

    def vanishing_order(self, q, tol=1e-7):
        return 0


class SineFormFactor(FormFactor):
    kind = "case_ii"
    nominal_case = "II"

    def value(self, q1, q2):
        return self.a * np.sin(np.asarray(q1, dtype=float) - self.c[0]) + 0.0 * np.asarray(q2, dtype=float)

    def derivatives(self, q):
        x = q[0] - self.c[0]
        s, c = math.sin(x), math.cos(x)
        return self.a * s, np.array([self.a * c, 0.0]), np.array([[-self.a * s, 0.0], [0.0, 0.0]])

    def vanishing_order(self, q, tol=1e-7):
        return 1 if _sine_zero(q[0] - self.c[0], tol) else 0


class DiagonalSineFormFactor(FormFactor):
    kind = "case_ii_diag"
    nominal_case = "II"

    def value(self, q1, q2):
        return self.a * (np.sin(np.asarray(q1, dtype=float) - self.c[0]) + np.sin(np.asarray(q2, dtype=float) - self.c[1]))

    def derivatives(self, q):
        x, y = q[0] - self.c[0], q[1] - self.c[1]
        val = self.a * (math.sin(x) + math.sin(y))
        grad = self.a * np.array([math.cos(x), math.cos(y)])
        hess = -self.a * np.diag([math.sin(x), math.sin(y)])
        return val, grad, hess

    def vanishing_order(self, q, tol=1e-7):
        x, y = q[0] - self.c[0], q[1] - self.c[1]
        if abs(math.sin(x) + math.sin(y)) >= tol:
            return 0
        if abs(math.cos(x)) < tol and abs(math.cos(y)) < tol:
            return 2
        return 1


class SineProductFormFactor(FormFactor):
    kind = "case_iii"
    nominal_case = "III"

    def value(self, q1, q2):
        return self.a * np.sin(np.asarray(q1, dtype=float) - self.c[0]) * np.sin(np.asarray(q2, dtype=float) - self.c[1])

    def derivatives(self, q):
        x, y = q[0] - self.c[0], q[1] - self.c[1]
        sx, cx, sy, cy = math.sin(x), math.cos(x), math.sin(y), math.cos(y)
        val = self.a * sx * sy
        grad = self.a * np.array([cx * sy, sx * cy])
        hess = self.a * np.array([[-sx * sy, cx * cy], [cx * cy, -sx * sy]])
        return val, grad, hess

    def vanishing_order(self, q, tol=1e-7):
        return int(_sine_zero(q[0] - self.c[0], tol)) + int(_sine_zero(q[1] - self.c[1], tol))


DISPERSIONS = {
    "standard": (("shift",), lambda shift=0.0: HoppingDispersion(1.0, 1.0, 0.0, shift)),
    "anisotropic": (("t1", "t2", "shift"), lambda t1=1.0, t2=1.0, shift=0.0: HoppingDispersion(t1, t2, 0.0, shift)),
    "triangular": (
        ("t1", "t2", "t3", "shift"),
        lambda t1=1.0, t2=1.0, t3=0.5, shift=0.0: HoppingDispersion(t1, t2, t3, shift),
    ),
}

FORM_FACTORS = {
    cls.kind: cls
    for cls in (ConstantFormFactor, SineFormFactor, DiagonalSineFormFactor, SineProductFormFactor)
}
_FORM_FACTOR_PARAMS = ("amplitude", "c1", "c2")


def _freeze(params: Mapping[str, float] | None, allowed, what):
    params = dict(params or {})
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown {what} parameter(s) {unknown}; allowed: {list(allowed)}")
    out = []
    for key in sorted(params):
        value = params[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigurationError(f"{what} parameter {key!r} must be a finite real number, got {value!r}")
        out.append((key, float(value)))
    return tuple(out)


@dataclass(frozen=True)
class ModelSpec:
    """A catalog model: dispersion tag/parameters and form-factor tag/parameters.

    Build instances with :func:`make_model`, which validates tags and
    parameters.  Instances are hashable so expensive per-model data can be
    cached.
    """

    dispersion: str = "standard"
    form_factor: str = "case_i"
    dispersion_params: tuple = ()
    form_factor_params: tuple = ()
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if self.dispersion not in DISPERSIONS:
            raise ConfigurationError(f"unknown dispersion tag {self.dispersion!r}; known: {sorted(DISPERSIONS)}")
        if self.form_factor not in FORM_FACTORS:
            raise ConfigurationError(f"unknown form factor tag {self.form_factor!r}; known: {sorted(FORM_FACTORS)}")

    @property
    def w(self) -> HoppingDispersion:
        return _build_dispersion(self.dispersion, self.dispersion_params)

    @property
    def phi(self) -> FormFactor:
        return _build_form_factor(self.form_factor, self.form_factor_params)

    def with_form_factor(self, **params) -> "ModelSpec":
        merged = dict(self.form_factor_params)
        merged.update(params)
        return make_model(self.dispersion, self.form_factor, dict(self.dispersion_params), merged, self.label)

    def with_dispersion(self, **params) -> "ModelSpec":
        merged = dict(self.dispersion_params)
        merged.update(params)
        return make_model(self.dispersion, self.form_factor, merged, dict(self.form_factor_params), self.label)

    def to_dict(self) -> dict:
        return {
            "dispersion": {"tag": self.dispersion, **dict(self.dispersion_params)},
            "form_factor": {"tag": self.form_factor, **dict(self.form_factor_params)},
            "label": self.label,
        }


def make_model(dispersion="standard", form_factor="case_i", dispersion_params=None, form_factor_params=None, label=""):
    """Validate catalog tags/parameters and return a :class:`ModelSpec`."""
    if dispersion not in DISPERSIONS:
        raise ConfigurationError(f"unknown dispersion tag {dispersion!r}; known: {sorted(DISPERSIONS)}")
    if form_factor not in FORM_FACTORS:
        raise ConfigurationError(f"unknown form factor tag {form_factor!r}; known: {sorted(FORM_FACTORS)}")
    dp = _freeze(dispersion_params, DISPERSIONS[dispersion][0], "dispersion")
    fp = _freeze(form_factor_params, _FORM_FACTOR_PARAMS, "form factor")
    model = ModelSpec(dispersion, form_factor, dp, fp, label)
    # instantiate once so parameter-range errors surface here
    model.w
    model.phi
    return model


_DISPERSION_CACHE: dict = {}
_FORM_FACTOR_CACHE: dict = {}


def _build_dispersion(tag, params):
    key = (tag, params)
    if key not in _DISPERSION_CACHE:
        _DISPERSION_CACHE[key] = DISPERSIONS[tag][1](**dict(params))
    return _DISPERSION_CACHE[key]


def _build_form_factor(tag, params):
    key = (tag, params)
    if key not in _FORM_FACTOR_CACHE:
        _FORM_FACTOR_CACHE[key] = FORM_FACTORS[tag](**dict(params))
    return _FORM_FACTOR_CACHE[key]


# --------------------------------------------------------------------------
# Public operations
# --------------------------------------------------------------------------

def eval_w(model: ModelSpec, p, q) -> float:
    """Dispersion value ``w(p, q)``."""
    p = TorusPoint.of(p)
    q = TorusPoint.of(q)
    return float(model.w.value((p.q1, p.q2), q.q1, q.q2))


def w_values(model: ModelSpec, p, q1, q2) -> np.ndarray:
    """Vectorized ``w(p, q)`` on arrays of coordinates (no wrapping needed)."""
    p = TorusPoint.of(p)
    return model.w.value((p.q1, p.q2), q1, q2)


def w_excess(model: ModelSpec, p, q0, d1, d2) -> np.ndarray:
    """``w(p, q0 + d) - w(p, q0)`` evaluated stably for small displacements."""
    p = TorusPoint.of(p)
    q0 = TorusPoint.of(q0)
    return model.w.excess((p.q1, p.q2), (q0.q1, q0.q2), d1, d2)


def phi_values(model: ModelSpec, q1, q2) -> np.ndarray:
    """Vectorized form factor on arrays of coordinates."""
    return model.phi.value(q1, q2)


def _fd_derivatives(f, x):
    """Central differences with one Richardson pass (steps h and h/2)."""
    x = np.asarray(x, dtype=float)
    e = np.eye(2)

    def grad(h):
        return np.array([(f(x + h * e[i]) - f(x - h * e[i])) / (2 * h) for i in range(2)])

    def hess(h):
        f0 = f(x)
        out = np.empty((2, 2))
        for i in range(2):
            out[i, i] = (f(x + h * e[i]) - 2 * f0 + f(x - h * e[i])) / h**2
        out[0, 1] = out[1, 0] = (
            f(x + h * (e[0] + e[1])) - f(x + h * (e[0] - e[1])) - f(x - h * (e[0] - e[1])) + f(x - h * (e[0] + e[1]))
        ) / (4 * h**2)
        return out

    hg, hh = FD_STEP_GRADIENT, FD_STEP_HESSIAN
    g = (4 * grad(hg / 2) - grad(hg)) / 3
    H = (4 * hess(hh / 2) - hess(hh)) / 3
    return f(x), g, H


def derivatives_w(model: ModelSpec, p, q, method: str = "analytic") -> Derivatives2:
    """Gradient and Hessian of ``q -> w(p, q)``.

    ``method="fd"`` uses central finite differences with a Richardson pass
    and only calls :func:`eval_w`; it exists to cross-check the analytic path.
    """
    p = TorusPoint.of(p)
    q = TorusPoint.of(q)
    if method == "analytic":
        val, g, H = model.w.derivatives(p.as_array(), q.as_array())
        return Derivatives2(float(val), g, H)
    if method == "fd":
        val, g, H = _fd_derivatives(lambda x: eval_w(model, p, (x[0], x[1])), q.as_array())
        return Derivatives2(float(val), g, H)
    raise ConfigurationError(f"unknown derivative method {method!r}")


def eval_phi(model: ModelSpec, q, method: str = "analytic") -> Derivatives2:
    """Form factor value with gradient and Hessian at ``q``."""
    q = TorusPoint.of(q)
    if method == "analytic":
        val, g, H = model.phi.derivatives(q.as_array())
        return Derivatives2(float(val), g, H)
    if method == "fd":
        val, g, H = _fd_derivatives(lambda x: float(model.phi.value(x[0], x[1])), q.as_array())
        return Derivatives2(float(val), g, H)
    raise ConfigurationError(f"unknown derivative method {method!r}")


def phi_sup_norm(model: ModelSpec, n: int = 128) -> float:
    """Grid estimate of ``max |phi|`` used to scale the vanishing gates."""
    q = -math.pi + TWO_PI * np.arange(n) / n
    Q1, Q2 = np.meshgrid(q, q, indexing="ij")
    return float(np.max(np.abs(phi_values(model, Q1, Q2))))


def reference_models(dispersion="standard", center=(0.0, 0.0), **dispersion_params):
    """The three reference models realizing threshold cases I, II and III.

    ``center`` places the zero of the case II/III form factors; choose it at
    the band minimizer ``q0(p)`` to keep the case fixed at momentum ``p``.
    """
    c = {"c1": float(center[0]), "c2": float(center[1])}
    return {
        "I": make_model(dispersion, "case_i", dispersion_params, {}, "case I"),
        "II": make_model(dispersion, "case_ii", dispersion_params, c, "case II"),
        "III": make_model(dispersion, "case_iii", dispersion_params, c, "case III"),
    }
