"""
Test-function dictionary, base generators and martingale residuals.

The dictionary holds smooth bumps and Gaussian-weighted polynomials with
closed-form first and second derivatives, so generators are applied exactly.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from coefficients import evaluate_sigma
from errors import InvalidArgumentError
from paths import (BrownianMotion, CompoundPoisson, Ctmc, ProcessSpec,
                   RcllPath, evaluate_many, integrate_along_path)
from stats import column_stats

_LOG = logging.getLogger(__name__)

# Bump values vanish in float64 once 1/(1-u^2) exceeds this.
_BUMP_CUTOFF = 700.0

_STATE_MATCH = 1e-12


class TestFunction(ABC):
    """Element of the dictionary D, with analytic derivatives."""

    __test__ = False

    @abstractmethod
    def value(self, x):
        """f(x)."""

    @abstractmethod
    def d1(self, x):
        """f'(x)."""

    @abstractmethod
    def d2(self, x):
        """f''(x)."""

    @abstractmethod
    def to_dict(self) -> dict[str, Any]:
        """Config representation."""

    def __call__(self, x):
        return self.value(x)

    def __add__(self, other: TestFunction) -> LinearCombination:
        return LinearCombination(((1.0, self), (1.0, other)))

    def __rmul__(self, scalar: float) -> LinearCombination:
        return LinearCombination(((float(scalar), self),))

    @property
    def name(self) -> str:
        """Short label used in reports."""
        params = ",".join(f"{k}={v}" for k, v in self.to_dict().items() if k != "family")
        return f"{self.to_dict()['family']}({params})"


@dataclass(frozen=True)
class Bump(TestFunction):
    """exp(-1/(1-u^2)) for |u| < 1 with u = (x - center)/radius, else 0."""

    center: float = 0.0
    radius: float = 1.0

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise InvalidArgumentError("bump radius must be positive")

    def _parts(self, x):
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.radius
        w = 1.0 - u * u
        inside = w * _BUMP_CUTOFF > 1.0
        w_safe = np.where(inside, w, 1.0)
        f = np.where(inside, np.exp(-1.0 / w_safe), 0.0)
        return u, w_safe, inside, f

    def value(self, x):
        return self._parts(x)[3]

    def d1(self, x):
        u, w, inside, f = self._parts(x)
        g1 = -2.0 * u / (w * w)
        return np.where(inside, f * g1, 0.0) / self.radius

    def d2(self, x):
        u, w, inside, f = self._parts(x)
        g1 = -2.0 * u / (w * w)
        g2 = -(2.0 + 6.0 * u * u) / (w * w * w)
        return np.where(inside, f * (g1 * g1 + g2), 0.0) / self.radius**2

    @property
    def support(self) -> tuple[float, float]:
        """Closed support [center - radius, center + radius]."""
        return self.center - self.radius, self.center + self.radius

    def to_dict(self) -> dict[str, Any]:
        return {"family": "bump", "center": self.center, "radius": self.radius}


@dataclass(frozen=True)
class GaussPoly(TestFunction):
    """p(v) exp(-v^2) with v = x/scale; p is v^degree unless coefficients are given."""

    degree: int = 0
    scale: float = 1.0
    coefficients: tuple[float, ...] | None = None
    _polys: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.degree <= 4:
            raise InvalidArgumentError(f"gauss_poly degree must be in 0..4, got {self.degree}")
        if not self.scale > 0:
            raise InvalidArgumentError("gauss_poly scale must be positive")
        if self.coefficients is not None:
            coef = tuple(float(c) for c in self.coefficients)
            if len(coef) > self.degree + 1:
                raise InvalidArgumentError("more coefficients than degree + 1")
            p = Polynomial(coef)
        else:
            p = Polynomial.basis(self.degree)
        v = Polynomial([0.0, 1.0])
        # d/dv [q(v) e^{-v^2}] = (q' - 2 v q) e^{-v^2}
        q1 = p.deriv() - 2 * v * p
        q2 = q1.deriv() - 2 * v * q1
        object.__setattr__(self, "_polys", (p, q1, q2))

    def _eval(self, x, order: int):
        v = np.asarray(x, dtype=float) / self.scale
        return self._polys[order](v) * np.exp(-v * v) / self.scale**order

    def value(self, x):
        return self._eval(x, 0)

    def d1(self, x):
        return self._eval(x, 1)

    def d2(self, x):
        return self._eval(x, 2)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": "gauss_poly", "degree": self.degree, "scale": self.scale}
        if self.coefficients is not None:
            out["coefficients"] = list(self.coefficients)
        return out


@dataclass(frozen=True)
class LinearCombination(TestFunction):
    """Finite linear span of dictionary members."""

    terms: tuple[tuple[float, TestFunction], ...]

    def _combine(self, method: str, x):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape)
        for coef, f in self.terms:
            total = total + coef * getattr(f, method)(x)
        return total

    def value(self, x):
        return self._combine("value", x)

    def d1(self, x):
        return self._combine("d1", x)

    def d2(self, x):
        return self._combine("d2", x)

    def __add__(self, other: TestFunction) -> LinearCombination:
        extra = other.terms if isinstance(other, LinearCombination) else ((1.0, other),)
        return LinearCombination(self.terms + extra)

    def __rmul__(self, scalar: float) -> LinearCombination:
        return LinearCombination(tuple((scalar * c, f) for c, f in self.terms))

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": "linear_combination",
            "terms": [{"coefficient": c, "function": f.to_dict()} for c, f in self.terms],
        }


@dataclass(frozen=True)
class CutoffFunction:
    """
    Compactly supported C^1 time profile gamma.

    0 before t_on, cubic ramp up to t_plateau_start, 1 on the plateau, cubic ramp
    2u^3 - 3u^2 + 1 down to t_off, 0 afterwards.
    """

    t_on: float
    t_plateau_end: float
    t_off: float
    t_plateau_start: float | None = None

    def __post_init__(self) -> None:
        start = self.t_on if self.t_plateau_start is None else self.t_plateau_start
        if not self.t_on <= start <= self.t_plateau_end <= self.t_off:
            raise InvalidArgumentError("cutoff needs t_on <= plateau start <= plateau end <= t_off")
        object.__setattr__(self, "t_plateau_start", float(start))

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        out = np.where((t >= self.t_plateau_start) & (t <= self.t_plateau_end), 1.0, out)
        up = (t >= self.t_on) & (t < self.t_plateau_start)
        if np.any(up):
            u = (t - self.t_on) / (self.t_plateau_start - self.t_on)
            out = np.where(up, 3 * u**2 - 2 * u**3, out)
        down = (t > self.t_plateau_end) & (t <= self.t_off)
        if np.any(down):
            u = (t - self.t_plateau_end) / (self.t_off - self.t_plateau_end)
            out = np.where(down, 2 * u**3 - 3 * u**2 + 1, out)
        return out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        up = (t >= self.t_on) & (t < self.t_plateau_start)
        if np.any(up):
            width = self.t_plateau_start - self.t_on
            u = (t - self.t_on) / width
            out = np.where(up, (6 * u - 6 * u**2) / width, out)
        down = (t > self.t_plateau_end) & (t <= self.t_off)
        if np.any(down):
            width = self.t_off - self.t_plateau_end
            u = (t - self.t_plateau_end) / width
            out = np.where(down, (6 * u**2 - 6 * u) / width, out)
        return out

    def __call__(self, t):
        return self.value(t)


def test_function_from_dict(data: dict[str, Any]) -> TestFunction:
    """Build a dictionary member from its config representation."""
    family = data.get("family")
    params = {k: v for k, v in data.items() if k != "family"}
    match family:
        case "bump":
            return Bump(**params)
        case "gauss_poly":
            if "coefficients" in params:
                params["coefficients"] = tuple(params["coefficients"])
            return GaussPoly(**params)
        case "linear_combination":
            return LinearCombination(tuple(
                (float(term["coefficient"]), test_function_from_dict(term["function"]))
                for term in params["terms"]
            ))
        case _:
            raise InvalidArgumentError(f"unknown test-function family {family!r}")


def default_dictionary(size: int = 8, center: float = 0.0) -> list[TestFunction]:
    """Translated and scaled bumps spread around `center`."""
    if size < 1:
        raise InvalidArgumentError("dictionary size must be at least 1")
    offsets = np.linspace(-1.5, 1.5, size) if size > 1 else np.zeros(1)
    radii = (1.0, 1.5, 2.0)
    return [Bump(center + float(o), radii[i % len(radii)]) for i, o in enumerate(offsets)]


def apply_generator(spec: ProcessSpec, f: TestFunction, x):
    """
    Apply the base generator A to f at x.

    Brownian motion gives f''/2, compound Poisson the rate-weighted atom sum,
    a chain the rate-matrix row product.
    """
    x = np.asarray(x, dtype=float)
    match spec:
        case BrownianMotion():
            out = 0.5 * f.d2(x)
        case CompoundPoisson():
            fx = f.value(x)
            out = np.zeros(x.shape)
            for y, p in spec.jump_law:
                out = out + p * (f.value(x + y) - fx)
            out = spec.rate * out
        case Ctmc():
            states = np.asarray(spec.states)
            match_ = np.abs(x[..., None] - states) <= _STATE_MATCH
            if not np.all(match_.any(axis=-1)):
                bad = x[~match_.any(axis=-1)].ravel()[0]
                raise InvalidArgumentError(f"{bad!r} is not a state of the chain")
            out = (spec.rate_matrix @ f.value(states))[np.argmax(match_, axis=-1)]
        case _:
            raise InvalidArgumentError(f"unsupported process spec {spec!r}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MartingaleStats:
    """Per-time mean and standard error of a martingale expression."""

    tgrid: np.ndarray
    mean: np.ndarray
    standard_error: np.ndarray

    def within(self, sigmas: float = 3.0) -> bool:
        """True when every mean lies within `sigmas` standard errors of 0."""
        se = np.nan_to_num(self.standard_error, nan=0.0)
        return bool(np.all(np.abs(self.mean) <= sigmas * se))

    def to_dict(self) -> dict[str, Any]:
        return {"t": self.tgrid, "mean": self.mean, "standard_error": self.standard_error}


def martingale_matrix(
    paths: Sequence[RcllPath],
    value_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    tgrid,
    sub_grid_factor: int = 4,
) -> np.ndarray:
    """
    Rows of value_fn(t, X_t) - value_fn(0, X_0) - int_0^t integrand(s, X_s) ds.

    Shared by the homogeneous, inhomogeneous and space-time checks.
    """
    if not paths:
        raise InvalidArgumentError("need at least one path")
    tgrid = np.asarray(tgrid, dtype=float)
    rows = np.empty((len(paths), tgrid.size))
    for i, path in enumerate(paths):
        xt = evaluate_many(path, tgrid)
        x0 = path.values[0]
        integral = integrate_along_path(path, integrand, tgrid, sub_grid_factor)
        rows[i] = value_fn(tgrid, xt) - value_fn(np.zeros(1), np.array([x0])) - integral
    return rows


def martingale_residual(
    paths: Sequence[RcllPath],
    spec: ProcessSpec,
    f: TestFunction,
    model=None,
    tgrid=None,
    sub_grid_factor: int = 4,
) -> MartingaleStats:
    """
    Empirical mean and standard error of f(X_t) - f(X_0) - int_0^t (sigma) Af(X_s) ds.

    With a coefficient model the integrand is sigma(s, X_s) Af(X_s), otherwise Af(X_s).
    """
    if tgrid is None:
        raise InvalidArgumentError("tgrid is required")

    def _value(_t, x):
        return f.value(x)

    if model is None:
        def _integrand(_s, x):
            return apply_generator(spec, f, x)
    else:
        def _integrand(s, x):
            return evaluate_sigma(model, s, x) * apply_generator(spec, f, x)

    rows = martingale_matrix(paths, _value, _integrand, tgrid, sub_grid_factor)
    mean, se = column_stats(rows)
    _LOG.debug("Martingale residual for %s: max |mean| %.3g", f.name, np.max(np.abs(mean)))
    return MartingaleStats(np.asarray(tgrid, dtype=float), mean, se)
