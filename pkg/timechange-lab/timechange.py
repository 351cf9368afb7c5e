"""
Pathwise time change X_t = M_{tau(t)} by the inverse-clock route.

The clock T(s) = int_0^s 1/sigma(T(r), M_r) dr is integrated along the fixed
base path with RK4 and step doubling, breakpoints of M being step boundaries.
tau is read off as the generalized inverse of T, capped at the blow-up time rho.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from coefficients import CoefficientModel, blowup_time, bounded_up_to_t0, evaluate_sigma
from const import CSV_DIGITS, DEFAULT_TOLERANCES, Metric, PathKind, Terminal, Tolerances
from errors import (DegenerateRegimeError, HorizonExhaustedError, InvalidArgumentError,
                    NumericFailureError, OutOfRangeError)
from paths import RcllPath, evaluate_many, step_integral

_LOG = logging.getLogger(__name__)

_MAX_REFINEMENTS = 16
_MAX_INVERSE_REFINEMENTS = 12


@dataclass(frozen=True)
class InverseClock:
    """Solved clock T on [0, end]; `hit_time` is T0 with T(T0) = S when terminal is hit_S."""

    breakpoints: np.ndarray
    values: np.ndarray
    terminal: Terminal
    target: float
    hit_time: float | None
    levels: np.ndarray
    level_times: np.ndarray
    stats: dict[str, Any] = field(default_factory=dict)

    @property
    def end(self) -> float:
        """Last original time covered."""
        return float(self.breakpoints[-1])

    def value_at(self, s):
        """T(s), linear between solver nodes; exact at nodes."""
        s = np.asarray(s, dtype=float)
        if np.any(s < 0) or np.any(s > self.end):
            raise OutOfRangeError(f"clock covers [0, {self.end}] only")
        out = np.interp(s, self.breakpoints, self.values)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TimeChange:
    """
    tau on tgrid, with the blow-up time and the index from which tau is frozen at rho.

    `frozen_state` is the base state at rho; on mesh-sampled paths it is the
    declared zero the interpolant crossed, which the step path never holds.
    """

    tgrid: np.ndarray
    tau: np.ndarray
    rho: float | None = None
    frozen_from: int | None = None
    solver_stats: dict[str, Any] = field(default_factory=dict)
    frozen_state: float | None = None

    def frozen_mask(self) -> np.ndarray:
        """True at grid points where tau sits at rho."""
        mask = np.zeros(self.tgrid.size, dtype=bool)
        if self.frozen_from is not None:
            mask[self.frozen_from:] = True
        return mask

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.tgrid,
            "tau": self.tau,
            "rho": self.rho,
            "frozen_from": self.frozen_from,
            "frozen_state": self.frozen_state,
            "solver_stats": self.solver_stats,
        }


def _checked(integrand: Callable[[float, float], float], r: float, s: float, stats: dict) -> float:
    value = float(integrand(r, s))
    if not math.isfinite(value) or value < 0:
        raise NumericFailureError(f"clock integrand returned {value!r} for r={r!r}", location=s)
    if value > stats["max_integrand"]:
        stats["max_integrand"] = value
    return value


def _rk4_nodes(integrand, a: float, b: float, t_a: float, n: int, stats: dict) -> np.ndarray:
    h = (b - a) / n
    s_left = np.nextafter(b, a)
    out = np.empty(n + 1)
    out[0] = t_a
    t = t_a
    for j in range(n):
        s = a + j * h
        s_mid = min(s + 0.5 * h, s_left)
        s_end = min(s + h, s_left)
        k1 = _checked(integrand, t, s, stats)
        k2 = _checked(integrand, t + 0.5 * h * k1, s_mid, stats)
        k3 = _checked(integrand, t + 0.5 * h * k2, s_mid, stats)
        k4 = _checked(integrand, t + h * k3, s_end, stats)
        t = t + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j + 1] = t
    return out


def _solve_segment(integrand, a: float, b: float, t_a: float, tol: float, stats: dict) -> np.ndarray:
    n = 1
    coarse = _rk4_nodes(integrand, a, b, t_a, n, stats)
    while True:
        fine = _rk4_nodes(integrand, a, b, t_a, 2 * n, stats)
        stats["steps"] += 2 * n
        if np.max(np.abs(fine[::2] - coarse)) < tol:
            return fine
        if 2 * n >= 2**_MAX_REFINEMENTS:
            stats["unconverged_segments"] += 1
            _LOG.warning("Clock segment [%g, %g] not converged to %g", a, b, tol)
            return fine
        stats["rejected"] += 1
        n *= 2
        coarse = fine


class _FlatClock(Exception):
    """The clock does not move; inverse stepping is undefined."""


def _inverse_rk4(integrand, s_k: float, t_k: float, span: float, m: int, s_left: float) -> float:
    # ds/dT = 1 / gamma(T, s)
    h = span / m
    s, t = s_k, t_k

    def rate(tt: float, ss: float) -> float:
        g = float(integrand(tt, min(ss, s_left)))
        if not g > 0 or not math.isfinite(g):
            raise _FlatClock
        return 1.0 / g

    for _ in range(m):
        k1 = rate(t, s)
        k2 = rate(t + 0.5 * h, s + 0.5 * h * k1)
        k3 = rate(t + 0.5 * h, s + 0.5 * h * k2)
        k4 = rate(t + h, s + h * k3)
        s = s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + h
    return s


def _crossing_time(integrand, node: tuple[float, float], nxt: tuple[float, float], level: float,
                   s_left: float, tol: float) -> float:
    """Original time at which the clock reaches `level` between two accepted nodes."""
    (s_k, t_k), (s_n, t_n) = node, nxt
    span = level - t_k
    if span <= 0:
        return s_k
    try:
        previous = _inverse_rk4(integrand, s_k, t_k, span, 1, s_left)
        m = 2
        while m <= 2**_MAX_INVERSE_REFINEMENTS:
            current = _inverse_rk4(integrand, s_k, t_k, span, m, s_left)
            if abs(current - previous) < tol:
                break
            previous = current
            m *= 2
        crossing = current
    except _FlatClock:
        crossing = s_k + (s_n - s_k) * span / (t_n - t_k)
    return min(max(crossing, s_k), s_n)


def _verify_lipschitz(integrand, S: float, s: float, points: int, stats: dict) -> None:  # pylint: disable=invalid-name
    rs = np.linspace(0.0, S, max(points, 2))
    values = np.array([float(integrand(r, s)) for r in rs])
    slopes = np.abs(np.diff(values)) / np.diff(rs)
    estimate = float(np.max(slopes)) if np.all(np.isfinite(slopes)) else math.inf
    if not math.isfinite(estimate):
        raise NumericFailureError("integrand is not Lipschitz in the clock value", location=s)
    stats["lipschitz_est"] = max(stats.get("lipschitz_est", 0.0), estimate)


def solve_caratheodory(
    integrand: Callable[[float, float], float],
    S: float,  # pylint: disable=invalid-name
    T_horizon: float,  # pylint: disable=invalid-name
    tol: float = 1e-9,
    breakpoints: Sequence[float] = (),
    levels: Sequence[float] | None = None,
    verify: bool = False,
    verify_points: int = 200,
) -> InverseClock:
    """
    Solve T(s) = int_0^s integrand(T(r), r) dr until T reaches S or s reaches T_horizon.

    Args:
        integrand: gamma(r, s) >= 0, r the clock value and s the original time.
        S: clock target.
        T_horizon: last original time available.
        tol: step-doubling tolerance at every node of a segment.
        breakpoints: original times where the integrand may jump; forced step boundaries.
        levels: clock values whose crossing times are wanted; S is always added.
        verify: sample divided differences in r at each segment midpoint and
            fail on a non-finite Lipschitz estimate.
        verify_points: r samples on [0, S] per verified segment.

    Returns:
        The clock, terminal hit_S with T(hit_time) = S, or terminal horizon with T < S.
    """
    if not S > 0 or not T_horizon > 0 or not tol > 0:
        raise InvalidArgumentError("S, T_horizon and tol must be positive")
    wanted = np.asarray([] if levels is None else levels, dtype=float)
    wanted = np.unique(np.append(wanted[(wanted > 0) & (wanted <= S)], S))
    level_times = np.full(wanted.size, np.nan)

    bp = np.asarray(breakpoints, dtype=float)
    cuts = np.unique(np.concatenate(([0.0], bp[(bp > 0) & (bp < T_horizon)], [T_horizon])))
    stats = {"steps": 0, "rejected": 0, "segments": 0, "unconverged_segments": 0, "max_integrand": 0.0}

    s_nodes = [0.0]
    t_nodes = [0.0]
    li = 0
    for a, b in zip(cuts[:-1], cuts[1:]):
        stats["segments"] += 1
        if verify:
            _verify_lipschitz(integrand, S, 0.5 * (a + b), verify_points, stats)
        clock = _solve_segment(integrand, a, b, t_nodes[-1], tol, stats)
        n = clock.size - 1
        s_grid = a + (b - a) * np.arange(n + 1) / n
        s_grid[-1] = b
        s_left = np.nextafter(b, a)
        for j in range(1, n + 1):
            while li < wanted.size and wanted[li] <= clock[j]:
                level_times[li] = _crossing_time(
                    integrand, (s_grid[j - 1], clock[j - 1]), (s_grid[j], clock[j]), wanted[li], s_left, tol
                )
                li += 1
                if li == wanted.size:
                    hit = float(level_times[-1])
                    s_nodes.append(hit)
                    t_nodes.append(float(S))
                    return InverseClock(
                        np.array(s_nodes), np.array(t_nodes), Terminal.HIT_S, float(S), hit,
                        wanted, level_times, stats,
                    )
            s_nodes.append(float(s_grid[j]))
            t_nodes.append(float(clock[j]))

    return InverseClock(
        np.array(s_nodes), np.array(t_nodes), Terminal.HORIZON, float(S), None, wanted, level_times, stats
    )


class _ClockIntegrand:
    """gamma(r, s) = 1 / sigma(min(r, cap), M_s), with H(M) precomputed per breakpoint."""

    def __init__(self, path: RcllPath, model: CoefficientModel, cap: float) -> None:
        self._bp = path.breakpoints
        self._values = path.values
        self._h = np.asarray(model.h(path.values), dtype=float)
        self._sigma_tilde = model.sigma_tilde
        self._shift = model.shift
        self._cap = cap
        self._idx = 0

    def __call__(self, r: float, s: float) -> float:
        i = self._idx
        upper = self._bp[i + 1] if i + 1 < self._bp.size else math.inf
        if not self._bp[i] <= s < upper:
            i = int(np.searchsorted(self._bp, s, side="right")) - 1
            self._idx = max(i, 0)
            i = self._idx
        r = min(max(r, 0.0), self._cap)
        sigma = self._h[i] * float(self._sigma_tilde(r + self._shift, self._values[i]))
        return 1.0 / sigma if sigma > 0 else math.inf


def _probe_window(path: RcllPath) -> tuple[float, float]:
    return float(np.floor(path.values.min()) - 1.0), float(np.ceil(path.values.max()) + 1.0)


def _validate_tgrid(tgrid) -> np.ndarray:
    tgrid = np.asarray(tgrid, dtype=float)
    if tgrid.ndim != 1 or tgrid.size == 0:
        raise InvalidArgumentError("tgrid must be a nonempty 1-D array")
    if tgrid[0] != 0.0:
        raise InvalidArgumentError("tgrid must start at 0")
    if np.any(np.diff(tgrid) <= 0):
        raise InvalidArgumentError("tgrid must be strictly increasing")
    return tgrid


def build_time_change(
    path: RcllPath,
    model: CoefficientModel,
    tgrid,
    tol: float | None = None,
    settings: Tolerances = DEFAULT_TOLERANCES,
    endpoint_closed: bool | None = None,
) -> TimeChange:
    """
    Construct tau on tgrid along the base path.

    Runs the rho-scan, solves the inverse clock up to min(rho, horizon) and
    inverts it. Grid times the clock never reaches get tau = rho and mark the
    freeze. At the cutoff t0 the plain inverse is used when sigma_tilde stays
    bounded up to t0; otherwise tau(t0) = tau(t0 - delta).

    :param endpoint_closed: precomputed boundedness of sigma_tilde up to t0.
    :raises HorizonExhaustedError: the clock ends short of the last grid time with no rho.
    """
    tgrid = _validate_tgrid(tgrid)
    if tgrid[-1] > model.t0 + 1e-12:
        raise InvalidArgumentError(f"tgrid ends at {tgrid[-1]} beyond t0={model.t0}")
    tol = settings.solver_tol if tol is None else tol

    blow = blowup_time(model, path, settings.divergence_threshold)
    rho = blow.rho
    s_end = path.horizon if rho is None else min(rho, path.horizon)
    stats: dict[str, Any] = {"rho0": blow.rho0, "endpoint": "plain"}

    t0_eff = model.effective_t0
    cap = min(float(tgrid[-1]), t0_eff)
    if cap <= 0:
        stats["endpoint"] = "inactive"
        return TimeChange(tgrid, np.zeros(tgrid.size), rho, None, stats)
    if cap >= t0_eff - 1e-12:
        closed = (bounded_up_to_t0(model, _probe_window(path), settings.lattice_points)
                  if endpoint_closed is None else endpoint_closed)
        if not closed:
            cap = t0_eff - settings.endpoint_delta * model.t0
            stats["endpoint"] = "delta"

    grid_levels = np.minimum(tgrid, cap)
    tau = np.full(tgrid.size, np.nan)
    tau[0] = 0.0
    if s_end > 0:
        integrand = _ClockIntegrand(path, model, cap)
        clock = solve_caratheodory(
            integrand, cap, s_end, tol,
            breakpoints=path.breakpoints[path.breakpoints < s_end],
            levels=grid_levels[1:],
            verify=settings.verify_lipschitz,
            verify_points=settings.lattice_points,
        )
        stats.update(clock.stats)
        stats["terminal"] = clock.terminal.value
        stats["min_sigma"] = 1.0 / clock.stats["max_integrand"] if clock.stats["max_integrand"] > 0 else None
        idx = np.searchsorted(clock.levels, grid_levels[1:])
        tau[1:] = clock.level_times[np.minimum(idx, clock.levels.size - 1)]
        reached = float(clock.values[-1])
    else:
        reached = 0.0

    missing = np.flatnonzero(np.isnan(tau))
    frozen_from = None
    if missing.size:
        if rho is None:
            raise HorizonExhaustedError(reached, cap, path.horizon)
        frozen_from = int(missing[0])
        tau[frozen_from:] = rho
    # crossings from separate inverse solves may disagree in the last bits
    tau = np.maximum.accumulate(tau)
    if frozen_from is not None:
        tau[frozen_from:] = rho
    _LOG.debug("Time change: rho=%s frozen_from=%s tau_end=%.6g", rho, frozen_from, tau[-1])
    return TimeChange(tgrid, tau, rho, frozen_from, stats,
                      blow.state_at_rho if frozen_from is not None else None)


def splice_frozen_state(path: RcllPath, tc: TimeChange, snap: float = DEFAULT_TOLERANCES.clock_snap) -> RcllPath:
    """The base path with its value at rho set to tc.frozen_state; unchanged when they already agree."""
    if tc.frozen_state is None or tc.rho is None or tc.rho > path.horizon:
        return path
    rho = tc.rho
    if float(evaluate_many(path, np.array([rho]), snap=snap)[0]) == tc.frozen_state:
        return path
    bp, vals = path.breakpoints, path.values
    # a breakpoint within snap after rho is what rho evaluates to
    j = int(np.searchsorted(bp, rho + snap, side="right")) - 1
    if bp[j] >= rho:
        new_vals = vals.copy()
        new_vals[j] = tc.frozen_state
        return RcllPath(bp, new_vals, path.horizon, path.kind)
    k = j + 1
    return RcllPath(np.insert(bp, k, rho), np.insert(vals, k, tc.frozen_state), path.horizon, path.kind)


def apply_time_change(path: RcllPath, tc: TimeChange, snap: float = DEFAULT_TOLERANCES.clock_snap) -> RcllPath:
    """X_t = M_{tau(t)} on tc.tgrid, as a mesh-sampled path; frozen grid times read tc.frozen_state."""
    path = splice_frozen_state(path, tc, snap)
    if np.any(tc.tau > path.horizon + snap):
        raise OutOfRangeError(f"tau reaches {tc.tau.max()!r} beyond horizon {path.horizon}")
    values = evaluate_many(path, np.minimum(tc.tau, path.horizon), snap=snap)
    return RcllPath(tc.tgrid, values, float(tc.tgrid[-1]), PathKind.MESH_SAMPLED)


def _clock_along(x_left: np.ndarray, tgrid: np.ndarray, model: CoefficientModel, weight=None) -> np.ndarray:
    """Cumulative trapezoid of weight(X) sigma(s, X) on tgrid with X held at its left value."""
    dt = np.diff(tgrid)
    left = evaluate_sigma(model, tgrid[:-1], x_left)
    right = evaluate_sigma(model, tgrid[1:], x_left)
    pieces = 0.5 * (np.asarray(left) + np.asarray(right)) * dt
    if weight is not None:
        pieces = pieces * np.asarray(weight(x_left), dtype=float)
    return np.concatenate(([0.0], np.cumsum(pieces)))


def fixed_point_residual(
    base: RcllPath,
    X: RcllPath,  # pylint: disable=invalid-name
    model: CoefficientModel,
    tgrid=None,
    metric: Metric = Metric.EUCLIDEAN,
    start: int = 0,
    snap: float = DEFAULT_TOLERANCES.clock_snap,
    anchor: float | None = None,
) -> float:
    """
    sup over tgrid[start:] of dist(X_t, M_{u(t)}) with u(t) = int_0^t sigma(s, X_s) ds.

    u is the trapezoid rule on tgrid with X held at its left value, which is
    exact for sigma_tilde linear in t. The discrete metric scores state mismatch as 1.
    With `anchor`, u(tgrid[start]) is pinned to that clock value (tau there) and
    only the increments after start are integrated.
    """
    tgrid = X.breakpoints if tgrid is None else _validate_tgrid(tgrid)
    x = evaluate_many(X, tgrid)
    u = _clock_along(x[:-1], tgrid, model)
    if anchor is not None and start < u.size:
        u = np.where(np.arange(u.size) >= start, anchor + (u - u[start]), u)
    if np.any(u > base.horizon + snap):
        raise OutOfRangeError(f"u(t) reaches {u.max()!r} beyond base horizon {base.horizon}")
    m_u = evaluate_many(base, np.minimum(u, base.horizon), snap=snap)
    match Metric(metric):
        case Metric.DISCRETE:
            dist = (x != m_u).astype(float)
        case _:
            dist = np.abs(x - m_u)
    if start >= dist.size:
        return 0.0
    return float(np.max(dist[start:]))


def change_of_variables_residual(
    base: RcllPath,
    tc: TimeChange,
    model: CoefficientModel,
    g: Callable,
    X: RcllPath | None = None,  # pylint: disable=invalid-name
) -> np.ndarray:
    """
    Per-grid |int_0^tau(t) g(M_s) ds - int_0^t g(X_s) sigma(s, X_s) ds|.

    The left side is exact over the step path, the right side is the left-value
    trapezoid on tgrid.
    """
    X = apply_time_change(base, tc) if X is None else X
    lhs = step_integral(base, g, np.minimum(tc.tau, base.horizon))
    x = evaluate_many(X, tc.tgrid)
    rhs = _clock_along(x[:-1], tc.tgrid, model, weight=g)
    return np.abs(lhs - rhs)


def forward_euler_time_change(
    path: RcllPath,
    model: CoefficientModel,
    tgrid,
    substeps: int = 1,
    snap: float = DEFAULT_TOLERANCES.clock_snap,
) -> TimeChange:
    """
    Explicit Euler on dtau/dt = sigma(t, M_tau(t)).

    Only meaningful while sigma stays away from 0 along the path: hitting sigma = 0
    or a declared zero of H inside the visited range is refused.
    """
    tgrid = _validate_tgrid(tgrid)
    if substeps < 1:
        raise InvalidArgumentError("substeps must be at least 1")
    tau = np.zeros(tgrid.size)
    current = 0.0
    min_sigma = math.inf
    for j in range(1, tgrid.size):
        h = (tgrid[j] - tgrid[j - 1]) / substeps
        for k in range(substeps):
            t = tgrid[j - 1] + k * h
            if current > path.horizon + snap:
                raise OutOfRangeError(f"tau reaches {current!r} beyond horizon {path.horizon}")
            m = float(evaluate_many(path, np.array([min(current, path.horizon)]), snap=snap)[0])
            sigma = evaluate_sigma(model, t, m)
            if t + model.shift <= model.t0 and not sigma > 0:
                raise DegenerateRegimeError(f"sigma vanishes at t={t!r}, M={m!r}")
            if sigma > 0:
                min_sigma = min(min_sigma, sigma)
            current += h * sigma
        tau[j] = current

    visited = path.values[path.breakpoints <= min(current, path.horizon) + snap]
    lo, hi = float(visited.min()), float(visited.max())
    for zero in model.zeros:
        if lo <= zero.point <= hi:
            raise DegenerateRegimeError(f"declared zero {zero.point} lies in the visited range [{lo}, {hi}]")
    stats = {"method": "forward_euler", "steps": (tgrid.size - 1) * substeps,
             "min_sigma": None if math.isinf(min_sigma) else min_sigma}
    return TimeChange(tgrid, tau, None, None, stats)


def export_time_change_csv(tc: TimeChange, target: str | Path) -> Path:
    """Write `t,tau,frozen` rows."""
    target = Path(target)
    frozen = tc.frozen_mask()
    with open(target, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "tau", "frozen"])
        for t, tau, flag in zip(tc.tgrid, tc.tau, frozen, strict=True):
            writer.writerow([format(t, f".{CSV_DIGITS}g"), format(tau, f".{CSV_DIGITS}g"), int(flag)])
    return target
