"""
Base Markov processes and RCLL path containers.

Simulates Brownian motion on a mesh, compound Poisson processes with exact jump
times and finite-state chains by Gillespie's method. Every path is stored as
breakpoints plus values and is read right-continuously.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from const import CSV_DIGITS, PathKind
from errors import InvalidArgumentError, OutOfRangeError
from utils import make_generator

_LOG = logging.getLogger(__name__)

# Times closer than this to a breakpoint are read as the breakpoint itself.
EVAL_SNAP = 1e-12

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class BrownianMotion:
    """Standard Brownian motion started at x0, generator f''/2."""

    x0: float = 0.0

    @property
    def start(self) -> float:
        """Initial state."""
        return float(self.x0)


@dataclass(frozen=True, eq=False)
class CompoundPoisson:
    """Compound Poisson process with a finite jump law of (value, probability) atoms."""

    x0: float
    rate: float
    jump_law: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise InvalidArgumentError(f"jump rate must be positive, got {self.rate}")
        if not self.jump_law:
            raise InvalidArgumentError("jump law needs at least one atom")
        probs = np.array([p for _, p in self.jump_law], dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > _SUM_TOL:
            raise InvalidArgumentError("jump probabilities must be nonnegative and sum to 1")

    @property
    def start(self) -> float:
        """Initial state."""
        return float(self.x0)

    @property
    def jump_values(self) -> np.ndarray:
        """Atom locations."""
        return np.array([y for y, _ in self.jump_law], dtype=float)

    @property
    def jump_probs(self) -> np.ndarray:
        """Atom weights."""
        return np.array([p for _, p in self.jump_law], dtype=float)


@dataclass(frozen=True, eq=False)
class Ctmc:
    """Finite-state chain with states embedded as distinct reals."""

    states: tuple[float, ...]
    rate_matrix: np.ndarray
    initial_state_index: int = 0

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=float)
        q = np.asarray(self.rate_matrix, dtype=float)
        if states.ndim != 1 or states.size == 0:
            raise InvalidArgumentError("chain needs a nonempty list of states")
        if np.unique(states).size != states.size:
            raise InvalidArgumentError("chain states must be distinct")
        if q.shape != (states.size, states.size):
            raise InvalidArgumentError(f"rate matrix shape {q.shape} does not match {states.size} states")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            raise InvalidArgumentError("off-diagonal rates must be nonnegative")
        if np.any(np.abs(q.sum(axis=1)) > _SUM_TOL):
            raise InvalidArgumentError("rate matrix rows must sum to 0")
        if not 0 <= self.initial_state_index < states.size:
            raise InvalidArgumentError(f"initial state index {self.initial_state_index} out of range")
        q.setflags(write=False)
        object.__setattr__(self, "states", tuple(float(s) for s in states))
        object.__setattr__(self, "rate_matrix", q)

    @property
    def start(self) -> float:
        """Initial state."""
        return self.states[self.initial_state_index]

    def index_of(self, x: float) -> int:
        """Index of the embedded state x."""
        states = np.asarray(self.states)
        hits = np.flatnonzero(np.abs(states - x) <= _SUM_TOL)
        if hits.size == 0:
            raise InvalidArgumentError(f"{x!r} is not a state of the chain")
        return int(hits[0])


ProcessSpec = Union[BrownianMotion, CompoundPoisson, Ctmc]


def with_start(spec: ProcessSpec, x0: float) -> ProcessSpec:
    """Return the same process started from x0."""
    if isinstance(spec, Ctmc):
        return dataclasses.replace(spec, initial_state_index=spec.index_of(x0))
    return dataclasses.replace(spec, x0=float(x0))


@dataclass(frozen=True, eq=False)
class RcllPath:
    """
    Right-continuous path with left limits on [0, horizon].

    Immutable once built; safe to share between workers.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    horizon: float
    kind: PathKind = PathKind.PIECEWISE_CONSTANT

    def __post_init__(self) -> None:
        bp = np.array(self.breakpoints, dtype=float)
        vals = np.array(self.values, dtype=float)
        if bp.ndim != 1 or bp.size == 0:
            raise InvalidArgumentError("path needs at least one breakpoint")
        if bp.shape != vals.shape:
            raise InvalidArgumentError("value count must equal breakpoint count")
        if bp[0] != 0.0:
            raise InvalidArgumentError("first breakpoint must be 0")
        if np.any(np.diff(bp) <= 0):
            raise InvalidArgumentError("breakpoints must be strictly increasing")
        if bp[-1] > self.horizon:
            raise InvalidArgumentError("last breakpoint exceeds horizon")
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "kind", PathKind(self.kind))

    def __len__(self) -> int:
        return int(self.breakpoints.size)


def _indices(path: RcllPath, ts: np.ndarray, snap: float) -> np.ndarray:
    if np.any(ts < -snap) or np.any(ts > path.horizon + snap):
        bad = ts[(ts < -snap) | (ts > path.horizon + snap)][0]
        raise OutOfRangeError(f"t={bad!r} outside [0, {path.horizon}]")
    idx = np.searchsorted(path.breakpoints, ts + snap, side="right") - 1
    return np.clip(idx, 0, path.breakpoints.size - 1)


def evaluate(path: RcllPath, t: float, snap: float = EVAL_SNAP) -> float:
    """Value at the greatest breakpoint <= t."""
    idx = _indices(path, np.array([t], dtype=float), snap)
    return float(path.values[idx[0]])


def evaluate_many(path: RcllPath, ts, snap: float = EVAL_SNAP) -> np.ndarray:
    """Vectorized `evaluate` over an array of times."""
    ts = np.asarray(ts, dtype=float)
    return path.values[_indices(path, ts.ravel(), snap)].reshape(ts.shape)


def occupation_time(path: RcllPath, center: float, radius: float, upto: float) -> float:
    """Lebesgue time in [0, upto] the step path spends within distance < radius of center."""
    if not radius > 0:
        raise InvalidArgumentError("radius must be positive")
    if upto > path.horizon or upto < 0:
        raise OutOfRangeError(f"upto={upto!r} outside [0, {path.horizon}]")
    starts = path.breakpoints
    ends = np.append(starts[1:], path.horizon)
    durations = np.clip(np.minimum(ends, upto) - starts, 0.0, None)
    inside = np.abs(path.values - center) < radius
    return float(np.sum(durations[inside]))


def step_integral(path: RcllPath, fn, upto) -> np.ndarray:
    """Exact int_0^t fn(X_s) ds of the step reading of the path, for every t in upto."""
    upto = np.asarray(upto, dtype=float)
    if np.any(upto < 0) or np.any(upto > path.horizon + EVAL_SNAP):
        raise OutOfRangeError(f"integration limit outside [0, {path.horizon}]")
    bp = path.breakpoints
    heights = np.asarray(fn(path.values), dtype=float)
    prefix = np.concatenate(([0.0], np.cumsum(heights[:-1] * np.diff(bp))))
    idx = np.clip(np.searchsorted(bp, upto, side="right") - 1, 0, bp.size - 1)
    return prefix[idx] + heights[idx] * (upto - bp[idx])


def integration_nodes(path: RcllPath, tgrid: np.ndarray, sub_grid_factor: int = 4) -> np.ndarray:
    """
    Quadrature nodes on [0, max(tgrid)] containing 0, every tgrid point and every breakpoint.

    Jump paths additionally get a sub-grid `sub_grid_factor` times finer than the
    smallest tgrid spacing.
    """
    grid = np.unique(np.concatenate(([0.0], tgrid)))
    upto = grid[-1]
    parts = [grid, path.breakpoints[path.breakpoints <= upto]]
    if path.kind is PathKind.PIECEWISE_CONSTANT and grid.size > 1:
        spacing = np.diff(grid)
        step = float(spacing.min()) / max(int(sub_grid_factor), 1)
        for a, width in zip(grid[:-1], spacing, strict=True):
            n = int(np.ceil(width / step - 1e-9))
            if n > 1:
                parts.append(a + width * np.arange(1, n) / n)
    return np.unique(np.concatenate(parts))


def integrate_along_path(path: RcllPath, integrand, tgrid, sub_grid_factor: int = 4) -> np.ndarray:
    """
    Cumulative int_0^t integrand(s, X_s) ds for every t in tgrid.

    On jump paths the state is exact per node interval and only the time
    dependence goes through the trapezoid rule. Mesh-sampled paths use the plain
    trapezoid rule on node values.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    if tgrid.ndim != 1 or tgrid.size == 0:
        raise InvalidArgumentError("tgrid must be a nonempty 1-D array")
    if np.any(np.diff(tgrid) < 0) or tgrid[0] < 0:
        raise InvalidArgumentError("tgrid must be nondecreasing and nonnegative")
    if tgrid[-1] > path.horizon + EVAL_SNAP:
        raise OutOfRangeError(f"tgrid reaches {tgrid[-1]!r} beyond horizon {path.horizon}")

    nodes = integration_nodes(path, tgrid, sub_grid_factor)
    if nodes.size == 1:
        return np.zeros(tgrid.shape)
    x = evaluate_many(path, nodes)
    dt = np.diff(nodes)
    if path.kind is PathKind.PIECEWISE_CONSTANT:
        left = np.asarray(integrand(nodes[:-1], x[:-1]), dtype=float)
        right = np.asarray(integrand(nodes[1:], x[:-1]), dtype=float)
    else:
        g = np.asarray(integrand(nodes, x), dtype=float)
        left, right = g[:-1], g[1:]
    cumulative = np.concatenate(([0.0], np.cumsum(0.5 * (left + right) * dt)))
    return cumulative[np.searchsorted(nodes, tgrid)]


def _mesh_times(horizon: float, mesh: float) -> np.ndarray:
    n = int(np.ceil(horizon / mesh - 1e-9))
    times = np.arange(n + 1, dtype=float) * mesh
    times[-1] = horizon
    if times.size > 2 and times[-1] - times[-2] <= 0:
        times = np.delete(times, -2)
    return times


def _sample_brownian(spec: BrownianMotion, horizon: float, mesh: float, rng) -> RcllPath:
    times = _mesh_times(horizon, mesh)
    steps = np.diff(times)
    increments = rng.standard_normal(steps.size) * np.sqrt(steps)
    values = spec.x0 + np.concatenate(([0.0], np.cumsum(increments)))
    return RcllPath(times, values, horizon, PathKind.MESH_SAMPLED)


def _sample_compound_poisson(spec: CompoundPoisson, horizon: float, rng) -> RcllPath:
    times = [0.0]
    t = 0.0
    while True:
        t += rng.exponential(1.0 / spec.rate)
        if t > horizon:
            break
        times.append(t)
    jumps = rng.choice(spec.jump_values, size=len(times) - 1, p=spec.jump_probs)
    values = spec.x0 + np.concatenate(([0.0], np.cumsum(jumps)))
    return RcllPath(np.array(times), values, horizon, PathKind.PIECEWISE_CONSTANT)


def _sample_ctmc(spec: Ctmc, horizon: float, rng) -> RcllPath:
    q = spec.rate_matrix
    state = spec.initial_state_index
    times = [0.0]
    indices = [state]
    t = 0.0
    while True:
        total = -q[state, state]
        if total <= 0:
            break
        t += rng.exponential(1.0 / total)
        if t > horizon:
            break
        probs = q[state].copy()
        probs[state] = 0.0
        state = int(rng.choice(probs.size, p=probs / total))
        times.append(t)
        indices.append(state)
    values = np.asarray(spec.states)[indices]
    return RcllPath(np.array(times), values, horizon, PathKind.PIECEWISE_CONSTANT)


def sample_path(spec: ProcessSpec, horizon: float, mesh: float, seed: int) -> RcllPath:
    """
    Simulate the base process on [0, horizon].

    Args:
        spec: Process to simulate.
        horizon: Final time covered by the path.
        mesh: Sampling step for diffusions; ignored for jump processes.
        seed: 64-bit seed of the path's Philox stream.

    Returns:
        The simulated path, bit-reproducible for identical arguments.
    """
    if not horizon > 0 or not mesh > 0:
        raise InvalidArgumentError(f"horizon and mesh must be positive, got {horizon}, {mesh}")
    if mesh > horizon:
        raise InvalidArgumentError(f"mesh {mesh} exceeds horizon {horizon}")

    rng = make_generator(seed)
    match spec:
        case BrownianMotion():
            path = _sample_brownian(spec, horizon, mesh, rng)
        case CompoundPoisson():
            path = _sample_compound_poisson(spec, horizon, rng)
        case Ctmc():
            path = _sample_ctmc(spec, horizon, rng)
        case _:
            raise InvalidArgumentError(f"unsupported process spec {spec!r}")

    _LOG.debug("Sampled %s path: %d breakpoints on [0, %g]", type(spec).__name__, len(path), horizon)
    return path


def write_path_csv(path: RcllPath, target: str | Path) -> Path:
    """Write the path as `t,value` rows, one per breakpoint."""
    target = Path(target)
    with open(target, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "value"])
        for t, v in zip(path.breakpoints, path.values, strict=True):
            writer.writerow([format(t, f".{CSV_DIGITS}g"), format(v, f".{CSV_DIGITS}g")])
    return target
