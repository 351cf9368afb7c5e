"""
Marginal ensembles and the weak Fokker-Planck, space-time and uniqueness checks.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from coefficients import CoefficientModel, bounded_up_to_t0, evaluate_sigma
from const import CSV_DIGITS, DEFAULT_TOLERANCES, PathKind, Provenance, Tolerances, ks_critical
from errors import HorizonExhaustedError, InfeasibleScenarioError, InvalidArgumentError, NumericFailureError
from generators import (Bump, CutoffFunction, MartingaleStats, TestFunction, apply_generator,
                        martingale_matrix)
from paths import ProcessSpec, RcllPath, sample_path, with_start
from pool import map_indexed
from stats import column_stats, ks_two_sample
from timechange import TimeChange, apply_time_change, build_time_change
from utils import derive_seed, make_generator

_LOG = logging.getLogger(__name__)

BASE_STREAM = 0
INITIAL_LAW_STREAM = 1
EM_NOISE_STREAM = 2

_EM_CHUNK = 1024
_SHIFT_MATCH = 1e-12


@dataclass(frozen=True)
class InitialLaw:
    """Finite mixture mu0 = sum_k w_k delta_{a_k}."""

    atoms: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if len(self.atoms) == 0 or len(self.atoms) != w.size:
            raise InvalidArgumentError("initial law needs one weight per atom")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("initial law weights must be nonnegative and sum to 1")

    def draw(self, master_seed: int, index: int) -> float:
        """Starting point of path `index`, from its own sub-stream."""
        rng = make_generator(derive_seed(master_seed, index, INITIAL_LAW_STREAM))
        return float(rng.choice(np.asarray(self.atoms, dtype=float), p=np.asarray(self.weights)))


@dataclass(frozen=True, eq=False)
class MarginalEnsemble:
    """N x len(tgrid) samples; row i is path i read on tgrid."""

    tgrid: np.ndarray
    samples: np.ndarray
    master_seed: int | None
    provenance: Provenance
    frozen_from: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        tgrid = np.asarray(self.tgrid, dtype=float)
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != tgrid.size:
            raise InvalidArgumentError(f"samples shape {samples.shape} does not match {tgrid.size} grid times")
        if samples.shape[0] == 0:
            raise InvalidArgumentError("ensemble needs at least one path")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("ensemble samples must be finite")
        tgrid.setflags(write=False)
        samples.setflags(write=False)
        object.__setattr__(self, "tgrid", tgrid)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def n_paths(self) -> int:
        """Number of paths N."""
        return int(self.samples.shape[0])

    def row_path(self, i: int) -> RcllPath:
        """Path i as a mesh-sampled RcllPath on tgrid."""
        return RcllPath(self.tgrid, self.samples[i], float(self.tgrid[-1]), PathKind.MESH_SAMPLED)


@dataclass(frozen=True, eq=False)
class PathTask:  # pylint: disable=too-many-instance-attributes
    """Everything needed to build path `index` of an ensemble."""

    spec: ProcessSpec
    model: CoefficientModel
    tgrid: np.ndarray
    mesh: float
    master_seed: int
    index: int
    base_horizon: float
    settings: Tolerances
    initial_law: InitialLaw | None
    endpoint_closed: bool


def start_window(spec: ProcessSpec, margin: float = 10.0) -> tuple[float, float]:
    """Integer-aligned window around the starting point used for endpoint probes."""
    return float(np.floor(spec.start)) - margin, float(np.ceil(spec.start)) + margin


def construct_path(task: PathTask) -> tuple[RcllPath, TimeChange]:
    """Sample the base path and solve its time change, doubling the horizon on exhaustion."""
    seed = derive_seed(task.master_seed, task.index, BASE_STREAM)
    spec = task.spec
    if task.initial_law is not None:
        spec = with_start(spec, task.initial_law.draw(task.master_seed, task.index))
    horizon = task.base_horizon
    for attempt in range(task.settings.max_horizon_retries + 1):
        path = sample_path(spec, horizon, min(task.mesh, horizon), seed)
        try:
            tc = build_time_change(path, task.model, task.tgrid, settings=task.settings,
                                   endpoint_closed=task.endpoint_closed)
        except HorizonExhaustedError as ex:
            _LOG.warning("Path %d: %s (attempt %d)", task.index, ex, attempt + 1)
            horizon *= 2.0
            continue
        return path, tc
    raise InfeasibleScenarioError(
        f"path {task.index}: base horizon retries exhausted at {horizon / 2.0:g}", seed
    )


def simulate_path(task: PathTask) -> tuple[np.ndarray, int]:
    """Build one path and read it on tgrid; returns (row, frozen_from or -1)."""
    path, tc = construct_path(task)
    x = apply_time_change(path, tc)
    return np.asarray(x.values), -1 if tc.frozen_from is None else tc.frozen_from


def simulate_marginals(
    spec: ProcessSpec,
    model: CoefficientModel,
    N: int,  # pylint: disable=invalid-name
    tgrid,
    mesh: float,
    master_seed: int,
    workers: int = 1,
    settings: Tolerances = DEFAULT_TOLERANCES,
    base_horizon: float | None = None,
    initial_law: InitialLaw | None = None,
) -> MarginalEnsemble:
    """
    Build N time-changed paths and record them on tgrid.

    Path i uses a seed derived from (master_seed, i) only. The base horizon starts
    at `base_horizon` (default 2 t0) and doubles on horizon exhaustion.

    :raises InfeasibleScenarioError: a path exhausted its horizon retries.
    """
    if N < 1:
        raise InvalidArgumentError(f"N must be positive, got {N}")
    tgrid = np.asarray(tgrid, dtype=float)
    if tgrid.size == 0 or tgrid[0] != 0.0 or tgrid[-1] > model.t0 + 1e-12:
        raise InvalidArgumentError(f"tgrid must start at 0 and stay within [0, {model.t0}]")
    horizon = 2.0 * model.t0 if base_horizon is None else float(base_horizon)
    closed = bounded_up_to_t0(model, start_window(spec), settings.lattice_points)

    tasks = [
        PathTask(spec, model, tgrid, mesh, master_seed, i, horizon, settings, initial_law, closed)
        for i in range(N)
    ]
    results = map_indexed(simulate_path, tasks, workers)
    samples = np.vstack([row for row, _ in results])
    frozen = np.array([ff for _, ff in results], dtype=int)
    _LOG.info("Simulated %d paths on %d grid times (%d frozen)", N, tgrid.size, int(np.sum(frozen >= 0)))
    return MarginalEnsemble(
        tgrid, samples, master_seed, Provenance.TIMECHANGE, frozen,
        {"mesh": mesh, "base_horizon": horizon, "shift": model.shift,
         "initial_law": None if initial_law is None else {
             "atoms": list(initial_law.atoms), "weights": list(initial_law.weights)}},
    )


def base_paths(
    spec: ProcessSpec,
    horizon: float,
    mesh: float,
    master_seed: int,
    N: int,  # pylint: disable=invalid-name
    initial_law: InitialLaw | None = None,
) -> list[RcllPath]:
    """The untransformed base paths with the same per-path seeds as `simulate_marginals`."""
    out = []
    for i in range(N):
        spec_i = spec if initial_law is None else with_start(spec, initial_law.draw(master_seed, i))
        out.append(sample_path(spec_i, horizon, min(mesh, horizon), derive_seed(master_seed, i, BASE_STREAM)))
    return out


# --- Fokker-Planck residual -------------------------------------------------


@dataclass(frozen=True)
class ResidualEntry:  # pylint: disable=too-many-instance-attributes
    """One (test function, grid time) line of the weak residual."""

    function: str
    t: float
    lhs: float
    rhs: float
    residual: float
    mc_standard_error: float
    quadrature_bound: float
    passed: bool


@dataclass(frozen=True)
class ResidualReport:
    """Weak Fokker-Planck residuals over the dictionary and tgrid."""

    entries: tuple[ResidualEntry, ...]
    sigmas: float
    mass_defect: np.ndarray

    @property
    def passed(self) -> bool:
        """Every (f, t) passes."""
        return all(e.passed for e in self.entries)

    def failures(self) -> list[ResidualEntry]:
        """Entries outside their tolerance."""
        return [e for e in self.entries if not e.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "sigmas": self.sigmas,
            "mass_defect": self.mass_defect,
            "entries": [e.__dict__ for e in self.entries],
        }


def _uniform_spacing(tgrid: np.ndarray) -> float:
    if tgrid.size < 2:
        raise InvalidArgumentError("tgrid needs at least two points")
    spacing = np.diff(tgrid)
    if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=1e-12):
        raise InvalidArgumentError("fp_residual needs a uniform tgrid")
    return float(spacing[0])


def _cumulative_trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    pieces = 0.5 * (values[:, :-1] + values[:, 1:]) * h
    return np.concatenate((np.zeros((values.shape[0], 1)), np.cumsum(pieces, axis=1)), axis=1)


def fp_residual(
    ens: MarginalEnsemble,
    spec: ProcessSpec,
    model: CoefficientModel,
    dictionary: Sequence[TestFunction],
    sigmas: float = 3.0,
) -> ResidualReport:
    """
    Weak residual of mean f(X_t) - mean f(X_0) = int_0^t mean sigma(s, X_s) Af(X_s) ds.

    Args:
        ens: marginal ensemble on a uniform tgrid.
        spec: base process, for A.
        model: coefficient model, for sigma.
        dictionary: nonempty list of test functions.
        sigmas: Monte Carlo multiplier in the pass rule.

    Returns:
        Per (f, t) entries passing iff |residual| <= sigmas * SE + quadrature bound.
    """
    if not dictionary:
        raise InvalidArgumentError("dictionary must be nonempty")
    h = _uniform_spacing(ens.tgrid)
    x = ens.samples
    sigma = np.asarray(evaluate_sigma(model, np.broadcast_to(ens.tgrid, x.shape), x), dtype=float)

    entries = []
    for f in dictionary:
        fx = np.asarray(f.value(x), dtype=float)
        lhs, lhs_se = column_stats(fx - fx[:, :1])
        integrand = sigma * np.asarray(apply_generator(spec, f, x), dtype=float)
        rhs, rhs_se = column_stats(_cumulative_trapezoid(integrand, h))
        g_mean, _ = column_stats(integrand)
        second = np.abs(np.diff(g_mean, n=2)) / h**2 if g_mean.size > 2 else np.zeros(1)
        qbound = h**2 / 12.0 * float(np.max(second))
        se = np.nan_to_num(lhs_se, nan=0.0) + np.nan_to_num(rhs_se, nan=0.0)
        for j, t in enumerate(ens.tgrid):
            residual = float(lhs[j] - rhs[j])
            entries.append(ResidualEntry(
                f.name, float(t), float(lhs[j]), float(rhs[j]), residual, float(se[j]),
                qbound if j > 0 else 0.0, abs(residual) <= sigmas * se[j] + (qbound if j > 0 else 0.0),
            ))

    # constant-1 surrogate: the largest bump over the visited range, scaled to peak 1
    lo, hi = float(np.min(x)), float(np.max(x))
    cover = Bump(0.5 * (lo + hi), 10.0 * (1.0 + 0.5 * (hi - lo)))
    mass_defect = 1.0 - column_stats(np.e * cover.value(x))[0]
    report = ResidualReport(tuple(entries), sigmas, mass_defect)
    _LOG.info("FP residual: %d of %d entries pass", len(entries) - len(report.failures()), len(entries))
    return report


# --- space-time lift ----------------------------------------------------------


def spacetime_operator(f: TestFunction, g: CutoffFunction, t, x, spec: ProcessSpec, model: CoefficientModel):
    """L(f g)(t, x) = g(t) sigma(t, x) Af(x) + f(x) g'(t)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = (np.asarray(g.value(t)) * np.asarray(evaluate_sigma(model, t, x)) * np.asarray(apply_generator(spec, f, x))
           + np.asarray(f.value(x)) * np.asarray(g.derivative(t)))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SpacetimeStats(MartingaleStats):
    """Martingale statistics of the space-time pair plus its deterministic time component."""

    s0: float = 0.0
    time_component: np.ndarray | None = None
    time_error: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        out = super().to_dict()
        out.update({"s0": self.s0, "time_component": self.time_component, "time_error": self.time_error})
        return out


def spacetime_martingale_residual(
    ens: MarginalEnsemble,
    s0: float,
    spec: ProcessSpec,
    model: CoefficientModel,
    f: TestFunction,
    g: CutoffFunction,
    sub_grid_factor: int = 4,
) -> SpacetimeStats:
    """
    Mean and SE of g(s0+t) f(X_t) - g(s0) f(X_0) - int_0^t L(f g)(s0+s, X_s) ds.

    `ens` must come from the shifted coefficient sigma(s0 + ., .); `model` is the
    unshifted one. The time component is integrated from dT = dt along the
    ensemble's own time axis and must match s0 + t to rounding.

    :raises InvalidArgumentError: negative s0, or an ensemble recorded at another shift.
    """
    if s0 < 0:
        raise InvalidArgumentError("s0 must be nonnegative")
    shift = ens.metadata.get("shift")
    if shift is not None and abs(float(shift) - s0) > _SHIFT_MATCH:
        raise InvalidArgumentError(f"ensemble was simulated at shift {shift}, not s0={s0}")
    tgrid = ens.tgrid
    time_component = s0 + np.concatenate(([0.0], np.cumsum(np.diff(tgrid))))
    time_error = float(np.max(np.abs(time_component - (s0 + tgrid))))
    if time_error > _SHIFT_MATCH * (1.0 + s0 + float(tgrid[-1])):
        raise NumericFailureError(f"time component drifts from s0 + t by {time_error!r}")

    def _value(t, x):
        return np.asarray(g.value(s0 + t)) * f.value(x)

    def _integrand(s, x):
        return spacetime_operator(f, g, s0 + np.asarray(s), x, spec, model)

    paths = [ens.row_path(i) for i in range(ens.n_paths)]
    rows = martingale_matrix(paths, _value, _integrand, tgrid, sub_grid_factor)
    mean, se = column_stats(rows)
    return SpacetimeStats(tgrid, mean, se, float(s0), time_component, time_error)


# --- distributional uniqueness ---------------------------------------------


@dataclass(frozen=True)
class UniquenessEntry:
    """KS comparison at one grid time."""

    t: float
    ks_statistic: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class UniquenessReport:
    """Per-time KS comparison of two ensembles."""

    entries: tuple[UniquenessEntry, ...]
    alpha: float

    @property
    def passed(self) -> bool:
        """Below threshold at every grid time."""
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "alpha": self.alpha, "entries": [e.__dict__ for e in self.entries]}


def uniqueness_crosscheck(a: MarginalEnsemble, b: MarginalEnsemble, alpha: float = 0.01) -> UniquenessReport:
    """Two-sample KS per grid time against c(alpha) sqrt((n + m) / (n m))."""
    if a.tgrid.shape != b.tgrid.shape or not np.array_equal(a.tgrid, b.tgrid):
        raise InvalidArgumentError("ensembles must share the same tgrid")
    n, m = a.n_paths, b.n_paths
    threshold = ks_critical(alpha) * float(np.sqrt((n + m) / (n * m)))
    entries = []
    for j, t in enumerate(a.tgrid):
        stat = ks_two_sample(a.samples[:, j], b.samples[:, j])
        entries.append(UniquenessEntry(float(t), stat, threshold, stat < threshold))
    return UniquenessReport(tuple(entries), alpha)


def _em_grid(tgrid: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    times = [0.0]
    marks = [0]
    for a, b in zip(tgrid[:-1], tgrid[1:]):
        n = max(1, int(np.ceil((b - a) / step - 1e-9)))
        times.extend(a + (b - a) * np.arange(1, n + 1) / n)
        times[-1] = float(b)
        marks.append(len(times) - 1)
    return np.asarray(times), np.asarray(marks)


def euler_maruyama_marginals(
    model: CoefficientModel,
    x0: float,
    N: int,  # pylint: disable=invalid-name
    tgrid,
    step: float,
    master_seed: int,
    initial_law: InitialLaw | None = None,
) -> MarginalEnsemble:
    """
    X_{k+1} = X_k + sqrt(max(sigma(t_k, X_k), 0)) dW_k, recorded on tgrid.

    Noise for path i comes from its own stream, so rows do not depend on chunking.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    if N < 1:
        raise InvalidArgumentError(f"N must be positive, got {N}")
    if tgrid.size < 2 or tgrid[0] != 0.0 or np.any(np.diff(tgrid) <= 0):
        raise InvalidArgumentError("tgrid must start at 0 and increase")
    if not 0 < step <= float(np.min(np.diff(tgrid))) + 1e-12:
        raise InvalidArgumentError(f"step {step} must be positive and at most the tgrid spacing")
    times, marks = _em_grid(tgrid, step)
    dt = np.diff(times)
    sqrt_dt = np.sqrt(dt)

    samples = np.empty((N, tgrid.size))
    for lo in range(0, N, _EM_CHUNK):
        idx = range(lo, min(N, lo + _EM_CHUNK))
        noise = np.vstack([
            make_generator(derive_seed(master_seed, i, EM_NOISE_STREAM)).standard_normal(dt.size) for i in idx
        ])
        if initial_law is None:
            x = np.full(len(idx), float(x0))
        else:
            x = np.array([initial_law.draw(master_seed, i) for i in idx])
        out = np.empty((len(idx), tgrid.size))
        out[:, 0] = x
        mark = 1
        for k in range(dt.size):
            sigma = np.asarray(evaluate_sigma(model, np.full(x.shape, times[k]), x), dtype=float)
            x = x + np.sqrt(np.maximum(sigma, 0.0)) * sqrt_dt[k] * noise[:, k]
            if mark < marks.size and k + 1 == marks[mark]:
                out[:, mark] = x
                mark += 1
        samples[lo:lo + len(idx)] = out
    _LOG.info("Euler-Maruyama: %d paths, %d steps", N, dt.size)
    return MarginalEnsemble(tgrid, samples, master_seed, Provenance.EULER_MARUYAMA, None, {"step": step})


# --- CSV artifacts -------------------------------------------------------------


def write_ensemble_csv(ens: MarginalEnsemble, target: str | Path) -> Path:
    """Write `path_id,t,value` rows, 17 significant digits."""
    target = Path(target)
    with open(target, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["path_id", "t", "value"])
        ts = [format(t, f".{CSV_DIGITS}g") for t in ens.tgrid]
        for i, row in enumerate(ens.samples):
            for t, v in zip(ts, row, strict=True):
                writer.writerow([i, t, format(v, f".{CSV_DIGITS}g")])
    return target


def read_ensemble_csv(source: str | Path) -> MarginalEnsemble:
    """Load a `path_id,t,value` file as an external ensemble; every path must cover the same grid."""
    rows: dict[int, list[tuple[float, float]]] = {}
    with open(source, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["path_id", "t", "value"]:
            raise InvalidArgumentError(f"unexpected ensemble header {header!r}")
        for line, record in enumerate(reader, start=2):
            try:
                rows.setdefault(int(record[0]), []).append((float(record[1]), float(record[2])))
            except (ValueError, IndexError) as ex:
                raise InvalidArgumentError(f"bad ensemble row at line {line}: {record!r}") from ex
    if not rows:
        raise InvalidArgumentError("ensemble file has no rows")
    ids = sorted(rows)
    tgrid = np.array([t for t, _ in rows[ids[0]]])
    samples = np.empty((len(ids), tgrid.size))
    for k, i in enumerate(ids):
        times = np.array([t for t, _ in rows[i]])
        if times.shape != tgrid.shape or not np.array_equal(times, tgrid):
            raise InvalidArgumentError(f"path {i} does not share the common grid")
        samples[k] = [v for _, v in rows[i]]
    return MarginalEnsemble(tgrid, samples, None, Provenance.EXTERNAL)
