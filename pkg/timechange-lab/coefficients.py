"""
Separable coefficient models sigma(t, x) = H(x) * sigma_tilde(t, x) for t <= t0.

Holds the preset building blocks, zero classification by shell quadrature, the
lattice check of the regularity assumptions and the blow-up time scan shared
with the time-change solver.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from const import H_FLOOR, PathKind, Tolerances, ZeroVerdict, DEFAULT_TOLERANCES
from errors import InvalidArgumentError, OutOfRangeError
from paths import RcllPath, evaluate, occupation_time

_LOG = logging.getLogger(__name__)

ZERO_MATCH = 1e-12


# --- H building blocks -------------------------------------------------------


@dataclass(frozen=True)
class ConstantH:
    """H(x) = value."""

    value: float = 1.0

    def __call__(self, x):
        return np.full(np.shape(x), float(self.value))


@dataclass(frozen=True)
class PowerLawH:
    """H(x) = scale * |x - center|^exponent."""

    exponent: float
    center: float = 0.0
    scale: float = 1.0

    def __call__(self, x):
        return self.scale * np.abs(np.asarray(x, dtype=float) - self.center) ** self.exponent


@dataclass(frozen=True)
class SineShiftH:
    """H(x) = offset + amplitude * sin(x); zero-free when offset > |amplitude|."""

    offset: float = 2.0
    amplitude: float = 1.0

    def __call__(self, x):
        return self.offset + self.amplitude * np.sin(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class TableH:
    """H read off a finite table of states, for chains."""

    states: tuple[float, ...]
    values: tuple[float, ...]
    default: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        states = np.asarray(self.states, dtype=float)
        out = np.full(x.shape, float(self.default))
        for s, v in zip(states, self.values, strict=True):
            out = np.where(np.abs(x - s) <= ZERO_MATCH, v, out)
        return out


# --- sigma_tilde building blocks ----------------------------------------------


@dataclass(frozen=True)
class ConstantSigma:
    """sigma_tilde(t, x) = value."""

    value: float = 1.0

    def __call__(self, t, x):
        return np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, float(self.value))


@dataclass(frozen=True)
class LinearTimeSigma:
    """sigma_tilde(t, x) = intercept + slope * t."""

    intercept: float = 1.0
    slope: float = 1.0

    def __call__(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return self.intercept + self.slope * t


@dataclass(frozen=True)
class ExpSpaceSigma:
    """sigma_tilde(t, x) = exp(rate * x)."""

    rate: float = 1.0

    def __call__(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return np.exp(self.rate * x)


@dataclass(frozen=True)
class ZeroSpec:
    """Declared zero of H with local law H(x) ~ coefficient * |x - point|^exponent."""

    point: float
    exponent: float | None = None
    coefficient: float = 1.0


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    """
    sigma(t, x) = H(x) * sigma_tilde(t, x) on [0, t0], 0 afterwards.

    `shift` moves the time origin: the model is read at t + shift.
    `zero_free` declares H > 0 everywhere; otherwise zeros lists what is known.
    """

    h: Callable[[Any], Any]
    sigma_tilde: Callable[[Any, Any], Any]
    t0: float
    zeros: tuple[ZeroSpec, ...] = ()
    zero_free: bool = False
    declared_bounds: tuple[float, float, float] | None = None
    shift: float = 0.0
    description: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.t0 > 0:
            raise InvalidArgumentError(f"t0 must be positive, got {self.t0}")
        if self.shift < 0:
            raise InvalidArgumentError("time shift must be nonnegative")
        if self.declared_bounds is not None:
            c1, c2, c3 = self.declared_bounds
            if not (c1 >= 0 and 0 < c2 <= c3):
                raise InvalidArgumentError("declared bounds need C1 >= 0 and 0 < C2 <= C3")
        object.__setattr__(self, "zeros", tuple(self.zeros))

    @property
    def effective_t0(self) -> float:
        """Cutoff time in the model's own (shifted) clock."""
        return self.t0 - self.shift

    def zero_at(self, z: float) -> ZeroSpec | None:
        """Declared zero at z, if any."""
        for spec in self.zeros:
            if abs(spec.point - z) <= ZERO_MATCH:
                return spec
        return None


def evaluate_sigma(model: CoefficientModel, t, x):
    """
    Pointwise sigma(t, x); 0 once t + shift exceeds t0.

    :param model: coefficient model.
    :param t: time(s), broadcast against x.
    :param x: state(s).
    :return: float for scalar input, array otherwise.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    t_eff = t + model.shift
    if np.any(t < 0):
        raise OutOfRangeError("sigma is defined for t >= 0 only")
    active = t_eff <= model.t0
    value = np.asarray(model.h(x), dtype=float) * np.asarray(
        model.sigma_tilde(np.minimum(t_eff, model.t0), x), dtype=float
    )
    out = np.where(active, value, 0.0)
    return float(out) if out.ndim == 0 else out


def shifted(model: CoefficientModel, s0: float) -> CoefficientModel:
    """The same model read from time s0 on: sigma'(t, x) = sigma(s0 + t, x)."""
    if s0 < 0:
        raise InvalidArgumentError("shift must be nonnegative")
    return dataclasses.replace(model, shift=model.shift + float(s0))


# --- presets ---------------------------------------------------------------


def _h_constant(value: float = 1.0):
    if value < 0:
        raise InvalidArgumentError("H must be nonnegative")
    return ConstantH(value), (), value > 0


def _h_zero():
    return ConstantH(0.0), (), False


def _h_power_law(exponent: float, center: float = 0.0, scale: float = 1.0, declare_exponent: bool = True):
    if not exponent > 0 or not scale > 0:
        raise InvalidArgumentError("power-law H needs positive exponent and scale")
    zero = ZeroSpec(center, exponent if declare_exponent else None, scale)
    return PowerLawH(exponent, center, scale), (zero,), False


def _h_sine_shift(offset: float = 2.0, amplitude: float = 1.0):
    if not offset > abs(amplitude):
        raise InvalidArgumentError("sine_shift H needs offset > |amplitude|")
    return SineShiftH(offset, amplitude), (), True


def _h_table(states: Sequence[float], values: Sequence[float], default: float = 1.0):
    if len(states) != len(values):
        raise InvalidArgumentError("H table needs one value per state")
    if min(list(values) + [default]) < 0:
        raise InvalidArgumentError("H must be nonnegative")
    zeros = tuple(ZeroSpec(float(s)) for s, v in zip(states, values) if v == 0)
    free = not zeros and default > 0
    return TableH(tuple(map(float, states)), tuple(map(float, values)), default), zeros, free


H_PRESETS: dict[str, Callable[..., tuple]] = {
    "constant": _h_constant,
    "zero": _h_zero,
    "power_law": _h_power_law,
    "sine_shift": _h_sine_shift,
    "table": _h_table,
}

SIGMA_PRESETS: dict[str, Callable[..., Callable]] = {
    "constant": ConstantSigma,
    "linear_t": LinearTimeSigma,
    "exp_x": ExpSpaceSigma,
}


def _split(cfg: dict[str, Any], what: str) -> tuple[str, dict[str, Any]]:
    cfg = dict(cfg)
    try:
        kind = cfg.pop("kind")
    except KeyError as ex:
        raise InvalidArgumentError(f"{what} preset needs a 'kind'") from ex
    return kind, cfg


def build_model(
    h_cfg: dict[str, Any],
    sigma_cfg: dict[str, Any],
    t0: float,
    declared_bounds: Sequence[float] | None = None,
) -> CoefficientModel:
    """Build a model from preset dicts such as {"kind": "power_law", "exponent": 2}."""
    h_kind, h_params = _split(h_cfg, "H")
    s_kind, s_params = _split(sigma_cfg, "sigma_tilde")
    if h_kind not in H_PRESETS:
        raise InvalidArgumentError(f"unknown H preset {h_kind!r}")
    if s_kind not in SIGMA_PRESETS:
        raise InvalidArgumentError(f"unknown sigma_tilde preset {s_kind!r}")
    try:
        h, zeros, zero_free = H_PRESETS[h_kind](**h_params)
        sigma_tilde = SIGMA_PRESETS[s_kind](**s_params)
    except TypeError as ex:
        raise InvalidArgumentError(f"bad preset parameters: {ex}") from ex
    bounds = tuple(float(b) for b in declared_bounds) if declared_bounds is not None else None
    return CoefficientModel(
        h=h,
        sigma_tilde=sigma_tilde,
        t0=float(t0),
        zeros=zeros,
        zero_free=zero_free,
        declared_bounds=bounds,
        description={"H": dict(h_cfg), "sigma_tilde": dict(sigma_cfg), "t0": float(t0)},
    )


# --- zero classification ---------------------------------------------------


@dataclass(frozen=True)
class QuadratureSettings:
    """Shell quadrature controls for `classify_zero`."""

    shell_ratio: float = 0.5
    min_shell_width: float = 1e-10
    divergence_threshold: float = 1e8
    cauchy_tol: float = 1e-6
    nodes: int = 32
    use_declared: bool = True

    @classmethod
    def from_tolerances(cls, tol: Tolerances, use_declared: bool = True) -> QuadratureSettings:
        """Pick the shell controls out of a Tolerances set."""
        return cls(
            shell_ratio=tol.shell_ratio,
            min_shell_width=tol.min_shell_width,
            divergence_threshold=tol.divergence_threshold,
            cauchy_tol=tol.cauchy_tol,
            use_declared=use_declared,
        )


@dataclass(frozen=True)
class ZeroClassification:
    """Verdict on whether 1/H fails to be integrable around a zero."""

    point: float
    verdict: ZeroVerdict
    evidence: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"point": self.point, "verdict": self.verdict.value, "evidence": self.evidence}


def _shell_integral(h, z: float, inner: float, outer: float, nodes, weights) -> float:
    half = 0.5 * (outer - inner)
    y = inner + half * (nodes + 1.0)
    hv = np.concatenate((np.asarray(h(z + y), dtype=float), np.asarray(h(z - y), dtype=float)))
    if np.any(hv <= 0) or not np.all(np.isfinite(hv)):
        return float("inf")
    w = np.concatenate((weights, weights))
    return float(half * np.sum(w / hv))


def _shell_quadrature(h, z: float, epsilon: float, q: QuadratureSettings) -> tuple[ZeroVerdict, dict]:
    nodes, weights = np.polynomial.legendre.leggauss(q.nodes)
    ratio = q.shell_ratio
    outer = epsilon
    partial = 0.0
    increments: list[float] = []
    limits: list[float] = []
    shells = 0
    while outer * (1.0 - ratio) >= q.min_shell_width:
        inner = outer * ratio
        inc = _shell_integral(h, z, inner, outer, nodes, weights)
        shells += 1
        partial += inc
        increments.append(inc)
        outer = inner
        evidence = {"route": "quadrature", "shells": shells, "partial_sum": partial}
        if not np.isfinite(partial) or partial > q.divergence_threshold:
            return ZeroVerdict.IN_IH, evidence
        if len(increments) < 2 or increments[-2] <= 0:
            continue
        r = increments[-1] / increments[-2]
        evidence["increment_ratio"] = r
        # geometric tail extrapolation of the partial sums
        limit = partial + inc * r / (1.0 - r) if r < 1.0 else float("inf")
        if limit > q.divergence_threshold:
            evidence["extrapolated_limit"] = limit
            return ZeroVerdict.IN_IH, evidence
        limits.append(limit)
        if len(limits) >= 2 and abs(limits[-1] - limits[-2]) < q.cauchy_tol:
            evidence["extrapolated_limit"] = limit
            return ZeroVerdict.NOT_IN_IH, evidence

    return ZeroVerdict.INCONCLUSIVE, {
        "route": "quadrature",
        "shells": shells,
        "partial_sum": partial,
        "increment_ratio": increments[-1] / increments[-2] if len(increments) > 1 and increments[-2] > 0 else None,
    }


def classify_zero(
    model: CoefficientModel,
    z: float,
    epsilon: float = 1.0,
    quad: QuadratureSettings | None = None,
) -> ZeroClassification:
    """
    Decide whether the integral of 1/H over (z - eps, z + eps) diverges.

    Args:
        model: coefficient model.
        z: a zero of H.
        epsilon: half-width of the neighbourhood.
        quad: shell controls; `use_declared` lets a declared exponent decide directly.

    Returns:
        IN_IH when the integral diverges, NOT_IN_IH when it converges, else INCONCLUSIVE.
    """
    quad = quad or QuadratureSettings()
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    if model.zero_free:
        raise InvalidArgumentError("model is declared zero-free")
    declared = model.zero_at(z)
    if declared is None and abs(float(np.asarray(model.h(np.array([z])))[0])) > ZERO_MATCH:
        raise InvalidArgumentError(f"H({z!r}) is not zero")

    if declared is not None and declared.exponent is not None and quad.use_declared:
        verdict = ZeroVerdict.IN_IH if declared.exponent >= 1 else ZeroVerdict.NOT_IN_IH
        result = ZeroClassification(z, verdict, {"route": "declared", "exponent": declared.exponent})
    else:
        verdict, evidence = _shell_quadrature(model.h, z, epsilon, quad)
        result = ZeroClassification(z, verdict, evidence)
    _LOG.debug("Zero %g classified %s via %s", z, result.verdict, result.evidence["route"])
    return result


def classify_declared_zeros(
    model: CoefficientModel, epsilon: float = 1.0, quad: QuadratureSettings | None = None
) -> list[ZeroClassification]:
    """Classify every declared zero of the model."""
    if model.zero_free:
        return []
    return [classify_zero(model, spec.point, epsilon, quad) for spec in model.zeros]


# --- assumption lattice -----------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Lattice estimates of the regularity constants on [0, S] x window."""

    c1_est: float
    c2_est: float
    c3_est: float
    lipschitz_ok: bool
    bounds_ok: bool
    h_sup: float
    lattice_points: int

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _lattice(model: CoefficientModel, window: tuple[float, float], s_max: float, n: int):
    a, b = window
    if not b > a:
        raise InvalidArgumentError(f"window {window} is empty")
    if not s_max > 0:
        raise InvalidArgumentError("S must be positive")
    ts = np.linspace(0.0, s_max, n)
    xs = np.linspace(a, b, n)
    tt, xx = np.meshgrid(ts, xs, indexing="ij")
    return ts, xs, np.asarray(model.sigma_tilde(tt, xx), dtype=float)


def check_assumptions(
    model: CoefficientModel,
    window: tuple[float, float],
    s_max: float,
    lattice: int = 200,
) -> AssumptionReport:
    """
    Estimate C1 (time Lipschitz), C2 (lower) and C3 (upper bound) of sigma_tilde.

    The lattice is `lattice` x `lattice` over [0, S] x window; S must be below t0.
    """
    if s_max >= model.t0:
        raise InvalidArgumentError(f"S={s_max} must be below t0={model.t0}")
    if lattice < 2:
        raise InvalidArgumentError("lattice needs at least 2 points per axis")
    ts, xs, vals = _lattice(model, window, s_max, lattice)
    dt = np.diff(ts)[:, None]
    slopes = np.abs(np.diff(vals, axis=0)) / dt
    c1 = float(np.max(slopes)) if np.all(np.isfinite(slopes)) else float("inf")
    c2 = float(np.min(vals))
    c3 = float(np.max(vals))
    h_sup = float(np.max(np.asarray(model.h(xs), dtype=float)))

    lipschitz_ok = bool(np.isfinite(c1))
    bounds_ok = bool(np.isfinite(c3) and c2 > 0)
    if model.declared_bounds is not None:
        d1, d2, d3 = model.declared_bounds
        lipschitz_ok = lipschitz_ok and c1 <= d1 * (1 + 1e-9)
        bounds_ok = bounds_ok and c2 >= d2 * (1 - 1e-9) and c3 <= d3 * (1 + 1e-9)
    return AssumptionReport(c1, c2, c3, lipschitz_ok, bounds_ok, h_sup, lattice)


@functools.lru_cache(maxsize=64)
def bounded_up_to_t0(model: CoefficientModel, window: tuple[float, float], lattice: int = 200) -> bool:
    """Whether sigma_tilde stays positive and finite on the closed lattice [0, t0] x window."""
    _, _, vals = _lattice(model, window, model.t0, lattice)
    return bool(np.all(np.isfinite(vals)) and np.min(vals) > 0)


# --- blow-up time scan ------------------------------------------------------


@dataclass(frozen=True)
class BlowUp:
    """First zero hit (rho0) and divergence time (rho) of int_0^t 1/H(X_s) ds."""

    rho0: float | None
    rho: float | None
    state_at_rho: float | None
    integral: float
    mesh_step: float


def _hits_zero(model: CoefficientModel, values: np.ndarray) -> np.ndarray:
    hv = np.asarray(model.h(values), dtype=float)
    hit = hv <= H_FLOOR
    for spec in model.zeros:
        hit |= np.abs(values - spec.point) <= ZERO_MATCH
    return hit


def _segment_crossing(model: CoefficientModel, a: float, b: float) -> tuple[ZeroSpec, float] | None:
    """Declared zero in the closed range of the linear interpolant from a to b, with its fraction."""
    lo, hi = min(a, b), max(a, b)
    for spec in model.zeros:
        if lo <= spec.point <= hi:
            frac = 0.0 if a == b else abs(a - spec.point) / abs(b - a)
            return spec, frac
    return None


def _crossing_integral(spec: ZeroSpec, a: float, b: float, dt: float) -> float:
    p = spec.exponent
    one_minus = 1.0 - p
    return dt / abs(b - a) / spec.coefficient * (
        (abs(a - spec.point) ** one_minus + abs(b - spec.point) ** one_minus) / one_minus
    )


def blowup_time(model: CoefficientModel, path: RcllPath, threshold: float = 1e8) -> BlowUp:
    """
    Scan the path for the zero-hit time rho0 and the blow-up time rho.

    Jump paths contribute duration / H(value) per segment. A segment that starts on
    a zero blows up at its start. Mesh-sampled paths enter a declared zero at the
    crossing of their linear interpolant: exponent >= 1 blows up there with the
    zero as state, smaller exponents contribute their finite closed-form integral.
    """
    bp = path.breakpoints
    vals = path.values
    ends = np.append(bp[1:], path.horizon)
    durations = ends - bp
    h_vals = np.asarray(model.h(vals), dtype=float)
    hit = _hits_zero(model, vals)
    mesh = path.kind is PathKind.MESH_SAMPLED
    mesh_step = float(np.max(np.diff(bp))) if bp.size > 1 else path.horizon

    def crossing_at(k: int):
        if not mesh or k + 1 >= bp.size or vals[k] == vals[k + 1]:
            return None
        return _segment_crossing(model, vals[k], vals[k + 1])

    rho0 = None
    for k in range(bp.size):
        if hit[k]:
            rho0 = float(bp[k])
            break
        crossing = crossing_at(k)
        if crossing is not None:
            rho0 = float(bp[k] + crossing[1] * durations[k])
            break

    total = 0.0
    for k in range(bp.size):
        dur = durations[k]
        if dur <= 0:
            continue
        a = vals[k]
        if h_vals[k] <= H_FLOOR or hit[k]:
            return BlowUp(rho0, float(bp[k]), float(a), float("inf"), mesh_step)
        crossing = crossing_at(k)
        if crossing is not None and crossing[0].exponent is not None:
            spec, frac = crossing
            if spec.exponent >= 1:
                return BlowUp(rho0, float(bp[k] + frac * dur), spec.point, float("inf"), mesh_step)
            contribution = _crossing_integral(spec, a, vals[k + 1], dur)
        else:
            contribution = dur / h_vals[k]
        if total + contribution > threshold:
            rho = float(bp[k] + (threshold - total) * h_vals[k])
            rho = min(rho, float(ends[k]))
            return BlowUp(rho0, rho, float(evaluate(path, rho)), float("inf"), mesh_step)
        total += contribution
    return BlowUp(rho0, None, None, total, mesh_step)


@dataclass(frozen=True)
class RegularityVerdict:
    """Per-path comparison of rho0 and rho."""

    rho0: float | None
    rho: float | None
    consistent: bool

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def regularity_probe(
    model: CoefficientModel,
    paths: Sequence[RcllPath],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> list[RegularityVerdict]:
    """Report, per path, whether the blow-up of int 1/H(X) happens exactly at the first zero hit."""
    verdicts = []
    for path in paths:
        scan = blowup_time(model, path, tol.divergence_threshold)
        if scan.rho0 is None and scan.rho is None:
            consistent = True
        elif scan.rho0 is None or scan.rho is None:
            consistent = False
        else:
            h_at = float(np.asarray(model.h(np.array([scan.state_at_rho])))[0])
            consistent = abs(scan.rho - scan.rho0) <= scan.mesh_step + ZERO_MATCH and h_at <= H_FLOOR
        verdicts.append(RegularityVerdict(scan.rho0, scan.rho, consistent))
    inconsistent = sum(not v.consistent for v in verdicts)
    if inconsistent:
        _LOG.info("Regularity probe: %d of %d paths inconsistent", inconsistent, len(verdicts))
    return verdicts


@dataclass(frozen=True)
class RecurrenceTrend:
    """Mean occupation time near the start as the horizon grows."""

    horizons: tuple[float, ...]
    mean_occupation: tuple[float, ...]
    growth_ratio: float

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def recurrence_trend(paths: Sequence[RcllPath], radius: float, horizons: Sequence[float]) -> RecurrenceTrend:
    """
    Mean time spent within `radius` of the starting point up to each horizon.

    Unbounded growth is the empirical signature of recurrence; growth_ratio is
    the ratio of the means at the last two horizons (NaN with a single horizon).
    """
    if not paths:
        raise InvalidArgumentError("need at least one path")
    horizons = tuple(sorted(float(h) for h in horizons))
    if not horizons:
        raise InvalidArgumentError("need at least one horizon")
    means = []
    for upto in horizons:
        occ = [occupation_time(p, float(p.values[0]), radius, upto) for p in paths]
        means.append(float(np.mean(occ)))
    if len(means) < 2:
        growth = float("nan")
    else:
        growth = means[-1] / means[-2] if means[-2] > 0 else float("inf")
    return RecurrenceTrend(horizons, tuple(means), growth)
