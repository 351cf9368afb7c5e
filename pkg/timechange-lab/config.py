"""
Scenario configuration.

Loads one JSON scenario file per run, validates it against schema 1 and builds
the process, coefficient model, dictionary and grid it describes.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

# pylint: disable=too-few-public-methods

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from json import JSONDecodeError
from pathlib import Path
from typing import Any

import numpy as np
from coefficients import CoefficientModel, build_model
from const import SCHEMA_VERSION, CheckName, Tolerances
from errors import ConfigError, InvalidArgumentError
from fokkerplanck import InitialLaw
from generators import CutoffFunction, TestFunction, default_dictionary, test_function_from_dict
from paths import BrownianMotion, CompoundPoisson, Ctmc, ProcessSpec
from utils import normalize_check

_LOG = logging.getLogger(__name__)

MIN_PATHS = 100

_TOP_LEVEL = {
    "name", "schema", "process", "coefficient", "initial_law", "dictionary", "tgrid",
    "monte_carlo", "checks", "tolerances", "spacetime", "classify", "regularity", "pathwise",
}
_PROCESS_KEYS = {
    "brownian": {"kind", "x0"},
    "compound_poisson": {"kind", "x0", "rate", "jumps"},
    "ctmc": {"kind", "states", "rate_matrix", "initial_state"},
}
_SECTION_KEYS = {
    "coefficient": {"H", "sigma_tilde", "t0", "declared_bounds"},
    "initial_law": {"atoms", "weights"},
    "tgrid": {"points", "end"},
    "monte_carlo": {"N", "mesh", "master_seed", "base_horizon", "em_step"},
    "spacetime": {"s0", "cutoff"},
    "classify": {"epsilon", "use_declared", "zeros"},
    "regularity": {"paths", "refine", "expect", "recurrence_radius"},
    "pathwise": {"paths", "refine"},
}
_CUTOFF_KEYS = {"t_on", "t_plateau_start", "t_plateau_end", "t_off"}


class _EnhancedJSONEncoder(json.JSONEncoder):  # pylint: disable=too-few-public-methods
    """Dataclass, numpy and enum aware JSON encoder."""

    def default(self, o):
        if hasattr(o, "to_dict") and callable(o.to_dict):
            return o.to_dict()
        if dataclasses.is_dataclass(o) and not isinstance(o, type):
            return dataclasses.asdict(o)
        if isinstance(o, Enum):
            return o.value
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, Path):
            return o.as_posix()
        return super().default(o)


def dumps(data: Any, indent: int | None = 2) -> str:
    """Stable JSON text for reports and echoes."""
    return json.dumps(data, cls=_EnhancedJSONEncoder, sort_keys=True, ensure_ascii=False, indent=indent)


@dataclass(frozen=True)
class MonteCarloSettings:
    """Ensemble size, mesh and seeding."""

    N: int  # pylint: disable=invalid-name
    mesh: float = 0.01
    master_seed: int = 0
    base_horizon: float | None = None
    em_step: float | None = None


@dataclass(frozen=True)
class SpacetimeSettings:
    """Shifts s0 and the time cutoff g of the space-time check."""

    s0: tuple[float, ...]
    cutoff: CutoffFunction


@dataclass(frozen=True)
class ClassifySettings:
    """Zero classification controls."""

    epsilon: float = 1.0
    use_declared: bool = True
    zeros: tuple[float, ...] | None = None


@dataclass(frozen=True)
class RegularitySettings:
    """Regularity probe controls; `expect` is "regular" or "irregular"."""

    paths: int = 1000
    refine: int = 4
    expect: str = "regular"
    recurrence_radius: float = 1.0


@dataclass(frozen=True)
class PathwiseSettings:
    """Fixed-point refinement study controls."""

    paths: int = 100
    refine: int = 4


@dataclass(frozen=True, eq=False)
class Scenario:  # pylint: disable=too-many-instance-attributes
    """A validated scenario; `raw` keeps the parsed file for the report echo."""

    name: str
    process: ProcessSpec
    model: CoefficientModel
    dictionary: tuple[TestFunction, ...]
    tgrid: np.ndarray
    monte_carlo: MonteCarloSettings
    checks: tuple[CheckName, ...]
    tolerances: Tolerances
    spacetime: SpacetimeSettings
    classify: ClassifySettings
    regularity: RegularitySettings
    pathwise: PathwiseSettings
    initial_law: InitialLaw | None = None
    raw: dict[str, Any] = field(default_factory=dict)

    def with_overrides(
        self,
        seed: int | None = None,
        tolerances: dict[str, Any] | None = None,
        checks: tuple[CheckName, ...] | None = None,
    ) -> Scenario:
        """Copy with CLI overrides applied; the echo records them."""
        raw = json.loads(json.dumps(self.raw))
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["monte_carlo"] = dataclasses.replace(self.monte_carlo, master_seed=int(seed))
            raw.setdefault("monte_carlo", {})["master_seed"] = int(seed)
        if tolerances:
            changes["tolerances"] = self.tolerances.with_overrides(tolerances)
            raw.setdefault("tolerances", {}).update(
                {key: getattr(changes["tolerances"], key) for key in tolerances})
        if checks is not None:
            changes["checks"] = tuple(checks)
            raw["checks"] = [c.value for c in checks]
        return dataclasses.replace(self, raw=raw, **changes)


def _reject_unknown(data: Any, allowed: set[str], prefix: str) -> dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError("expected an object", field=prefix)
    for key in data:
        if key not in allowed:
            raise ConfigError("unknown field", field=f"{prefix}.{key}" if prefix else key)
    return data


def _require(data: dict[str, Any], key: str, prefix: str) -> Any:
    if key not in data:
        raise ConfigError("missing required field", field=f"{prefix}.{key}" if prefix else key)
    return data[key]


def _parse_process(data: Any) -> ProcessSpec:
    if not isinstance(data, dict):
        raise ConfigError("expected an object", field="process")
    kind = _require(data, "kind", "process")
    if kind not in _PROCESS_KEYS:
        raise ConfigError(f"unknown process kind {kind!r}", field="process.kind")
    _reject_unknown(data, _PROCESS_KEYS[kind], "process")
    try:
        match kind:
            case "brownian":
                return BrownianMotion(float(data.get("x0", 0.0)))
            case "compound_poisson":
                jumps = tuple((float(y), float(p)) for y, p in _require(data, "jumps", "process"))
                return CompoundPoisson(float(data.get("x0", 0.0)), float(_require(data, "rate", "process")), jumps)
            case _:
                return Ctmc(
                    tuple(float(s) for s in _require(data, "states", "process")),
                    np.asarray(_require(data, "rate_matrix", "process"), dtype=float),
                    int(data.get("initial_state", 0)),
                )
    except (InvalidArgumentError, TypeError, ValueError) as ex:
        raise ConfigError(str(ex), field="process") from ex


def _parse_coefficient(data: Any) -> CoefficientModel:
    _reject_unknown(data, _SECTION_KEYS["coefficient"], "coefficient")
    h_cfg = _require(data, "H", "coefficient")
    s_cfg = data.get("sigma_tilde", {"kind": "constant", "value": 1.0})
    t0 = _require(data, "t0", "coefficient")
    try:
        return build_model(h_cfg, s_cfg, float(t0), data.get("declared_bounds"))
    except (InvalidArgumentError, TypeError, ValueError) as ex:
        raise ConfigError(str(ex), field="coefficient") from ex


def _parse_dictionary(data: Any, center: float) -> tuple[TestFunction, ...]:
    if data is None:
        return tuple(default_dictionary(8, center))
    if isinstance(data, dict):
        _reject_unknown(data, {"default"}, "dictionary")
        return tuple(default_dictionary(int(data["default"]), center))
    if not isinstance(data, list) or not data:
        raise ConfigError("expected a nonempty list of test functions", field="dictionary")
    out = []
    for i, item in enumerate(data):
        try:
            out.append(test_function_from_dict(item))
        except (InvalidArgumentError, TypeError, KeyError, AttributeError) as ex:
            raise ConfigError(str(ex), field=f"dictionary[{i}]") from ex
    return tuple(out)


def _parse_checks(data: Any) -> tuple[CheckName, ...]:
    if data is None:
        return ()
    if not isinstance(data, list):
        raise ConfigError("expected a list", field="checks")
    out = []
    for i, name in enumerate(data):
        try:
            out.append(CheckName(normalize_check(str(name))))
        except ValueError as ex:
            raise ConfigError(f"unknown check {name!r}", field=f"checks[{i}]") from ex
    return tuple(dict.fromkeys(out))


def _parse_tgrid(data: Any, t0: float) -> np.ndarray:
    data = _reject_unknown(data or {}, _SECTION_KEYS["tgrid"], "tgrid")
    points = int(data.get("points", 21))
    end = float(data.get("end", t0))
    if points < 2:
        raise ConfigError("need at least 2 grid points", field="tgrid.points")
    if not 0 < end <= t0:
        raise ConfigError(f"tgrid end must lie in (0, t0={t0}]", field="tgrid.end")
    return np.linspace(0.0, end, points)


def _parse_section(data: Any, key: str, cls, **casts):
    data = _reject_unknown(data or {}, _SECTION_KEYS[key], key)
    try:
        return cls(**{k: casts[k](v) if k in casts else v for k, v in data.items()})
    except (TypeError, ValueError) as ex:
        raise ConfigError(str(ex), field=key) from ex


def _parse_spacetime(data: Any, t0: float) -> SpacetimeSettings:
    data = _reject_unknown(data or {}, _SECTION_KEYS["spacetime"], "spacetime")
    s0 = tuple(float(s) for s in data.get("s0", (0.0, 0.3 * t0, t0 + 1.0)))
    if any(s < 0 for s in s0):
        raise ConfigError("shifts must be nonnegative", field="spacetime.s0")
    cutoff_cfg = _reject_unknown(
        data.get("cutoff", {"t_on": 0.0, "t_plateau_end": 0.5 * t0, "t_off": 1.5 * t0}),
        _CUTOFF_KEYS, "spacetime.cutoff",
    )
    try:
        cutoff = CutoffFunction(**{k: float(v) for k, v in cutoff_cfg.items()})
    except (InvalidArgumentError, TypeError) as ex:
        raise ConfigError(str(ex), field="spacetime.cutoff") from ex
    return SpacetimeSettings(s0, cutoff)


def parse_scenario(data: Any) -> Scenario:
    """
    Validate a parsed scenario document.

    :param data: the decoded JSON object.
    :return: the scenario.
    :raises ConfigError: naming the offending field.
    """
    _reject_unknown(data, _TOP_LEVEL, "")
    schema = data.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {schema!r}, expected {SCHEMA_VERSION}", field="schema")
    name = str(_require(data, "name", ""))
    process = _parse_process(_require(data, "process", ""))
    model = _parse_coefficient(_require(data, "coefficient", ""))

    mc = _parse_section(_require(data, "monte_carlo", ""), "monte_carlo", MonteCarloSettings,
                        N=int, mesh=float, master_seed=int)
    if mc.N < MIN_PATHS:
        raise ConfigError(f"N={mc.N} is below the minimum of {MIN_PATHS}", field="monte_carlo.N")
    if not mc.mesh > 0:
        raise ConfigError("mesh must be positive", field="monte_carlo.mesh")

    initial_law = None
    if data.get("initial_law") is not None:
        law = _reject_unknown(data["initial_law"], _SECTION_KEYS["initial_law"], "initial_law")
        try:
            initial_law = InitialLaw(tuple(map(float, _require(law, "atoms", "initial_law"))),
                                     tuple(map(float, _require(law, "weights", "initial_law"))))
        except InvalidArgumentError as ex:
            raise ConfigError(str(ex), field="initial_law") from ex

    tolerances = Tolerances().with_overrides(_reject_unknown(data.get("tolerances") or {},
                                                            set(Tolerances.__dataclass_fields__), "tolerances"))
    classify = _parse_section(data.get("classify"), "classify", ClassifySettings,
                              epsilon=float, zeros=lambda z: tuple(map(float, z)))
    regularity = _parse_section(data.get("regularity"), "regularity", RegularitySettings, paths=int, refine=int)
    if regularity.expect not in ("regular", "irregular"):
        raise ConfigError("expect must be 'regular' or 'irregular'", field="regularity.expect")
    pathwise = _parse_section(data.get("pathwise"), "pathwise", PathwiseSettings, paths=int, refine=int)

    return Scenario(
        name=name,
        process=process,
        model=model,
        dictionary=_parse_dictionary(data.get("dictionary"), process.start),
        tgrid=_parse_tgrid(data.get("tgrid"), model.t0),
        monte_carlo=mc,
        checks=_parse_checks(data.get("checks")),
        tolerances=tolerances,
        spacetime=_parse_spacetime(data.get("spacetime"), model.t0),
        classify=classify,
        regularity=regularity,
        pathwise=pathwise,
        initial_law=initial_law,
        raw=data,
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file; JSON syntax errors carry line and column."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as ex:
        raise ConfigError(f"cannot read scenario file {path}: {ex.strerror}") from ex
    try:
        data = json.loads(text)
    except JSONDecodeError as ex:
        raise ConfigError(f"invalid JSON: {ex.msg}", line=ex.lineno, column=ex.colno) from ex
    scenario = parse_scenario(data)
    _LOG.info("Loaded scenario '%s' from %s", scenario.name, path)
    return scenario
