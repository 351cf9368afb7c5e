"""
Constants, enums and tolerance defaults for the time-change lab.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

from errors import ConfigError

SCHEMA_VERSION = 1
WORKERS_ENV = "TCLAB_WORKERS"
LOG_LEVEL_ENV = "TCLAB_LOG_LEVEL"

# Smallest H treated as nonzero by the blow-up scan.
H_FLOOR = 2.2250738585072014e-308

# Significant digits for CSV artifacts (float64 round trip).
CSV_DIGITS = 17

# Kolmogorov-Smirnov critical constants c(alpha).
KS_CRITICAL = {
    0.10: 1.224,
    0.05: 1.358,
    0.01: 1.628,
    0.001: 1.949,
}


def ks_critical(alpha: float) -> float:
    """Return c(alpha) for the two-sample KS threshold."""
    if alpha in KS_CRITICAL:
        return KS_CRITICAL[alpha]
    return math.sqrt(-math.log(alpha / 2.0) / 2.0)


class PathKind(str, Enum):
    """How an RCLL path between breakpoints is to be read."""

    PIECEWISE_CONSTANT = "piecewise_constant"
    MESH_SAMPLED = "mesh_sampled"


class Terminal(str, Enum):
    """Which side of the clock dichotomy a solve ended on."""

    HIT_S = "hit_S"
    HORIZON = "horizon"


class ZeroVerdict(str, Enum):
    """Membership of a zero of H in I(H)."""

    IN_IH = "in_IH"
    NOT_IN_IH = "not_in_IH"
    INCONCLUSIVE = "inconclusive"


class Provenance(str, Enum):
    """Pipeline that produced a marginal ensemble."""

    TIMECHANGE = "timechange"
    EULER_MARUYAMA = "euler_maruyama"
    EXTERNAL = "external"


class Verdict(str, Enum):
    """Outcome of a harness check."""

    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"
    SKIPPED = "skipped"


class CheckName(str, Enum):
    """Checks a scenario may request, in dependency order."""

    CLASSIFY = "classify"
    REGULARITY = "regularity"
    PATHWISE = "pathwise"
    FP = "fp"
    MARTINGALE = "martingale"
    SPACETIME = "spacetime"
    UNIQUENESS = "uniqueness"


class Metric(str, Enum):
    """Distance used when comparing states."""

    EUCLIDEAN = "euclidean"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class Tolerances:  # pylint: disable=too-many-instance-attributes
    """Numerical knobs shared by every check; overridable per scenario."""

    solver_tol: float = 1e-9
    sub_grid_factor: int = 4
    divergence_threshold: float = 1e8
    cauchy_tol: float = 1e-6
    min_shell_width: float = 1e-10
    shell_ratio: float = 0.5
    ks_alpha: float = 0.01
    mc_sigmas: float = 3.0
    endpoint_delta: float = 1e-3
    max_horizon_retries: int = 10
    clock_snap: float = 1e-8
    lattice_points: int = 200
    verify_lipschitz: bool = False

    def with_overrides(self, overrides: dict[str, Any] | None) -> "Tolerances":
        """Return a copy with the given fields replaced, rejecting unknown keys."""
        if not overrides:
            return self
        known = {f.name: f for f in dataclasses.fields(self)}
        cleaned: dict[str, Any] = {}
        for key, value in overrides.items():
            if key not in known:
                raise ConfigError("unknown tolerance", field=f"tolerances.{key}")
            current = getattr(self, key)
            try:
                if isinstance(current, bool):
                    cleaned[key] = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
                else:
                    cleaned[key] = type(current)(value)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"bad tolerance value {value!r}", field=f"tolerances.{key}") from err
        return dataclasses.replace(self, **cleaned)


DEFAULT_TOLERANCES = Tolerances()
