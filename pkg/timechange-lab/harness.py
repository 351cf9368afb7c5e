"""
Scenario orchestration.

Runs the requested checks of a scenario in dependency order, sharing the
simulated ensembles between them, and collects one verdict per check.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

from __future__ import annotations

import functools
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import report
from coefficients import (QuadratureSettings, bounded_up_to_t0, check_assumptions, classify_zero, recurrence_trend,
                          regularity_probe, shifted)
from config import Scenario
from const import CheckName, Metric, Verdict, ZeroVerdict
from errors import DegenerateRegimeError
from fokkerplanck import (MarginalEnsemble, PathTask, base_paths, construct_path, euler_maruyama_marginals,
                          fp_residual, simulate_marginals, spacetime_martingale_residual, start_window,
                          uniqueness_crosscheck, write_ensemble_csv)
from generators import martingale_residual
from paths import BrownianMotion, Ctmc, write_path_csv
from pool import default_workers, map_indexed
from registry import check_handler, get_check
from timechange import (apply_time_change, change_of_variables_residual, export_time_change_csv,
                        fixed_point_residual, forward_euler_time_change, splice_frozen_state)
from utils import validate_members_resolve

_LOG = logging.getLogger(__name__)


@dataclass
class CheckResult:
    """Verdict of one check, with its evidence and artifact file names."""

    verdict: Verdict
    reason: str | None = None
    details: dict[str, Any] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    seconds: float = 0.0

    @classmethod
    def skipped(cls, reason: str) -> CheckResult:
        """A check that did not run."""
        return cls(Verdict.SKIPPED, reason)

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "reason": self.reason,
            "details": self.details,
            "artifacts": self.artifacts,
            "seconds": self.seconds,
        }


@dataclass
class RunReport:
    """Consolidated result of a scenario run."""

    scenario: dict[str, Any]
    scenario_hash: str
    seed: int
    version: str
    checks: dict[str, CheckResult]
    wall_clock_seconds: float = 0.0

    @property
    def failed(self) -> bool:
        """Whether any check failed."""
        return any(r.verdict is Verdict.FAIL for r in self.checks.values())

    @property
    def exit_code(self) -> int:
        """0 iff no check failed."""
        return 1 if self.failed else 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "version": self.version,
            "checks": {name: result.to_dict() for name, result in self.checks.items()},
            "wall_clock_seconds": self.wall_clock_seconds,
        }


class RunContext:
    """Shared state of one run: scenario, output directory and lazily built ensembles."""

    def __init__(self, scenario: Scenario, output_dir: str | Path, workers: int) -> None:
        self.scenario = scenario
        self.output_dir = report.ensure_output_dir(output_dir)
        self.workers = workers
        self._ensembles: dict[float, MarginalEnsemble] = {}

    @property
    def base_horizon(self) -> float:
        """Initial base-path horizon."""
        mc = self.scenario.monte_carlo
        return 2.0 * self.scenario.model.t0 if mc.base_horizon is None else mc.base_horizon

    def simulate(self, s0: float = 0.0) -> MarginalEnsemble:
        """Time-changed ensemble for the coefficient shifted by s0, built once per shift."""
        s0 = float(s0)
        if s0 not in self._ensembles:
            sc = self.scenario
            model = sc.model if s0 == 0.0 else shifted(sc.model, s0)
            self._ensembles[s0] = simulate_marginals(
                sc.process, model, sc.monte_carlo.N, sc.tgrid, sc.monte_carlo.mesh,
                sc.monte_carlo.master_seed, self.workers, sc.tolerances, sc.monte_carlo.base_horizon,
                sc.initial_law,
            )
        return self._ensembles[s0]

    @functools.cached_property
    def base_paths(self):
        """Untransformed base paths with the ensemble's seeds."""
        sc = self.scenario
        return base_paths(sc.process, self.base_horizon, sc.monte_carlo.mesh, sc.monte_carlo.master_seed,
                          sc.monte_carlo.N, sc.initial_law)

    def artifact(self, name: str) -> tuple[Path, str]:
        """Absolute target and report name of an artifact."""
        return self.output_dir / name, name


def _metric(scenario: Scenario) -> Metric:
    return Metric.DISCRETE if isinstance(scenario.process, Ctmc) else Metric.EUCLIDEAN


@check_handler(CheckName.CLASSIFY)
def _check_classify(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    model = sc.model
    if model.zero_free:
        return CheckResult.skipped("H is declared zero-free")
    points = sc.classify.zeros if sc.classify.zeros is not None else tuple(z.point for z in model.zeros)
    if not points:
        return CheckResult.skipped("no declared zeros")

    declared = QuadratureSettings.from_tolerances(sc.tolerances, use_declared=sc.classify.use_declared)
    quadrature = QuadratureSettings.from_tolerances(sc.tolerances, use_declared=False)
    verdict = Verdict.PASS
    zeros = []
    for z in points:
        primary = classify_zero(model, z, sc.classify.epsilon, declared)
        numeric = classify_zero(model, z, sc.classify.epsilon, quadrature)
        zeros.append({"point": z, "primary": primary.to_dict(), "quadrature": numeric.to_dict()})
        if primary.verdict is ZeroVerdict.INCONCLUSIVE and verdict is Verdict.PASS:
            verdict = Verdict.INCONCLUSIVE
        if ZeroVerdict.INCONCLUSIVE not in (primary.verdict, numeric.verdict) and primary.verdict != numeric.verdict:
            verdict = Verdict.FAIL
        if numeric.verdict is ZeroVerdict.INCONCLUSIVE:
            _LOG.warning("Quadrature classification of zero %g is inconclusive", z)
    return CheckResult(verdict, details={"zeros": zeros})


@check_handler(CheckName.REGULARITY)
def _check_regularity(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    settings = sc.regularity
    mc = sc.monte_carlo
    coarse = base_paths(sc.process, ctx.base_horizon, mc.mesh, mc.master_seed, settings.paths, sc.initial_law)
    fine = base_paths(sc.process, ctx.base_horizon, mc.mesh / settings.refine, mc.master_seed,
                      settings.paths, sc.initial_law)
    coarse_v = regularity_probe(sc.model, coarse, sc.tolerances)
    fine_v = regularity_probe(sc.model, fine, sc.tolerances)

    consistent = float(np.mean([v.consistent for v in coarse_v]))
    crossing = [i for i, v in enumerate(fine_v) if v.rho0 is not None]
    inconsistent_crossing = (float(np.mean([not fine_v[i].consistent for i in crossing]))
                             if crossing else None)
    horizons = tuple(ctx.base_horizon * k for k in (0.25, 0.5, 1.0))
    trend = recurrence_trend(coarse, settings.recurrence_radius, horizons)
    details = {
        "expect": settings.expect,
        "consistent_fraction": consistent,
        "consistent_fraction_refined": float(np.mean([v.consistent for v in fine_v])),
        "crossing_paths_refined": len(crossing),
        "inconsistent_crossing_fraction_refined": inconsistent_crossing,
        "recurrence": trend.to_dict(),
    }
    if settings.expect == "regular":
        verdict = Verdict.PASS if consistent >= 0.99 else Verdict.FAIL
    elif inconsistent_crossing is None:
        return CheckResult(Verdict.INCONCLUSIVE, "no path reached a zero", details)
    else:
        verdict = Verdict.PASS if inconsistent_crossing >= 0.5 else Verdict.FAIL
    return CheckResult(verdict, details=details)


def _assumptions(sc: Scenario) -> dict[str, Any]:
    """Lattice estimates of the sigma_tilde constants up to the last grid time below t0."""
    t0 = sc.model.t0
    s_max = float(sc.tgrid[-1]) if sc.tgrid[-1] < t0 else t0 * (1.0 - sc.tolerances.endpoint_delta)
    return check_assumptions(sc.model, start_window(sc.process), s_max, sc.tolerances.lattice_points).to_dict()


@dataclass(frozen=True)
class _PathwiseJob:
    coarse: PathTask
    fine: PathTask
    metric: Metric
    euler: bool


def pathwise_sample(job: _PathwiseJob) -> dict[str, Any]:
    """Fixed-point residuals of one path index at the coarse and refined mesh."""
    out: dict[str, Any] = {}
    for label, task in (("coarse", job.coarse), ("fine", job.fine)):
        base, tc = construct_path(task)
        base = splice_frozen_state(base, tc)
        x = apply_time_change(base, tc)
        out[label] = fixed_point_residual(base, x, task.model, tc.tgrid, job.metric)
        if label == "coarse":
            out["frozen_from"] = tc.frozen_from
            out["post_freeze"] = (fixed_point_residual(base, x, task.model, tc.tgrid, job.metric,
                                                       start=tc.frozen_from, anchor=float(tc.tau[tc.frozen_from]))
                                  if tc.frozen_from is not None else None)
            out["change_of_variables"] = float(np.max(change_of_variables_residual(
                base, tc, task.model, np.ones_like, x)))
            if job.euler:
                try:
                    euler = forward_euler_time_change(base, task.model, tc.tgrid)
                    out["euler_gap"] = float(np.max(np.abs(euler.tau - tc.tau)))
                except DegenerateRegimeError:
                    out["euler_gap"] = None
    return out


@check_handler(CheckName.PATHWISE)
def _check_pathwise(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    mc = sc.monte_carlo
    settings = sc.pathwise
    closed = bounded_up_to_t0(sc.model, start_window(sc.process), sc.tolerances.lattice_points)

    def _task(i: int, mesh: float) -> PathTask:
        return PathTask(sc.process, sc.model, sc.tgrid, mesh, mc.master_seed, i, ctx.base_horizon,
                        sc.tolerances, sc.initial_law, closed)

    metric = _metric(sc)
    jobs = [_PathwiseJob(_task(i, mc.mesh), _task(i, mc.mesh / settings.refine), metric, sc.model.zero_free)
            for i in range(settings.paths)]
    samples = map_indexed(pathwise_sample, jobs, ctx.workers)

    refinement_ok = all(s["coarse"] <= 2.0 * s["fine"] + 1e-8 for s in samples)
    post = [s["post_freeze"] for s in samples if s["post_freeze"] is not None]
    freeze_ok = all(p == 0.0 for p in post)
    gaps = [s["euler_gap"] for s in samples if s.get("euler_gap") is not None]

    first_base, first_tc = construct_path(jobs[0].coarse)
    path_csv, path_name = ctx.artifact("base_path_0.csv")
    tc_csv, tc_name = ctx.artifact("timechange_path_0.csv")
    write_path_csv(first_base, path_csv)
    export_time_change_csv(first_tc, tc_csv)

    details = {
        "paths": settings.paths,
        "refine": settings.refine,
        "max_residual": max(s["coarse"] for s in samples),
        "max_residual_refined": max(s["fine"] for s in samples),
        "frozen_paths": len(post),
        "max_post_freeze_residual": max(post) if post else None,
        "max_change_of_variables": max(s["change_of_variables"] for s in samples),
        "max_euler_gap": max(gaps) if gaps else None,
        "solver_stats_path_0": first_tc.solver_stats,
        "assumptions": _assumptions(sc),
    }
    verdict = Verdict.PASS if refinement_ok and freeze_ok else Verdict.FAIL
    return CheckResult(verdict, details=details, artifacts={"base_path": path_name, "time_change": tc_name})


@check_handler(CheckName.FP)
def _check_fp(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    ens = ctx.simulate()
    target, name = ctx.artifact("ensemble.csv")
    write_ensemble_csv(ens, target)
    result = fp_residual(ens, sc.process, sc.model, sc.dictionary, sc.tolerances.mc_sigmas)
    verdict = Verdict.PASS if result.passed else Verdict.FAIL
    return CheckResult(verdict, details=result.to_dict(), artifacts={"ensemble": name})


@check_handler(CheckName.MARTINGALE)
def _check_martingale(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    tol = sc.tolerances
    ens = ctx.simulate()
    rows = [ens.row_path(i) for i in range(ens.n_paths)]
    details: dict[str, Any] = {"homogeneous": [], "inhomogeneous": []}
    passed = True
    for f in sc.dictionary:
        homogeneous = martingale_residual(ctx.base_paths, sc.process, f, None, sc.tgrid, tol.sub_grid_factor)
        inhomogeneous = martingale_residual(rows, sc.process, f, sc.model, sc.tgrid, tol.sub_grid_factor)
        for key, stats in (("homogeneous", homogeneous), ("inhomogeneous", inhomogeneous)):
            ok = stats.within(tol.mc_sigmas)
            passed &= ok
            details[key].append({"function": f.name, "passed": ok, **stats.to_dict()})
    return CheckResult(Verdict.PASS if passed else Verdict.FAIL, details=details)


@check_handler(CheckName.SPACETIME)
def _check_spacetime(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    tol = sc.tolerances
    passed = True
    shifts = []
    for s0 in sc.spacetime.s0:
        ens = ctx.simulate(s0)
        per_f = []
        for f in sc.dictionary:
            stats = spacetime_martingale_residual(ens, s0, sc.process, sc.model, f, sc.spacetime.cutoff,
                                                  tol.sub_grid_factor)
            ok = stats.within(tol.mc_sigmas)
            passed &= ok
            per_f.append({"function": f.name, "passed": ok, "exact_zero": bool(np.all(stats.mean == 0.0)),
                          **stats.to_dict()})
        shifts.append({"s0": s0, "functions": per_f})
    return CheckResult(Verdict.PASS if passed else Verdict.FAIL, details={"shifts": shifts})


@check_handler(CheckName.UNIQUENESS)
def _check_uniqueness(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    mc = sc.monte_carlo
    if not isinstance(sc.process, BrownianMotion):
        return CheckResult.skipped("the Euler-Maruyama oracle needs a Brownian base")
    if not sc.model.zero_free:
        return CheckResult.skipped("the Euler-Maruyama oracle needs H bounded away from 0")
    step = mc.em_step if mc.em_step is not None else min(mc.mesh, float(np.min(np.diff(sc.tgrid))))
    em = euler_maruyama_marginals(sc.model, sc.process.x0, mc.N, sc.tgrid, step, mc.master_seed, sc.initial_law)
    target, name = ctx.artifact("ensemble_euler_maruyama.csv")
    write_ensemble_csv(em, target)
    result = uniqueness_crosscheck(ctx.simulate(), em, sc.tolerances.ks_alpha)
    return CheckResult(Verdict.PASS if result.passed else Verdict.FAIL, details=result.to_dict(),
                       artifacts={"euler_maruyama": name})


def run_scenario(scenario: Scenario, output_dir: str | Path, workers: int | None = None) -> RunReport:
    """
    Run the requested checks and write the JSON report.

    Every check gets a verdict; unrequested ones are skipped with a reason.

    :raises InfeasibleScenarioError: surfaced from ensemble simulation.
    """
    started = time.perf_counter()
    workers = default_workers() if workers is None else workers
    validate_members_resolve(CheckName, get_check, _LOG)
    ctx = RunContext(scenario, output_dir, workers)
    _LOG.info("Running scenario '%s' with %d worker(s): %s", scenario.name, workers,
              ", ".join(c.value for c in scenario.checks) or "no checks")

    results: dict[str, CheckResult] = {}
    for name in CheckName:
        if name not in scenario.checks:
            results[name.value] = CheckResult.skipped("not requested")
            continue
        check_started = time.perf_counter()
        result = get_check(name)(ctx)
        result.seconds = time.perf_counter() - check_started
        results[name.value] = result
        log = _LOG.warning if result.verdict in (Verdict.SKIPPED, Verdict.INCONCLUSIVE) else _LOG.info
        log("Check %s: %s%s", name.value, result.verdict.value, f" ({result.reason})" if result.reason else "")

    run = RunReport(
        scenario=scenario.raw,
        scenario_hash=report.content_hash(scenario.raw),
        seed=scenario.monte_carlo.master_seed,
        version=report.lab_version(),
        checks=results,
        wall_clock_seconds=time.perf_counter() - started,
    )
    report.write_report(run, ctx.output_dir)
    return run


def simulate_to_csv(scenario: Scenario, output_dir: str | Path, workers: int | None = None) -> dict[str, str]:
    """Write the time-changed ensemble as CSV; returns artifact names."""
    workers = default_workers() if workers is None else workers
    ctx = RunContext(scenario, output_dir, workers)
    target, name = ctx.artifact("ensemble.csv")
    write_ensemble_csv(ctx.simulate(), target)
    return {"ensemble": name}
