"""Inverse-clock solver and pathwise time change."""

import csv

import numpy as np
import pytest
from coefficients import ConstantH, CoefficientModel, build_model, shifted
from const import Metric, PathKind, Terminal
from errors import DegenerateRegimeError, HorizonExhaustedError, InvalidArgumentError, NumericFailureError
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from paths import BrownianMotion, Ctmc, RcllPath, evaluate_many, sample_path
from timechange import (TimeChange, apply_time_change, build_time_change, change_of_variables_residual,
                        export_time_change_csv, fixed_point_residual, forward_euler_time_change,
                        solve_caratheodory, splice_frozen_state)
from utils import derive_seed

TGRID = np.linspace(0.0, 1.0, 21)
CONSTANT = {"kind": "constant", "value": 1.0}
ABSORBING_CHAIN = Ctmc((0.0, 1.0, 2.0), np.array([[-1.0, 1.0, 0.0], [0.5, -1.0, 0.5], [0.0, 0.0, 0.0]]), 0)


@pytest.fixture
def base_path(brownian):
    return sample_path(brownian, 2.0, 0.01, 2024)


@pytest.fixture
def absorbing_model():
    return build_model({"kind": "table", "states": [0.0, 1.0, 2.0], "values": [1.0, 2.0, 0.0]}, CONSTANT, 2.0)


@pytest.fixture
def absorbed_path():
    """0 until 0.7, 1 until 1.3, then absorbed at 2."""
    return RcllPath(np.array([0.0, 0.7, 1.3]), np.array([0.0, 1.0, 2.0]), 3.0)


def test_identity_clock():
    clock = solve_caratheodory(lambda r, s: 1.0, 10.0, 3.0)
    assert clock.terminal is Terminal.HORIZON
    assert clock.hit_time is None
    assert_allclose(clock.value_at(np.array([0.0, 1.0, 2.5, 3.0])), [0.0, 1.0, 2.5, 3.0], atol=1e-12)


def test_separable_clock_matches_closed_form():
    clock = solve_caratheodory(lambda r, s: 1.0 / (1.0 + r), 10.0, 2.0, 1e-10, breakpoints=(0.5, 1.0, 2.0))
    s = np.array([0.5, 1.0, 2.0])
    assert_allclose(clock.value_at(s), np.sqrt(1.0 + 2.0 * s) - 1.0, atol=1e-8)


def test_clock_hits_target():
    clock = solve_caratheodory(lambda r, s: 2.0, 1.0, 3.0)
    assert clock.terminal is Terminal.HIT_S
    assert clock.hit_time == pytest.approx(0.5, abs=1e-12)
    assert clock.values[-1] == 1.0


def test_clock_level_crossings():
    clock = solve_caratheodory(lambda r, s: 1.0 if s < 1.0 else 3.0, 4.0, 3.0, breakpoints=(1.0,), levels=(0.5, 2.5))
    assert_allclose(clock.level_times, [0.5, 1.5, 2.0], atol=1e-9)


def test_solver_rejects_bad_arguments():
    with pytest.raises(InvalidArgumentError):
        solve_caratheodory(lambda r, s: 1.0, 0.0, 1.0)
    with pytest.raises(NumericFailureError):
        solve_caratheodory(lambda r, s: -1.0, 1.0, 1.0)


def test_lipschitz_verification():
    clock = solve_caratheodory(lambda r, s: 1.0 + 2.0 * r, 1.0, 5.0, verify=True, verify_points=11)
    assert clock.stats["lipschitz_est"] == pytest.approx(2.0)
    with pytest.raises(NumericFailureError):
        solve_caratheodory(lambda r, s: 1.0 / r if r > 0 else np.inf, 1.0, 5.0, verify=True)


def test_identity_time_change(unit_model, base_path):
    tc = build_time_change(base_path, unit_model, TGRID)
    assert_allclose(tc.tau, TGRID, atol=1e-9)
    assert tc.rho is None and tc.frozen_from is None
    assert tc.solver_stats["endpoint"] == "plain"


def test_deterministic_clock(linear_clock_model, base_path):
    tc = build_time_change(base_path, linear_clock_model, TGRID)
    assert_allclose(tc.tau, TGRID + TGRID**2 / 2.0, atol=1e-8)


def test_absorbed_chain_freezes(absorbing_model, absorbed_path):
    tgrid = np.linspace(0.0, 2.0, 21)
    tc = build_time_change(absorbed_path, absorbing_model, tgrid)
    assert tc.rho == 1.3
    assert tc.frozen_from in (10, 11)
    assert np.all(tc.tau[tc.frozen_from:] == 1.3)
    assert_allclose(tc.tau[:8], tgrid[:8], atol=1e-9)
    assert_allclose(tc.tau[8:10], [0.9, 1.1], atol=1e-9)

    x = apply_time_change(absorbed_path, tc)
    assert np.all(x.values[tc.frozen_from:] == 2.0)
    assert fixed_point_residual(absorbed_path, x, absorbing_model, tgrid, Metric.DISCRETE,
                                start=tc.frozen_from, anchor=tc.rho) == 0.0
    assert_array_equal(tc.frozen_mask(), np.arange(21) >= tc.frozen_from)


def test_unbounded_sigma_tilde_uses_endpoint_delta():
    model = CoefficientModel(h=ConstantH(1.0), sigma_tilde=lambda t, x: 1.0 / (1.0 - np.asarray(t)) + 0 * x,
                             t0=1.0, zero_free=True)
    path = RcllPath(np.array([0.0]), np.array([0.0]), 10.0)
    with np.errstate(divide="ignore"):
        tc = build_time_change(path, model, TGRID)
    assert tc.solver_stats["endpoint"] == "delta"
    assert tc.tau[-1] == pytest.approx(-np.log(1e-3), abs=1e-6)
    assert tc.tau[-2] == pytest.approx(-np.log(0.05), abs=1e-6)


def test_short_horizon_is_reported(unit_model, brownian):
    with pytest.raises(HorizonExhaustedError) as err:
        build_time_change(sample_path(brownian, 0.5, 0.01, 1), unit_model, TGRID)
    assert err.value.reached == pytest.approx(0.5)


def test_tgrid_must_stay_before_cutoff(unit_model, base_path):
    with pytest.raises(InvalidArgumentError):
        build_time_change(base_path, unit_model, np.linspace(0.0, 1.5, 4))
    with pytest.raises(InvalidArgumentError):
        build_time_change(base_path, unit_model, np.array([0.1, 0.5]))


def test_shift_past_cutoff_gives_zero_clock(linear_clock_model, base_path):
    tc = build_time_change(base_path, shifted(linear_clock_model, 2.0), TGRID)
    assert np.all(tc.tau == 0.0)


def test_apply_examples():
    m = RcllPath(np.array([0.0, 0.5]), np.array([3.0, 7.0]), 2.0)
    tgrid = np.array([0.0, 0.2, 0.25, 0.3])
    x = apply_time_change(m, TimeChange(tgrid, 2.0 * tgrid))
    assert_array_equal(x.values, [3.0, 3.0, 7.0, 7.0])
    assert x.kind is PathKind.MESH_SAMPLED

    identity = apply_time_change(m, TimeChange(TGRID, TGRID.copy()))
    assert_array_equal(identity.values, evaluate_many(m, TGRID))

    constant = RcllPath(np.array([0.0]), np.array([4.0]), 2.0)
    assert np.all(apply_time_change(constant, TimeChange(TGRID, 1.5 * TGRID)).values == 4.0)


@pytest.mark.parametrize("model_name", ["unit_model", "linear_clock_model"])
def test_fixed_point_is_exact(request, model_name, base_path):
    model = request.getfixturevalue(model_name)
    tc = build_time_change(base_path, model, TGRID)
    x = apply_time_change(base_path, tc)
    assert fixed_point_residual(base_path, x, model, TGRID) == 0.0


def test_fixed_point_refinement(brownian):
    model = build_model({"kind": "sine_shift"}, {"kind": "linear_t", "intercept": 1.0, "slope": 0.5}, 1.0)
    fine_grid = np.linspace(0.0, 1.0, 81)
    coarse, fine = [], []
    for i in range(8):
        path = sample_path(brownian, 4.0, 0.0025, derive_seed(77, i))
        for tgrid, out in ((TGRID, coarse), (fine_grid, fine)):
            tc = build_time_change(path, model, tgrid)
            out.append(fixed_point_residual(path, apply_time_change(path, tc), model, tgrid))
    assert np.all(np.isfinite(coarse + fine))
    assert np.mean(fine) <= np.mean(coarse)


def test_change_of_variables(linear_clock_model, base_path):
    tc = build_time_change(base_path, linear_clock_model, TGRID)
    assert np.max(change_of_variables_residual(base_path, tc, linear_clock_model, np.ones_like)) <= 1e-8


def test_forward_euler_constant_sigma(brownian):
    model = build_model({"kind": "constant", "value": 2.0}, CONSTANT, 1.0)
    tc = forward_euler_time_change(sample_path(brownian, 3.0, 0.01, 5), model, TGRID)
    assert_allclose(tc.tau, 2.0 * TGRID, atol=1e-12)


def test_forward_euler_agrees_with_inverse_clock(linear_clock_model, base_path):
    euler = forward_euler_time_change(base_path, linear_clock_model, TGRID)
    exact = build_time_change(base_path, linear_clock_model, TGRID)
    assert np.max(np.abs(euler.tau - exact.tau)) <= 10 * (TGRID[1] - TGRID[0])


def test_forward_euler_refuses_zeros():
    model = build_model({"kind": "power_law", "exponent": 2.0}, CONSTANT, 1.0)
    path = RcllPath(np.array([0.0, 0.5]), np.array([-1.0, 1.0]), 5.0, PathKind.MESH_SAMPLED)
    with pytest.raises(DegenerateRegimeError):
        forward_euler_time_change(path, model, TGRID)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32))
def test_tau_is_monotone_and_lipschitz(seed):
    model = build_model({"kind": "sine_shift", "offset": 2.0, "amplitude": 1.0}, CONSTANT, 1.0)
    path = sample_path(BrownianMotion(0.0), 4.0, 0.01, seed)
    tc = build_time_change(path, model, TGRID)
    assert tc.tau[0] == 0.0
    assert np.all(np.diff(tc.tau) >= 0.0)
    assert np.all(np.diff(tc.tau) <= (3.0 + 1e-9) * np.diff(TGRID))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32))
def test_freeze_is_permanent(seed):
    model = build_model({"kind": "table", "states": [0.0, 1.0, 2.0], "values": [1.0, 2.0, 0.0]}, CONSTANT, 2.0)
    path = sample_path(ABSORBING_CHAIN, 8.0, 0.01, seed)
    tgrid = np.linspace(0.0, 2.0, 21)
    tc = build_time_change(path, model, tgrid)
    x = apply_time_change(path, tc)
    if tc.frozen_from is not None:
        assert np.all(x.values[tc.frozen_from:] == x.values[tc.frozen_from])
        assert tc.rho >= path.breakpoints[np.flatnonzero(path.values == 2.0)[0]]
        assert fixed_point_residual(path, x, model, tgrid, Metric.DISCRETE, start=tc.frozen_from,
                                    anchor=tc.tau[tc.frozen_from]) == 0.0


def test_export_csv(tmp_path, absorbing_model, absorbed_path):
    tc = build_time_change(absorbed_path, absorbing_model, np.linspace(0.0, 2.0, 21))
    target = export_time_change_csv(tc, tmp_path / "tc.csv")
    with open(target, encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "tau", "frozen"]
    assert len(rows) == 22
    assert rows[-1][2] == "1"
    assert float(rows[5][1]) == tc.tau[4]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32))
def test_mesh_freeze_sits_on_the_zero(seed):
    model = build_model({"kind": "power_law", "exponent": 2.0}, CONSTANT, 1.0)
    path = sample_path(BrownianMotion(0.3), 8.0, 0.01, seed)
    try:
        tc = build_time_change(path, model, TGRID)
    except HorizonExhaustedError:
        assume(False)
    if tc.rho is not None:
        assert tc.solver_stats["rho0"] <= tc.rho
    if tc.frozen_from is not None:
        x = apply_time_change(path, tc)
        assert tc.frozen_state == 0.0
        assert np.all(x.values[tc.frozen_from:] == 0.0)
        assert fixed_point_residual(splice_frozen_state(path, tc), x, model, TGRID,
                                    start=tc.frozen_from, anchor=tc.rho) == 0.0


def test_splice_frozen_state():
    path = RcllPath(np.array([0.0, 0.1, 0.2]), np.array([1.0, -1.0, -2.0]), 1.0, PathKind.MESH_SAMPLED)
    tc = TimeChange(TGRID, np.minimum(TGRID, 0.05), 0.05, 2, frozen_state=0.0)
    spliced = splice_frozen_state(path, tc)
    assert_array_equal(spliced.breakpoints, [0.0, 0.05, 0.1, 0.2])
    assert_array_equal(spliced.values, [1.0, 0.0, -1.0, -2.0])
    assert splice_frozen_state(path, TimeChange(TGRID, TGRID.copy())) is path
