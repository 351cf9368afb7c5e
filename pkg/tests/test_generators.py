"""Test functions, generator application and martingale residuals."""

import numpy as np
import pytest
from errors import InvalidArgumentError
from generators import (Bump, CutoffFunction, GaussPoly, LinearCombination, apply_generator, default_dictionary,
                        martingale_residual)
from generators import test_function_from_dict as function_from_dict
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from paths import BrownianMotion, CompoundPoisson, Ctmc, sample_path
from utils import derive_seed

FUNCTIONS = [
    Bump(0.0, 1.0),
    Bump(0.7, 2.0),
    GaussPoly(0, 1.0),
    GaussPoly(2, 1.5),
    GaussPoly(3, 0.8, (1.0, -0.5, 0.25, 0.1)),
    LinearCombination(((2.0, Bump(0.0, 1.0)), (-1.0, GaussPoly(1, 1.0)))),
]


def _central_error(fn, dfn, x, h):
    return float(np.max(np.abs(dfn(x) - (fn(x + h) - fn(x - h)) / (2 * h))))


@pytest.mark.parametrize("f", FUNCTIONS, ids=lambda f: f.name)
def test_derivatives_match_finite_differences(f):
    x = np.linspace(-2.5, 2.5, 100)
    for fn, dfn in ((f.value, f.d1), (f.d1, f.d2)):
        coarse, fine = (_central_error(fn, dfn, x, h) for h in (1e-3, 1e-4))
        # bump derivatives reach 1e5 near the support edge
        assert coarse <= 1e5 * 1e-3**2
        # second order: a tenth of the step gives about a hundredth of the error
        assert fine <= coarse / 50.0 + 1e-9


def test_bump_vanishes_outside_support():
    f = Bump(1.0, 0.5)
    x = np.array([0.4, 0.5, 1.5, 3.0])
    assert_allclose(f.value(x), 0.0)
    assert_allclose(f.d2(x), 0.0)
    assert f.support == (0.5, 1.5)


def test_brownian_generator_example():
    assert apply_generator(BrownianMotion(0.0), GaussPoly(0, 1.0), 0.0) == pytest.approx(-1.0)


def test_chain_generator_is_row_product():
    chain = Ctmc((0.0, 1.0), np.array([[-1.0, 1.0], [1.0, -1.0]]), 0)
    f = Bump(1.0, 2.0)
    assert apply_generator(chain, f, 0.0) == pytest.approx(float(f.value(1.0) - f.value(0.0)))
    with pytest.raises(InvalidArgumentError):
        apply_generator(chain, f, 0.5)


def test_compound_poisson_generator_example():
    spec = CompoundPoisson(0.0, 1.0, ((1.0, 1.0),))
    f = Bump(1.0, 0.5)
    assert apply_generator(spec, f, 0.0) == pytest.approx(np.exp(-1.0))


def test_compound_poisson_generator_outside_bump_support():
    spec = CompoundPoisson(0.0, 3.0, ((0.5, 0.4), (1.0, 0.6)))
    f = Bump(0.0, 1.0)
    x = np.array([-5.0, -2.5, -2.0, 1.0, 1.5, 4.0])
    assert np.all(apply_generator(spec, f, x) == 0.0)
    # a jump from -1.5 lands inside the support
    assert apply_generator(spec, f, -1.5) == pytest.approx(3.0 * 0.6 * float(f.value(-0.5)))


@pytest.mark.parametrize("spec", [
    BrownianMotion(0.0),
    CompoundPoisson(0.0, 2.0, ((0.5, 0.5), (-1.0, 0.5))),
], ids=["brownian", "compound_poisson"])
def test_generator_vanishes_at_infinity(spec):
    for f in default_dictionary(6) + [GaussPoly(2, 1.0), GaussPoly(3, 0.8, (1.0, -0.5, 0.25, 0.1))]:
        near, far = (np.abs(apply_generator(spec, f, np.array([-r, r]))) for r in (10.0, 100.0))
        assert np.all(near <= 1e-12)
        assert np.all(far <= near)


def test_chain_generator_far_from_origin():
    chain = Ctmc((10.0, 100.0), np.array([[-1.0, 1.0], [2.0, -2.0]]), 0)
    for f in default_dictionary(6) + [GaussPoly(2, 1.0)]:
        assert np.all(np.abs(apply_generator(chain, f, np.array([10.0, 100.0]))) <= 1e-12)


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0), st.floats(-4.0, 4.0))
def test_generator_is_linear(a, b, x):
    f, g = Bump(0.3, 1.2), GaussPoly(2, 1.0)
    for spec in (BrownianMotion(0.0), CompoundPoisson(0.0, 2.0, ((0.5, 0.5), (-1.0, 0.5)))):
        combined = apply_generator(spec, a * f + b * g, x)
        expected = a * apply_generator(spec, f, x) + b * apply_generator(spec, g, x)
        assert combined == pytest.approx(expected, abs=1e-9)


def test_dictionary_from_config():
    f = function_from_dict({"family": "linear_combination", "terms": [
        {"coefficient": 0.5, "function": {"family": "bump", "center": 0.0, "radius": 1.0}},
        {"coefficient": 2.0, "function": {"family": "gauss_poly", "degree": 1}},
    ]})
    x = np.linspace(-1, 1, 5)
    assert_allclose(f.value(x), 0.5 * Bump(0.0, 1.0).value(x) + 2.0 * GaussPoly(1).value(x))
    assert function_from_dict(f.to_dict()) == f
    with pytest.raises(InvalidArgumentError):
        function_from_dict({"family": "spline"})


def test_default_dictionary():
    members = default_dictionary(8, center=1.0)
    assert len(members) == 8
    assert all(isinstance(f, Bump) for f in members)
    assert min(f.center for f in members) == pytest.approx(-0.5)


@pytest.mark.parametrize("degree", [-1, 5])
def test_gauss_poly_degree_range(degree):
    with pytest.raises(InvalidArgumentError):
        GaussPoly(degree, 1.0)


def test_cutoff_profile():
    g = CutoffFunction(t_on=0.0, t_plateau_end=0.5, t_off=1.5)
    t = np.array([0.0, 0.25, 0.5, 1.0, 1.5, 2.0])
    assert_allclose(g.value(t), [1.0, 1.0, 1.0, 0.5, 0.0, 0.0])
    assert g.derivative(np.array([0.5]))[0] == pytest.approx(0.0)
    assert g.derivative(np.array([1.0]))[0] == pytest.approx(-1.5)


def test_cutoff_is_c1():
    g = CutoffFunction(t_on=0.2, t_plateau_start=0.6, t_plateau_end=1.0, t_off=1.4)
    t = np.linspace(0.0, 2.0, 401)
    h = 1e-6
    assert_allclose(g.derivative(t), (g.value(t + h) - g.value(t - h)) / (2 * h), atol=1e-4)


def test_cutoff_rejects_disordered_times():
    with pytest.raises(InvalidArgumentError):
        CutoffFunction(t_on=1.0, t_plateau_end=0.5, t_off=2.0)


def test_martingale_residual_vanishes_on_constant_paths():
    chain = Ctmc((0.0, 1.0), np.zeros((2, 2)), 0)
    paths = [sample_path(chain, 1.0, 0.1, derive_seed(1, i)) for i in range(5)]
    stats = martingale_residual(paths, chain, Bump(0.0, 1.0), None, np.linspace(0.0, 1.0, 5))
    assert np.all(stats.mean == 0.0)


def test_martingale_residual_at_time_zero():
    path = sample_path(BrownianMotion(0.0), 1.0, 0.01, 3)
    stats = martingale_residual([path], BrownianMotion(0.0), GaussPoly(2), None, np.array([0.0, 0.5]))
    assert stats.mean[0] == 0.0


def test_martingale_residual_needs_tgrid(brownian):
    with pytest.raises(InvalidArgumentError):
        martingale_residual([sample_path(brownian, 1.0, 0.1, 1)], brownian, GaussPoly(2))


def _brownian_martingale(n_paths):
    spec = BrownianMotion(0.0)
    paths = [sample_path(spec, 1.0, 0.01, derive_seed(42, i)) for i in range(n_paths)]
    return martingale_residual(paths, spec, GaussPoly(2), None, np.array([0.25, 0.5, 1.0]))


def test_brownian_martingale_residual_small_ensemble():
    assert _brownian_martingale(2000).within(3.0)


@pytest.mark.slow
def test_brownian_martingale_residual():
    assert _brownian_martingale(20000).within(3.0)
