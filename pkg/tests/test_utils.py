"""Seeding, check-name normalization and the worker pool."""

import logging

import numpy as np
import pytest
from const import CheckName
from errors import InvalidArgumentError
from hypothesis import given
from hypothesis import strategies as st
from pool import default_workers, map_indexed
from utils import derive_seed, make_generator, normalize_check, validate_members_resolve


def test_derive_seed_is_stable():
    assert derive_seed(5, 3) == derive_seed(5, 3)
    assert len({derive_seed(5, i) for i in range(100)}) == 100
    assert derive_seed(5, 3, 0) != derive_seed(5, 3, 1)


@given(st.integers(0, 2**63), st.integers(0, 10**6))
def test_generators_reproduce(master, index):
    a = make_generator(derive_seed(master, index)).standard_normal(4)
    b = make_generator(derive_seed(master, index)).standard_normal(4)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("raw, expected", [
    ("check-fp", "fp"),
    ("Check-Pathwise", "pathwise"),
    (" run ", "run"),
    ("check-spacetime", "spacetime"),
])
def test_normalize_check(raw, expected):
    assert normalize_check(raw) == expected


def test_missing_handlers_are_reported(caplog):
    with caplog.at_level(logging.WARNING):
        missing = validate_members_resolve(CheckName, lambda name: None if name is CheckName.FP else abs)
    assert missing == ["fp"]
    assert "fp" in caplog.text


@pytest.mark.parametrize("workers", [1, 3])
def test_map_indexed_keeps_order(workers):
    assert map_indexed(abs, [-i for i in range(23)], workers) == list(range(23))


def test_map_indexed_rejects_zero_workers():
    with pytest.raises(InvalidArgumentError):
        map_indexed(abs, [1, 2], 0)


def test_default_workers(monkeypatch):
    monkeypatch.delenv("TCLAB_WORKERS", raising=False)
    assert default_workers() == 1
    monkeypatch.setenv("TCLAB_WORKERS", "4")
    assert default_workers() == 4
    monkeypatch.setenv("TCLAB_WORKERS", "0")
    assert default_workers() == 1
    monkeypatch.setenv("TCLAB_WORKERS", "many")
    with pytest.raises(InvalidArgumentError):
        default_workers()
