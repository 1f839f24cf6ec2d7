import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fsenav.reward import CoverageState, geodesic_reward, step_reward


def test_geodesic_examples():
    assert geodesic_reward(2.0, 2.0) == 0.0
    assert geodesic_reward(2.0, 1.75, 1.0) == pytest.approx(0.25)
    assert geodesic_reward(1.75, 2.0, 1.0) == pytest.approx(-0.25)


def test_step_reward_sum():
    assert step_reward(0.0, 0.0).total == pytest.approx(-0.001)
    b = step_reward(0.25, 0.05)
    assert b.total == pytest.approx(0.299)
    assert b.total == b.r_d + b.r_e + b.time


def test_window_aggregation_is_sum(rng):
    parts = [step_reward(*rng.normal(0, 0.1, 2)) for _ in range(25)]
    assert sum(p.total for p in parts) == pytest.approx(sum(p.r_d + p.r_e - 0.001 for p in parts))


def _block(n=40):
    touched = np.zeros((n, n), bool)
    touched[:20, :20] = True
    return touched


def test_first_scan_and_revisit():
    cov = CoverageState(40, 0.05, 1.0, coeff=1.0)
    explored = _block().astype(np.uint8)
    assert cov.update(_block(), explored) == pytest.approx(1.0)
    assert cov.update(_block(), explored) == pytest.approx(1.0 / math.sqrt(2) - 1.0)
    assert cov.update(np.zeros((40, 40), bool), explored) == 0.0


@given(st.integers(0, 2**32 - 1))
def test_telescoping_and_signs(seed):
    rng = np.random.default_rng(seed)
    n = 60
    cov = CoverageState(n, 0.05, 0.5, coeff=0.05)
    explored = np.zeros((n, n), np.uint8)
    total = 0.0
    for _ in range(100):
        r, c = rng.integers(0, n - 8, 2)
        touched = np.zeros((n, n), bool)
        touched[r : r + 8, c : c + 8] = True
        explored |= touched
        total += cov.update(touched, explored) / cov.coeff
    assert total == pytest.approx(cov.potential, abs=1e-9)
    assert cov.potential == pytest.approx(cov.compute_potential(), abs=1e-12)
    assert (cov.count >= 0).all() and (cov.area <= 0.5**2 + 1e-12).all()


@given(st.lists(st.floats(0, 50), min_size=2, max_size=40), st.floats(0.1, 3))
def test_geodesic_telescopes(ds, coeff):
    total = sum(geodesic_reward(a, b, coeff) for a, b in zip(ds, ds[1:]))
    assert total == pytest.approx(coeff * (ds[0] - ds[-1]), abs=1e-9)
