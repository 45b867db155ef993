import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammainc

from qha.oracle import (
    antiwick_count,
    antiwick_disk_eigenvalues,
    antiwick_disk_radial,
    disk_overlap_area,
    reg_lower_gamma_int,
)


@settings(max_examples=300, deadline=None)
@given(m=st.integers(1, 400), x=st.floats(1e-3, 400))
def test_incomplete_gamma_matches_scipy(m, x):
    assert reg_lower_gamma_int(m, x) == pytest.approx(float(gammainc(m, x)), abs=1e-12, rel=1e-10)


@pytest.mark.parametrize("n", [0, 3, 12, 24])
def test_radial_integral_agrees(n):
    assert antiwick_disk_radial(2.0, n) == pytest.approx(antiwick_disk_eigenvalues(2.0, n + 1)[n], abs=1e-12)


def test_known_values():
    # P(1, x) = 1 - e^{-x}
    assert reg_lower_gamma_int(1, 2.0) == pytest.approx(1 - math.exp(-2.0), abs=1e-15)
    assert reg_lower_gamma_int(3, 0.0) == 0.0
    with pytest.raises(ValueError):
        reg_lower_gamma_int(0, 1.0)


def test_eigenvalues_decrease_and_sum_to_area():
    lam = antiwick_disk_eigenvalues(3.0, 200)
    assert np.all(np.diff(lam) < 0)
    assert lam.sum() == pytest.approx(math.pi * 9, rel=1e-12)


def test_count_at_r8():
    # frozen from the oracle itself; 64 pi = 201.06
    counts = {d: antiwick_count(8.0, d) for d in (0.1, 0.25, 0.5)}
    assert counts == {0.1: 183, 0.25: 191, 0.5: 201}


def test_disk_overlap_area():
    assert disk_overlap_area(1.0, 0.0) == pytest.approx(math.pi)
    assert disk_overlap_area(1.0, 2.5) == pytest.approx(0.0)
