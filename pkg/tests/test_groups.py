import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qha.errors import DimensionError, NotHomogeneousError
from qha.groups import (
    AFFINE,
    HEISENBERG,
    GroupModel,
    PHASE_PLANE,
    QuadratureGrid,
    annulus,
    box,
    clipped_box,
    dilate_region,
    disk,
    get_group,
    grid_tolerance,
    intersect,
    measure,
    translate_region,
)

coord = st.floats(-3, 3, allow_nan=False)
scale = st.floats(0.2, 5, allow_nan=False)


def _point(g, vals, a=1.0):
    x = np.array(vals[: g.chart_dim], dtype=float)
    if g is AFFINE:
        x[1] = a
    return x


@pytest.mark.parametrize("g", [PHASE_PLANE, AFFINE, HEISENBERG], ids=lambda g: g.name)
@settings(max_examples=60, deadline=None)
@given(v=st.lists(coord, min_size=9, max_size=9), a=st.lists(scale, min_size=3, max_size=3))
def test_group_axioms(g, v, a):
    x, y, z = (_point(g, v[3 * i: 3 * i + 3], a[i]) for i in range(3))
    np.testing.assert_allclose(g.multiply(g.multiply(x, y), z), g.multiply(x, g.multiply(y, z)), atol=1e-9)
    np.testing.assert_allclose(g.multiply(x, g.invert(x)), g.identity, atol=1e-12)
    np.testing.assert_allclose(g.multiply(g.identity, x), x, atol=1e-12)
    # the modular function is a homomorphism
    assert math.isclose(float(g.modular(g.multiply(x, y))), float(g.modular(x) * g.modular(y)), rel_tol=1e-12)


def test_affine_law_and_modular():
    x, y = np.array([1.0, 2.0]), np.array([3.0, 0.5])
    np.testing.assert_allclose(AFFINE.multiply(x, y), [1 + 2 * 3, 1.0])
    assert AFFINE.modular(np.array([0.0, 4.0])) == pytest.approx(0.25)
    assert not AFFINE.unimodular and PHASE_PLANE.unimodular
    assert AFFINE.right_haar_density(np.array([5.0, 2.0])) == pytest.approx(0.5)


def test_heisenberg_law():
    x, y = np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0])
    np.testing.assert_allclose(HEISENBERG.multiply(x, y), [5, 7, 9 + 1 * 5])
    np.testing.assert_allclose(HEISENBERG.dilate(2.0, x), [2, 4, 12])


class _Bare(GroupModel):
    name = "bare"
    chart_dim = 1


def test_chart_validation():
    with pytest.raises(DimensionError):
        AFFINE.multiply(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        AFFINE.invert(np.array([0.0, -1.0]))
    with pytest.raises(NotHomogeneousError):
        _Bare().dilate(2.0, np.zeros(1))
    assert get_group("r3").chart_dim == 3
    with pytest.raises(KeyError):
        get_group("no-such-group")


def test_disk_measure_converges():
    errs = [abs(measure(PHASE_PLANE, disk(1.0), QuadratureGrid(n)) / math.pi - 1) for n in (64, 128, 256)]
    assert errs[0] < 1e-4
    assert errs[1] < errs[0] / 3 and errs[2] < errs[1] / 3


def test_affine_box_measure_and_right_invariance():
    E = box([0, 1], [1, math.e])
    q = QuadratureGrid(128)
    assert measure(AFFINE, E, q) == pytest.approx(1.0, abs=1e-5)
    for x in ([0.7, 1.0], [0.3, 2.0], [-1.0, 0.6]):
        Ex = translate_region(AFFINE, E, np.array(x), "right")
        assert measure(AFFINE, Ex, q) == pytest.approx(1.0, abs=1e-4)
    # left translation by a scales the right Haar measure by the modular function
    El = translate_region(AFFINE, E, np.array([0.0, 2.0]), "left")
    assert measure(AFFINE, El, q) == pytest.approx(2.0, abs=1e-4)


@pytest.mark.parametrize("r", [2.0, 4.0])
def test_dilation_scales_measure(r):
    E = box([0, 1], [1, math.e])
    assert measure(AFFINE, dilate_region(AFFINE, E, r), QuadratureGrid(128)) == pytest.approx(r ** 2, rel=1e-4)
    D = disk(1.0)
    assert measure(PHASE_PLANE, dilate_region(PHASE_PLANE, D, r), QuadratureGrid(128)) == pytest.approx(
        math.pi * r * r, rel=1e-4)


def test_shapes():
    q = QuadratureGrid(256)
    assert measure(PHASE_PLANE, annulus(1.0, 2.0), q) == pytest.approx(3 * math.pi, rel=1e-4)
    half = clipped_box([-1, -1], [1, 1], [1.0, 1.0], 0.0)
    assert measure(PHASE_PLANE, half, q) == pytest.approx(2.0, rel=1e-6)
    both = intersect(disk(1.0), box([0, -2], [2, 2]))
    assert measure(PHASE_PLANE, both, q) == pytest.approx(math.pi / 2, rel=1e-4)


def test_grid_tolerance_shrinks():
    t1 = grid_tolerance(PHASE_PLANE, disk(1.0), QuadratureGrid(64))
    t2 = grid_tolerance(PHASE_PLANE, disk(1.0), QuadratureGrid(128))
    assert 0 < t2 < t1


def test_heisenberg_dilation_measure():
    E = box([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5])
    assert measure(HEISENBERG, dilate_region(HEISENBERG, E, 2.0), QuadratureGrid(32)) == pytest.approx(16.0, rel=1e-3)
