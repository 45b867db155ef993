import math

import numpy as np
import pytest

from qha.errors import ConfigError, ZeroMeasureError
from qha.folner import beta, beta_many, folner_profile, inverse_region, make_sequence, scale_region
from qha.groups import AFFINE, PHASE_PLANE, Euclidean, QuadratureGrid, box, clipped_box, disk, measure

Q = QuadratureGrid(64)


def test_beta_identity_and_range():
    E = disk(1.0)
    assert beta(PHASE_PLANE, E, [0.0, 0.0], Q) == 0.0
    assert beta(PHASE_PLANE, E, [5.0, 0.0], Q) == 1.0


def test_beta_square_closed_form():
    E = box([-1, -1], [1, 1])
    pts = np.array([[0.5, 0.0], [0.3, -0.4], [1.5, 1.0]])
    want = 1 - (2 - np.abs(pts[:, 0])) * (2 - np.abs(pts[:, 1])) / 4
    # cells holding a corner of the intersection are covered only approximately
    np.testing.assert_allclose(beta_many(PHASE_PLANE, E, pts, Q), want, atol=1e-4)


def test_beta_interval():
    line = Euclidean(1)
    ts = np.array([[0.25], [-1.0], [2.5], [4.0]])
    np.testing.assert_allclose(beta_many(line, box([0.0], [3.0]), ts, QuadratureGrid(128)),
                               np.minimum(np.abs(ts[:, 0]), 3.0) / 3.0, atol=1e-12)


def test_affine_dilations_not_folner():
    E = box([0, 1], [1, math.e])
    seq = make_sequence("dilation", AFFINE, E, [1, 2, 4])
    probe = np.array([[0.0, 2.0]])
    b = [beta(AFFINE, seq[i], probe[0], QuadratureGrid(128)) for i in range(3)]
    # translation by (0, a) shifts log a by a constant; the dilated boxes grow in log a, so beta falls
    assert b[0] > b[1] > b[2]
    # translation along b relative to the region width does not decay
    bb = [beta(AFFINE, seq[i], [1.0, 1.0], QuadratureGrid(128)) for i in range(3)]
    assert min(bb) > 0.3


def test_sequences():
    E = box([-1, -1], [1, 1])
    seq = make_sequence("convex-scaling", PHASE_PLANE, E, [1, 2])
    assert measure(PHASE_PLANE, seq[1], Q) == pytest.approx(16.0)
    with pytest.raises(ConfigError):
        make_sequence("convex-scaling", AFFINE, box([0, 1], [1, 2]), [2])
    with pytest.raises(ConfigError):
        make_sequence("convex-scaling", PHASE_PLANE, box([0, 0], [1, 1]), [2])
    with pytest.raises(ConfigError):
        make_sequence("explicit-list", PHASE_PLANE)
    lst = make_sequence("explicit-list", PHASE_PLANE, regions=[E, disk(1.0)])
    assert len(lst) == 2 and lst[1].label.startswith("disk")


def test_inverse_and_scale():
    E = box([0, 1], [1, math.e])
    Einv = inverse_region(AFFINE, E)
    # (b, a)^-1 = (-b/a, 1/a)
    assert Einv.indicator(np.array([[-0.5 / 2.0, 0.5]]))[0]
    assert scale_region(disk(1.0), 3.0).indicator(np.array([[2.9, 0.0]]))[0]


def test_profile_decreases():
    seq = make_sequence("convex-scaling", PHASE_PLANE, box([-1, -1], [1, 1]), [1, 2, 4, 8])
    prof = folner_profile(PHASE_PLANE, seq, disk(1.0), Q, probes=[[1.0, 0.0]], k_q=QuadratureGrid(16))
    assert prof.nonincreasing_from == 0
    np.testing.assert_allclose(prof.probe_beta[:, 0], [0.5, 0.25, 0.125, 0.0625], atol=1e-12)
    with pytest.raises(ZeroMeasureError):
        folner_profile(PHASE_PLANE, seq, np.zeros((0, 2)), Q)
