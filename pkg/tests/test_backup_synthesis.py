import numpy as np
import pytest

from pwapsf.backup_synthesis import ellipse_samples, max_gamma_inside, synthesize_quadratic_backup
from pwapsf.errors import SynthesisFailed
from pwapsf.pwa_core import ClosedLoopPwa, ClosedLoopRegion, Polyhedron
from pwapsf.simlab.scenarios import PEND_GAIN, PEND_GAMMA, PEND_R


@pytest.fixture(scope="module")
def pend_X():
    return Polyhedron.box([-0.5, -2.0], [0.5, 2.0])


def test_pendulum_regression(pendulum, pend_X):
    K = np.array(PEND_GAIN)
    res = synthesize_quadratic_backup(pendulum.closed_loop, pend_X, 1.0, input_rows=(np.vstack([K, -K]), [10.0, 10.0]))
    np.testing.assert_allclose(res.R, PEND_R, rtol=1e-12)
    assert res.gamma == pytest.approx(PEND_GAMMA, rel=1e-12)
    assert res.margin >= 0


def test_ellipse_fits_in_constraints(pend_X):
    R = np.array(PEND_R)
    g = max_gamma_inside(R, pend_X.H, pend_X.h)
    pts = ellipse_samples(R, g, 2000, 0, np.random.default_rng(0))
    assert np.all(pend_X.residual(pts) <= 1e-9)
    # and touches one face
    assert np.max(pend_X.residual(pts)) > -1e-2
    np.testing.assert_allclose(np.einsum("ki,ij,kj->k", pts, R, pts), g, rtol=1e-10)


def test_unstable_mode_rejected(pend_X):
    cl = ClosedLoopPwa([ClosedLoopRegion(Polyhedron.whole_space(2), [[0, 1], [1, 0]], [0, 0])])
    with pytest.raises(SynthesisFailed):
        synthesize_quadratic_backup(cl, pend_X, 1.0)


def test_affine_offset_rejected(pend_X):
    cl = ClosedLoopPwa([ClosedLoopRegion(Polyhedron.whole_space(2), [[-1, 0], [0, -1]], [0.1, 0])])
    with pytest.raises(SynthesisFailed):
        synthesize_quadratic_backup(cl, pend_X, 1.0)


def test_origin_outside_constraints():
    with pytest.raises(SynthesisFailed):
        max_gamma_inside(np.eye(2), np.array([[1.0, 0.0]]), np.array([0.5]))
