import json

import numpy as np
import pytest

from pwapsf.errors import EmptyLocation, PartitionError
from pwapsf.pwa_core import (ClosedLoopPwa, ClosedLoopRegion, PiecewiseLinearPolicy, PolicyPiece, Polyhedron,
                             PwaRegion, PwaSystem, close_loop, locate_state, locate_state_input)
from pwapsf.simlab.scenarios import pendulum_system, rooms_system


def test_box_membership_and_projection():
    P = Polyhedron.box([-1, -1], [1, 1])
    assert P.contains([1.0, 0.0])
    assert P.contains([1.0 + 1e-10, 0.0])
    assert not P.contains([1.0 + 1e-6, 0.0])
    np.testing.assert_allclose(P.project([3.0, 0.5]), [1.0, 0.5], atol=1e-12)
    assert P.has_interior()
    assert not P.is_empty()


def test_empty_and_flat_polyhedra():
    empty = Polyhedron([[1.0], [-1.0]], [1.0, 1.0])  # x <= -1 and x >= 1
    assert empty.is_empty()
    flat = Polyhedron([[1.0], [-1.0]], [0.0, 0.0])
    assert not flat.is_empty()
    assert not flat.has_interior()


def test_polyhedron_shape_check():
    with pytest.raises(ValueError):
        Polyhedron([[1.0, 0.0]], [0.0, 1.0])


def test_pendulum_locations():
    sys = pendulum_system()
    assert locate_state_input(sys, [0.1, 0.0], [0.0]) == (0,)
    assert locate_state_input(sys, [-0.1, 0.0], [0.0]) == (1,)
    assert locate_state_input(sys, [0.0, 0.3], [5.0]) == (0, 1)
    assert sys.state_only


def test_pendulum_closed_loop_matrices(pendulum):
    cl = pendulum.closed_loop
    assert len(cl) == 2
    # theta >= 0 cell, then the wall cell
    np.testing.assert_allclose(cl.regions[0].D, [[0, 1], [-2, -3]])
    np.testing.assert_allclose(cl.regions[1].D, [[0, 1], [-4, -3]])
    assert locate_state(cl, [0.0, 1.0]) == (0, 1)
    with pytest.raises(ValueError):
        locate_state(cl, [0.0, 0.0], tol=-1.0)


def test_rooms_partition_is_continuous():
    sys = rooms_system(continuous=True)
    assert len(sys) == 9
    assert not sys.state_only
    # the literal model with the jump fails validation
    with pytest.raises(PartitionError):
        PwaSystem(rooms_system(continuous=False).regions, sys.U, validate=True)


def test_rooms_location_depends_on_input():
    sys = rooms_system()
    x = np.array([20.0, 20.0, 20.0, 20.0])
    assert locate_state_input(sys, x, [20.0, 20.0]) == (4,)
    assert locate_state_input(sys, x, [30.0, 20.0]) == (7,)
    assert set(locate_state_input(sys, x, [25.0, 15.0])) == {3, 4, 6, 7}  # T1 band mid/high, T4 band low/mid


def test_discontinuous_closed_loop_rejected():
    regs = [ClosedLoopRegion(Polyhedron([[-1.0]], [0.0]), [[-1.0]], [0.0]),
            ClosedLoopRegion(Polyhedron([[1.0]], [0.0]), [[-1.0]], [1.0])]
    with pytest.raises(PartitionError):
        ClosedLoopPwa(regs)


def test_overlapping_regions_rejected():
    regs = [ClosedLoopRegion(Polyhedron([[-1.0]], [-1.0]), [[-1.0]], [0.0]),  # x >= -1
            ClosedLoopRegion(Polyhedron([[1.0]], [-1.0]), [[-1.0]], [0.0])]  # x <= 1
    with pytest.raises(PartitionError):
        ClosedLoopPwa(regs)


def test_policy_evaluation_and_gap():
    pol = PiecewiseLinearPolicy([PolicyPiece(Polyhedron([[-1.0]], [0.0]), [[2.0]], [0.0])])
    assert pol([1.5])[0] == pytest.approx(3.0)
    with pytest.raises(EmptyLocation):
        pol([-1.0])


def test_close_loop_splits_on_policy_pieces():
    sys = PwaSystem([PwaRegion([[0.0]], [[0.0]], [-1.0], [[1.0]], [[1.0]], [0.0])],
                    Polyhedron.box([-5], [5]))
    pol = PiecewiseLinearPolicy([
        PolicyPiece(Polyhedron([[-1.0]], [0.0]), [[-3.0]], [0.0]),
        PolicyPiece(Polyhedron([[1.0]], [0.0]), [[-2.0]], [0.0]),
    ])
    assert pol.check_continuity() <= 1e-12
    cl = close_loop(sys, pol)
    assert sorted(float(r.D[0, 0]) for r in cl.regions) == [-2.0, -1.0]


def test_roundtrip(pendulum, tmp_path):
    sys = pendulum.system
    data = json.loads(json.dumps(sys.to_dict()))
    again = PwaSystem.from_dict(data)
    for a, b in zip(sys.regions, again.regions):
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.Hx, b.Hx)
    cl = pendulum.closed_loop
    cl2 = ClosedLoopPwa.from_dict(json.loads(json.dumps(cl.to_dict())))
    for a, b in zip(cl.regions, cl2.regions):
        np.testing.assert_array_equal(a.D, b.D)
