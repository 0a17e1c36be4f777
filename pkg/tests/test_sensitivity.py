import numpy as np
import pytest
from scipy.linalg import expm

from pwapsf.errors import BranchOverflow, MultiValuedPoint
from pwapsf.flow import integrate
from pwapsf.pwa_core import ClosedLoopPwa, ClosedLoopRegion, Polyhedron
from pwapsf.sensitivity import (aumann_sensitivity, compute_critical_sets, convex_combination_min_det,
                                validate_against_fd)


def test_pendulum_critical_set_is_origin(pendulum):
    crit = compute_critical_sets(pendulum.closed_loop)
    assert len(crit) == 1
    comp = crit.components[0]
    assert comp.regions == (0, 1)
    assert np.max(np.abs(comp.witness)) <= 1e-9
    assert comp.equality_rank == 2
    assert comp.contains([0.0, 0.0])
    assert not comp.contains([0.0, 0.1])


def test_quadrant_critical_set_is_positive_axis(quadrants):
    crit = compute_critical_sets(quadrants)
    assert len(crit) == 1
    comp = crit.components[0]
    assert comp.regions == (1, 2)
    assert comp.contains([3.0, 0.0])
    assert not comp.contains([-1.0, 0.0])
    assert not comp.contains([1.0, 0.1])


def test_equal_mode_matrices_give_no_critical_set():
    regs = [ClosedLoopRegion(Polyhedron([[-1.0, 0.0]], [0.0]), [[0, 1], [-1, -1]], [0, 0]),
            ClosedLoopRegion(Polyhedron([[1.0, 0.0]], [0.0]), [[0, 1], [-1, -1]], [0, 0])]
    assert len(compute_critical_sets(ClosedLoopPwa(regs))) == 0


def test_two_leaves_at_origin(pendulum):
    cl = pendulum.closed_loop
    dt, T = 1e-3, 1.0
    rec = integrate(cl, [0.0, 0.0], T, dt)
    tree = aumann_sensitivity(cl, rec, [0.0, 0.5, 1.0])
    assert tree.n_leaves == 2
    leaves = tree.leaves
    oracle = [expm(cl.regions[i].D * T) for i in (0, 1)]
    for Q in oracle:
        assert min(np.max(np.abs(Q - L)) for L in leaves) < 10 * dt
    exact = aumann_sensitivity(cl, rec, [0.0, 1.0], mode="exact")
    for Q in oracle:
        assert min(np.max(np.abs(Q - L)) for L in exact.leaves) < 1e-9
    with pytest.raises(MultiValuedPoint):
        validate_against_fd(cl, [0.0, 0.0], 1.0, tree, dt)


def test_quadrant_sliding_branches(quadrants):
    rec = integrate(quadrants, [0.5, 0.0], 1.0, 1e-3)
    tree = aumann_sensitivity(quadrants, rec, [0.0, 1.0])
    assert tree.n_leaves == 2
    # mode 1 and mode 2 differ only in the x2 row, so the leaves differ there
    a, b = tree.leaves
    assert a[1, 1] > 1 > b[1, 1]


def test_single_leaf_matches_finite_differences(pendulum, rng):
    cl = pendulum.closed_loop
    dt = 1e-3
    n_checked = 0
    while n_checked < 10:
        x0 = rng.uniform([-0.5, -2.0], [0.5, 2.0])
        rec = integrate(cl, x0, 0.5, dt)
        tree = aumann_sensitivity(cl, rec, [0.0, 0.25, 0.5])
        if tree.n_leaves != 1:
            continue
        rep = validate_against_fd(cl, x0, 0.5, tree, dt)
        assert rep.passed, (x0, rep.worst)
        n_checked += 1


def test_branch_cap(quadrants):
    rec = integrate(quadrants, [0.5, 0.0], 1.0, 1e-3)
    with pytest.raises(BranchOverflow):
        aumann_sensitivity(quadrants, rec, [0.0, 1.0], b_max=1)


def test_convex_combinations_invertible(pendulum):
    cl = pendulum.closed_loop
    rec = integrate(cl, [0.0, 0.0], 1.0, 1e-3)
    tree = aumann_sensitivity(cl, rec, np.linspace(0, 1, 11))
    assert tree.min_abs_det() >= 1e-10
    assert convex_combination_min_det(tree, 200) >= 1e-10


def test_tree_csv(pendulum, tmp_path):
    cl = pendulum.closed_loop
    rec = integrate(cl, [0.0, 0.0], 0.1, 1e-3)
    tree = aumann_sensitivity(cl, rec, [0.0, 0.1])
    path = tmp_path / "tree.csv"
    tree.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("t,leaf,q_11")
    assert len(lines) == 1 + 1 + 2  # header, tau = 0 (deduplicated), two leaves at 0.1
