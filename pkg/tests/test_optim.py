import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_projection, fourier_motzkin_feasible, scipy_feasible
from pwapsf.errors import Infeasible
from pwapsf.optim import LpFeasibilityProblem, QpProblem, lp_feasible, polyhedron_nonempty, qp_project


def test_projection_onto_box():
    A = np.vstack([np.eye(2), -np.eye(2)])
    b = np.ones(4)
    res = qp_project(QpProblem([3.0, -0.5], A, b))
    np.testing.assert_allclose(res.u, [1.0, -0.5], atol=1e-12)
    assert res.active == (0,)
    assert res.objective == pytest.approx(4.0)
    assert res.kkt_residual < 1e-10


def test_interior_target_is_returned():
    res = qp_project(QpProblem([0.2], [[1.0], [-1.0]], [1.0, 1.0]))
    assert res.u[0] == pytest.approx(0.2)
    assert res.active == ()


def test_empty_polyhedron_raises_with_certificate():
    with pytest.raises(Infeasible) as exc:
        qp_project(QpProblem([0.0], [[1.0], [-1.0]], [-1.0, -1.0]))
    assert exc.value.certificate > 0


def test_zero_row_with_negative_rhs():
    with pytest.raises(Infeasible):
        qp_project(QpProblem([0.0, 0.0], [[0.0, 0.0]], [-1.0]))


def test_degenerate_duplicate_rows():
    A = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    res = qp_project(QpProblem([2.0, 1.0], A, [1.0, 1.0, 2.0]))
    np.testing.assert_allclose(res.u, [1.0, 1.0], atol=1e-10)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 6))
def test_projection_matches_active_set_enumeration(seed, m, rows):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(rows, m))
    b = rng.normal(size=rows) + 0.5
    r = 2 * rng.normal(size=m)
    ref = brute_force_projection(r, A, b)
    if ref is None or not scipy_feasible(A, b):
        with pytest.raises(Infeasible):
            qp_project(QpProblem(r, A, b))
        return
    res = qp_project(QpProblem(r, A, b))
    assert res.objective == pytest.approx(ref[1], rel=1e-8, abs=1e-9)
    assert np.all(A @ res.u <= b + 1e-8)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 7))
def test_lp_feasibility_agrees_with_scipy(seed, n, rows):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(rows, n))
    b = rng.normal(size=rows)
    res = polyhedron_nonempty(A, b)
    expected = scipy_feasible(A, b)
    assert bool(res) == expected
    assert bool(res) == fourier_motzkin_feasible(A, b)
    if res:
        assert np.all(A @ res.witness <= b + 1e-8)
    else:
        assert res.certificate > 0


def test_lp_with_equalities():
    prob = LpFeasibilityProblem(2, A_eq=[[1.0, 1.0]], b_eq=[1.0], A_in=[[-1.0, 0.0], [0.0, -1.0]], b_in=[0.0, 0.0])
    res = lp_feasible(prob)
    assert res.feasible
    np.testing.assert_allclose(res.witness, [0.5, 0.5], atol=1e-9)
    bad = LpFeasibilityProblem(2, A_eq=[[1.0, 1.0]], b_eq=[-1.0], A_in=[[-1.0, 0.0], [0.0, -1.0]], b_in=[0.0, 0.0])
    assert not lp_feasible(bad)


def test_inconsistent_equalities():
    prob = LpFeasibilityProblem(1, A_eq=[[1.0], [1.0]], b_eq=[0.0, 1.0])
    assert not lp_feasible(prob).feasible


def test_shape_mismatch():
    with pytest.raises(ValueError):
        QpProblem([0.0], [[1.0], [2.0]], [1.0])
