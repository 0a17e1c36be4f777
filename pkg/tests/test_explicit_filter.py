import numpy as np
import pytest

from pwapsf.errors import Infeasible, NoRegion
from pwapsf.explicit_filter import (EMPTY_INNER, RegionStack, apply_explicit, lambda_grid_oracle, lambda_star,
                                    reduce_matrices, reduce_to_lambda, region_value, region_values)
from pwapsf.psf import assemble, solve_psf
from pwapsf.simlab.reference import reference_policy


def random_stacks(rng, shift=0.6):
    out = []
    for i in range(int(rng.integers(1, 4))):
        q = int(rng.integers(1, 6))
        eta = np.concatenate([rng.normal(size=q), [1.0, -1.0]])
        omega = np.concatenate([rng.normal(size=q) + shift, [1.0, 0.0]])
        out.append(RegionStack(i, eta, omega))
    return out


def feasible_somewhere(stacks, lam, tol=1e-12):
    return any(np.all(s.eta * lam <= s.omega + tol) for s in stacks)


def test_closed_form_matches_grid_oracle():
    rng = np.random.default_rng(7)
    matched = 0
    while matched < 200:
        stacks = random_stacks(rng)
        res = lambda_star(stacks)
        oracle = lambda_grid_oracle(stacks)
        if oracle < 0:
            # nothing on [0, 1] is feasible: the maximiser must fail its own check
            s = next(s for s in stacks if s.region == res.region)
            assert res.lam < 0 or np.min(s.omega - res.lam * s.eta) < 0
            continue
        assert abs(res.lam - oracle) <= 1e-4
        assert feasible_somewhere(stacks, res.lam)
        assert not feasible_somewhere(stacks, res.lam + 1e-4)
        matched += 1


def test_vectorised_values_match_scalar():
    rng = np.random.default_rng(3)
    for _ in range(300):
        q = int(rng.integers(1, 6))
        E = rng.normal(size=(4, q))
        E[rng.uniform(size=E.shape) < 0.2] = 0.0
        Om = rng.normal(size=(4, q))
        for mode in EMPTY_INNER:
            scalar = [region_value(e, o, mode) for e, o in zip(E, Om)]
            np.testing.assert_array_equal(region_values(E, Om, mode), scalar)


def test_zero_eta_rows():
    # eta = 0 rows are either always or never satisfied
    assert region_value([0.0, 1.0, -1.0], [0.5, 1.0, 0.0]) == 1.0
    assert region_value([0.0, 1.0, -1.0], [-0.5, 1.0, 0.0]) == 0.0
    # only bound rows: the whole segment is admissible
    assert lambda_star([RegionStack(0, np.array([1.0, -1.0]), np.array([1.0, 0.0]))]).lam == 1.0


def test_known_value():
    # 2 lam <= 1 and -lam <= -0.1 give lam in [0.1, 0.5]
    s = RegionStack(0, np.array([2.0, -1.0, 1.0, -1.0]), np.array([1.0, -0.1, 1.0, 0.0]))
    assert lambda_star([s]).lam == pytest.approx(0.5)
    # region 1 admits more
    t = RegionStack(1, np.array([1.25, 1.0, -1.0]), np.array([1.0, 1.0, 0.0]))
    res = lambda_star([s, t])
    assert res.region == 1 and res.lam == pytest.approx(0.8)


def test_empty_candidates():
    with pytest.raises(NoRegion):
        lambda_star([])
    with pytest.raises(ValueError):
        region_value([1.0], [1.0], empty_inner="nope")


def _scenario_states(sc, rng, k):
    lo, hi = sc.sample_box
    out = []
    while len(out) < k:
        x = rng.uniform(lo, hi)
        if sc.h_b.value(x) >= 0 or sc.h_X.value(x) >= 0.05:
            out.append(x)
    return out


@pytest.mark.parametrize("name", ["pendulum", "rooms"])
def test_explicit_input_satisfies_stack(name, pendulum, rooms, rng):
    sc = pendulum if name == "pendulum" else rooms
    n_ok = 0
    for x in _scenario_states(sc, rng, 40):
        prob = assemble(sc.system, sc.closed_loop, sc.h_X, sc.h_b, sc.psf, x)
        u_r = reference_policy(sc.reference, x, 0.0)
        u_b = sc.backup(x)
        res = apply_explicit(prob, u_b, u_r)
        if not res.feasible:
            continue
        n_ok += 1
        assert np.min(prob.margins(res.region, res.u)) >= -1e-8
        assert res.min_margin == pytest.approx(np.min(prob.margins(res.region, res.u)), abs=1e-9)
    assert n_ok >= 20


def test_reduced_matrices_match_stacks(pendulum):
    x = np.array([0.3, 0.8])
    prob = assemble(pendulum.system, pendulum.closed_loop, pendulum.h_X, pendulum.h_b, pendulum.psf, x)
    u_b, u_r = pendulum.backup(x), np.array([10.0])
    stacks = reduce_to_lambda(prob, u_b, u_r)
    for s in stacks:
        G, g = prob.stack(s.region)
        for lam in (0.0, 0.37, 1.0):
            u = u_b + lam * (u_r - u_b)
            np.testing.assert_allclose(s.omega[:-2] - lam * s.eta[:-2], g - G @ u, atol=1e-10)
    regions, E, Om, counts = reduce_matrices(prob, u_b, u_r)
    assert regions == prob.regions
    assert list(counts) == [prob.n_rows(i) for i in regions]


def test_explicit_never_beats_exact(pendulum):
    """The segment is a subset of the admissible inputs, so its cost is no smaller."""
    rng = np.random.default_rng(5)
    for x in _scenario_states(pendulum, rng, 15):
        prob = assemble(pendulum.system, pendulum.closed_loop, pendulum.h_X, pendulum.h_b, pendulum.psf, x)
        u_r = reference_policy(pendulum.reference, x, 1.0)
        res = apply_explicit(prob, pendulum.backup(x), u_r)
        try:
            sol = solve_psf(prob, u_r)
        except Infeasible:
            assert not res.feasible
            continue
        if res.feasible:
            assert np.sum((res.u - u_r) ** 2) >= sol.objective - 1e-9
