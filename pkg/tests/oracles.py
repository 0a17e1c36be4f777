"""Independent reference computations used by the tests.

None of the oracles calls the package's solvers; each uses a different
method (enumeration, scipy, closed forms) from the code under test.
Only plain data classes are imported from the package.
"""
from itertools import combinations

import numpy as np
from scipy.linalg import expm
from scipy.optimize import linprog

from pwapsf.psf import PsfProblem
from pwapsf.pwa_core import Polyhedron, PwaRegion, PwaSystem


def brute_force_projection(r, A, b, tol=1e-9):
    """min ||u - r||^2 s.t. A u <= b by enumerating every active set.

    Returns (u, objective) or None when no candidate is feasible.
    """
    r = np.asarray(r, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m = r.size
    best = None
    for k in range(0, min(m, A.shape[0]) + 1):
        for S in combinations(range(A.shape[0]), k):
            if k == 0:
                u = r.copy()
            else:
                As = A[list(S)]
                if np.linalg.matrix_rank(As) < k:
                    continue
                # u = r - As' mu with As u = b_S
                mu = np.linalg.solve(As @ As.T, As @ r - b[list(S)])
                if np.any(mu < -1e-10):
                    continue
                u = r - As.T @ mu
            if np.all(A @ u <= b + tol):
                obj = float(np.sum((u - r) ** 2))
                if best is None or obj < best[1] - 1e-12:
                    best = (u, obj)
    return best


def scipy_feasible(A_in, b_in, A_eq=None, b_eq=None):
    """Feasibility by scipy's HiGHS LP with a zero objective."""
    A_in = np.atleast_2d(np.asarray(A_in, dtype=float))
    n = A_in.shape[1]
    res = linprog(np.zeros(n), A_ub=A_in, b_ub=b_in, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(None, None)] * n, method="highs")
    return res.status == 0


def fourier_motzkin_feasible(A, b, tol=1e-9):
    """Feasibility of A z <= b by eliminating variables one at a time."""
    A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
    b = np.asarray(b, dtype=float).copy()
    while A.shape[1] > 0:
        col = A[:, 0]
        pos, neg, zero = col > tol, col < -tol, np.abs(col) <= tol
        rows = [np.concatenate([A[i, 1:], [b[i]]]) for i in np.flatnonzero(zero)]
        for i in np.flatnonzero(pos):
            for j in np.flatnonzero(neg):
                ri = np.concatenate([A[i, 1:], [b[i]]]) / col[i]
                rj = np.concatenate([A[j, 1:], [b[j]]]) / -col[j]
                rows.append(ri + rj)
        if not rows:
            return True
        M = np.array(rows)
        A, b = M[:, :-1], M[:, -1]
    return bool(np.all(b >= -tol))


def affine_flow(D, d, x0, t):
    """Exact solution of xdot = D x + d at time t."""
    n = len(x0)
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = D
    aug[:n, n] = d
    E = expm(aug * t)
    return E[:n, :n] @ np.asarray(x0, dtype=float) + E[:n, n]


def euler_product(D, dt, steps):
    return np.linalg.matrix_power(np.eye(D.shape[0]) + dt * D, steps)


def random_psf_instance(rng, n_regions, m):
    """Random regions of one or two state-input halfspaces; the partition is not validated."""
    n = 2
    regions = []
    for _ in range(n_regions):
        k = rng.integers(1, 3)
        Hu = rng.normal(size=(k, m))
        regions.append(PwaRegion(rng.normal(size=(k, n)), Hu, rng.normal(size=k),
                                 rng.normal(size=(n, n)), rng.normal(size=(n, m)), rng.normal(size=n)))
    U = Polyhedron.box(-2 * np.ones(m), 2 * np.ones(m))
    sys = PwaSystem(regions, U, validate=False)
    q = int(rng.integers(1, 5))
    W = rng.normal(size=(q, n))
    r = rng.normal(size=q) + 1.0
    x = rng.normal(size=n)
    prob = PsfProblem(x=x, regions=tuple(range(n_regions)), W=W, r=r, meta=np.zeros((q, 3), dtype=int),
                      sys=sys, times=np.zeros(1), predicted=x[None], n_leaves=1)
    return prob, sys, W, r, x


def brute_force_over_regions(sys, W, r, x, u_ref):
    """Independently rebuilt stacks, each solved by active-set enumeration."""
    best = None
    for i, reg in enumerate(sys.regions):
        G = np.vstack([-W @ reg.B, sys.U.H, reg.Hu])
        g = np.concatenate([W @ (reg.A @ x + reg.c) + r, -sys.U.h, -(reg.Hx @ x + reg.h)])
        res = brute_force_projection(u_ref, G, g)
        if res is not None and (best is None or res[1] < best[1] - 1e-12):
            best = (i, res[1])
    return best
