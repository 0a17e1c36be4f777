"""Small dense solvers: projection QP and LP feasibility.

Both routines target the tiny problems that appear in the safety filter
(a handful of decision variables, tens of rows).  The QP is the dual
active-set method of Goldfarb and Idnani specialised to an identity Hessian,
so no feasible starting point is needed and emptiness of the constraint set
is detected by the method itself.  LP feasibility reuses it: equalities are
eliminated through an SVD null-space basis and the origin of the reduced
space is projected onto the remaining inequalities.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import Degenerate, Infeasible, IterationCap

FEAS_TOL = 1e-10
KKT_TOL = 1e-8


@dataclass(frozen=True)
class QpProblem:
    """minimise ||u - target||^2 subject to A u <= b."""

    target: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        target = np.atleast_1d(np.asarray(self.target, dtype=float))
        A = np.asarray(self.A, dtype=float).reshape(-1, target.size)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class QpResult:
    u: np.ndarray
    objective: float
    active: Tuple[int, ...]
    multipliers: np.ndarray
    iterations: int
    kkt_residual: float


@dataclass(frozen=True)
class LpFeasibilityProblem:
    """{z | A_eq z = b_eq, A_in z <= b_in}."""

    n: int
    A_eq: np.ndarray = field(default=None)
    b_eq: np.ndarray = field(default=None)
    A_in: np.ndarray = field(default=None)
    b_in: np.ndarray = field(default=None)

    def __post_init__(self):
        for Aname, bname in (("A_eq", "b_eq"), ("A_in", "b_in")):
            A = getattr(self, Aname)
            b = getattr(self, bname)
            if A is None:
                A = np.zeros((0, self.n))
                b = np.zeros(0)
            A = np.asarray(A, dtype=float).reshape(-1, self.n)
            b = np.asarray(b, dtype=float).reshape(-1)
            if A.shape[0] != b.size:
                raise ValueError(f"{Aname} has {A.shape[0]} rows but {bname} has {b.size}")
            object.__setattr__(self, Aname, A)
            object.__setattr__(self, bname, b)


@dataclass(frozen=True)
class LpResult:
    feasible: bool
    witness: Optional[np.ndarray]
    certificate: float

    def __bool__(self):
        return self.feasible


def _normalise_rows(A, b, tol):
    """Scale rows to unit norm; split off all-zero rows.

    Returns (A_unit, b_unit, norms, keep, zero_violation) where
    zero_violation is the worst violation among dropped zero rows.
    """
    norms = np.linalg.norm(A, axis=1)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    keep = norms > 1e-14 * scale
    zero_violation = 0.0
    if not np.all(keep):
        zero_b = b[~keep]
        if zero_b.size:
            zero_violation = float(max(0.0, -np.min(zero_b)))
    idx = np.flatnonzero(keep)
    return A[idx] / norms[idx, None], b[idx] / norms[idx], norms[idx], idx, zero_violation


def _solve_dual_active_set(r, A, b, tol, max_iter):
    """Goldfarb-Idnani for min 0.5||u - r||^2 s.t. A u <= b with unit-norm rows.

    Returns (u, active list, multiplier list, iterations).  Raises
    Infeasible with a normalised Farkas certificate when the rows admit no
    solution.
    """
    u = r.copy()
    active = []
    lam = []
    iterations = 0
    while True:
        slack = b - A @ u
        if slack.size == 0 or slack.min() >= -tol:
            return u, active, lam, iterations
        # most violated row; argmin picks the lowest index on ties
        p = int(np.argmin(slack))
        lam_p = 0.0
        n_p = -A[p]
        while True:
            iterations += 1
            if iterations > max_iter:
                raise IterationCap(f"dual active-set exceeded {max_iter} iterations")
            if active:
                N = -A[active].T
                r_vec = np.linalg.lstsq(N, n_p, rcond=None)[0]
                z = n_p - N @ r_vec
            else:
                r_vec = np.zeros(0)
                z = n_p
            t1 = np.inf
            k = -1
            for j in range(len(active)):
                if r_vec[j] > 1e-12:
                    t = lam[j] / r_vec[j]
                    if t < t1 - 1e-15 or (abs(t - t1) <= 1e-15 and active[j] < active[k]):
                        t1, k = t, j
            zz = float(z @ z)
            s_p = float(b[p] - A[p] @ u)
            t2 = -s_p / zz if zz > 1e-20 else np.inf
            if not np.isfinite(t1) and not np.isfinite(t2):
                y = np.concatenate([[1.0], np.maximum(-r_vec, 0.0)])
                cert = -s_p / float(np.sum(y))
                raise Infeasible("constraint rows admit no solution", certificate=max(cert, 0.0))
            if not np.isfinite(t2):
                lam = [lj - t1 * rj for lj, rj in zip(lam, r_vec)]
                lam_p += t1
                del active[k]
                del lam[k]
                continue
            t = min(t1, t2)
            u = u + t * z
            lam = [lj - t * rj for lj, rj in zip(lam, r_vec)]
            lam_p += t
            if t2 <= t1:
                active.append(p)
                lam.append(lam_p)
                break
            del active[k]
            del lam[k]


def qp_project(problem: QpProblem, tol: float = FEAS_TOL, max_iter: Optional[int] = None) -> QpResult:
    """Euclidean projection of ``problem.target`` onto {u | A u <= b}.

    Raises
    ------
    Infeasible
        When the polyhedron is empty.
    IterationCap
        When the active-set loop does not settle within ``max_iter`` steps.
    """
    r = problem.target
    A_unit, b_unit, norms, idx, zero_violation = _normalise_rows(problem.A, problem.b, tol)
    if zero_violation > tol:
        raise Infeasible("an all-zero row has a negative right-hand side", certificate=zero_violation)
    if max_iter is None:
        max_iter = 50 * (A_unit.shape[0] + r.size) + 100
    u, active, lam, iterations = _solve_dual_active_set(r, A_unit, b_unit, tol, max_iter)
    multipliers = np.zeros(problem.A.shape[0])
    for j, lj in zip(active, lam):
        multipliers[idx[j]] = lj / norms[j]
    stationarity = u - r + problem.A.T @ multipliers
    kkt = float(np.max(np.abs(stationarity))) if stationarity.size else 0.0
    return QpResult(
        u=u,
        objective=float((u - r) @ (u - r)),
        active=tuple(sorted(int(idx[j]) for j in active)),
        multipliers=multipliers,
        iterations=iterations,
        kkt_residual=kkt,
    )


def lp_feasible(problem: LpFeasibilityProblem, tol: float = 1e-9) -> LpResult:
    """Decide whether {A_eq z = b_eq, A_in z <= b_in} is nonempty.

    On success the witness is the minimum-norm feasible point.  On failure the
    certificate is positive: the equality residual when the equalities are
    inconsistent, otherwise the normalised Farkas value from the projection.
    """
    n = problem.n
    A_eq, b_eq = problem.A_eq, problem.b_eq
    A_in, b_in = problem.A_in, problem.b_in
    if A_eq.shape[0]:
        row_norm = np.linalg.norm(A_eq, axis=1)
        zero = row_norm <= 1e-14
        if np.any(np.abs(b_eq[zero]) > tol):
            return LpResult(False, None, float(np.max(np.abs(b_eq[zero]))))
        E = A_eq[~zero] / row_norm[~zero, None]
        e = b_eq[~zero] / row_norm[~zero]
    else:
        E = np.zeros((0, n))
        e = np.zeros(0)
    if E.shape[0]:
        U, S, Vt = np.linalg.svd(E)
        rank = int(np.sum(S > 1e-10 * S[0])) if S.size else 0
        z_p = Vt[:rank].T @ ((U[:, :rank].T @ e) / S[:rank])
        residual = float(np.max(np.abs(E @ z_p - e)))
        if residual > tol:
            return LpResult(False, None, residual)
        null = Vt[rank:].T
    else:
        z_p = np.zeros(n)
        null = np.eye(n)
    rhs = b_in - A_in @ z_p
    if null.shape[1] == 0:
        worst = float(np.max((A_in @ z_p - b_in) / np.maximum(np.linalg.norm(A_in, axis=1), 1e-300))) if A_in.shape[0] else -np.inf
        if worst > tol:
            return LpResult(False, None, worst)
        return LpResult(True, z_p, 0.0)
    reduced = QpProblem(np.zeros(null.shape[1]), A_in @ null, rhs)
    try:
        res = qp_project(reduced, tol=min(tol, FEAS_TOL))
    except Infeasible as exc:
        return LpResult(False, None, float(exc.certificate))
    except IterationCap as exc:
        raise Degenerate(str(exc)) from exc
    return LpResult(True, z_p + null @ res.u, 0.0)


def polyhedron_nonempty(A: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> LpResult:
    """Shorthand for lp_feasible on {z | A z <= b}."""
    A = np.asarray(A, dtype=float)
    return lp_feasible(LpFeasibilityProblem(A.shape[1], A_in=A, b_in=b), tol=tol)
