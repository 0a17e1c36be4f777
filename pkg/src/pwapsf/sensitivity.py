"""Critical sets and set-valued (Aumann) flow sensitivities."""
import csv
import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .errors import BranchOverflow, MultiValuedPoint, NonInvertible
from .flow import FlowRecord, integrate, power_tables
from .optim import LpFeasibilityProblem, lp_feasible, polyhedron_nonempty
from .pwa_core import ClosedLoopPwa

B_MAX = 64
DET_REL = 1e-12
IMPLICIT_EPS = 1e-7
CRITICAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class CriticalComponent:
    """{x | A_eq x = b_eq, A_in x <= b_in} for the region set ``regions``."""

    regions: Tuple[int, ...]
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    b_in: np.ndarray
    witness: np.ndarray

    @property
    def equality_rank(self):
        return int(np.linalg.matrix_rank(self.A_eq)) if self.A_eq.size else 0

    def residual(self, x):
        x = np.asarray(x, dtype=float)
        r_eq = np.abs(self.A_eq @ x - self.b_eq).max() if self.A_eq.shape[0] else 0.0
        r_in = np.max(self.A_in @ x - self.b_in, initial=0.0)
        return float(max(r_eq, r_in))

    def contains(self, x, tol=CRITICAL_TOL):
        x = np.asarray(x, dtype=float)
        return self.residual(x) <= tol * (1.0 + float(np.max(np.abs(x))))


@dataclass
class CriticalSet:
    components: List[CriticalComponent] = field(default_factory=list)

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def covering(self, X, regions, tol=CRITICAL_TOL) -> Optional[CriticalComponent]:
        """First component with region set inside ``regions`` containing every row of X."""
        X = np.atleast_2d(X)
        for comp in self.components:
            if set(comp.regions) <= set(regions) and all(comp.contains(x, tol) for x in X):
                return comp
        return None


def _stack(cl, I):
    H = np.vstack([cl.regions[i].poly.H for i in I])
    h = np.concatenate([cl.regions[i].poly.h for i in I])
    norms = np.linalg.norm(H, axis=1)
    keep = norms > 1e-14
    return H[keep] / norms[keep, None], h[keep] / norms[keep]


def _implicit_rows(H, h, eps=IMPLICIT_EPS):
    """Indices of rows satisfied with equality on all of {Hx + h <= 0}."""
    rows = []
    for r in range(H.shape[0]):
        A = np.vstack([H, H[r]])
        b = np.concatenate([-h, [-h[r] - eps]])
        if not polyhedron_nonempty(A, b):
            rows.append(r)
    return rows


def compute_critical_sets(cl: ClosedLoopPwa, max_order: Optional[int] = None, cache=True) -> CriticalSet:
    """All region sets I whose common boundary hosts a dwell with disagreeing modes.

    For each I with nonempty intersection of closures, the implicit equalities
    g x + b = 0 of the intersection are found, and the stack
    g D_i^q (D_i x + d_i) = 0, q = 0..n-1, i in I, is tested for feasibility
    together with membership.  Sets are grown from feasible intersections only.
    """
    if cache and "critical" in cl._cache:
        return cl._cache["critical"]
    n = cl.n
    r = len(cl.regions)
    max_order = max_order or min(r, n + 1)
    comps = []
    level = []
    for I in itertools.combinations(range(r), 2):
        H, h = _stack(cl, I)
        if polyhedron_nonempty(H, -h):
            level.append(I)
    order = 2
    while level:
        for I in level:
            comp = _component(cl, I)
            if comp is not None:
                comps.append(comp)
        if order >= max_order:
            break
        order += 1
        nxt = []
        seen = set()
        for I in level:
            for j in range(I[-1] + 1, r):
                J = I + (j,)
                if J in seen or not all(tuple(sorted(set(J) - {k})) in set(level) for k in J):
                    continue
                seen.add(J)
                H, h = _stack(cl, J)
                if polyhedron_nonempty(H, -h):
                    nxt.append(J)
        level = nxt
    out = CriticalSet(comps)
    if cache:
        cl._cache["critical"] = out
    return out


def _component(cl, I):
    Ds = [cl.regions[i].D for i in I]
    if all(np.max(np.abs(D - Ds[0])) <= 1e-12 for D in Ds):
        return None
    H, h = _stack(cl, I)
    imp = _implicit_rows(H, h)
    if not imp:
        return None
    n = cl.n
    eq_A = [H[imp]]
    eq_b = [-h[imp]]
    G = H[imp]
    for i in I:
        D, d = cl.regions[i].D, cl.regions[i].d
        Dq = np.eye(n)
        for _ in range(n):
            eq_A.append(G @ Dq @ D)
            eq_b.append(-(G @ Dq @ d))
            Dq = Dq @ D
    A_eq = np.vstack(eq_A)
    b_eq = np.concatenate(eq_b)
    res = lp_feasible(LpFeasibilityProblem(n, A_eq, b_eq, H, -h))
    if not res:
        return None
    return CriticalComponent(tuple(I), A_eq, b_eq, H, -h, res.witness)


@dataclass
class SensitivityTree:
    """Sets of sensitivity matrices at the grid instants of one backup flow."""

    times: np.ndarray
    indices: np.ndarray
    Q: List[np.ndarray]  # Q[l] has shape (leaves_l, n, n)
    choices: List[Tuple[int, ...]]
    branch_segments: list
    mode: str = "discrete"

    @property
    def leaves(self) -> np.ndarray:
        return self.Q[-1]

    @property
    def n_leaves(self):
        return len(self.choices)

    def at(self, tau) -> np.ndarray:
        l = int(np.argmin(np.abs(self.times - tau)))
        if abs(self.times[l] - tau) > 1e-9 * max(1.0, abs(tau)):
            raise ValueError(f"{tau} is not a grid instant of this tree")
        return self.Q[l]

    def min_abs_det(self):
        return float(min(np.min(np.abs(np.linalg.det(Q))) for Q in self.Q))

    def to_csv(self, path):
        n = self.Q[0].shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "leaf"] + [f"q_{i + 1}{j + 1}" for i in range(n) for j in range(n)])
            for t, Qs in zip(self.times, self.Q):
                for k, Q in enumerate(Qs):
                    w.writerow([repr(float(t)), k] + [repr(float(v)) for v in Q.ravel()])


def _dedupe(Qs, tol=1e-13):
    keep = []
    for Q in Qs:
        if not any(np.max(np.abs(Q - K)) <= tol * (1.0 + np.max(np.abs(K))) for K in keep):
            keep.append(Q)
    return np.array(keep)


def branching_segments(cl: ClosedLoopPwa, rec: FlowRecord, critical: Optional[CriticalSet] = None):
    """Dwell segments of ``rec`` lying in a critical component."""
    segs = [s for s in rec.segments if s.dwell]
    if not segs:
        return []
    critical = compute_critical_sets(cl) if critical is None else critical
    out = []
    for s in segs:
        if critical.covering(rec.states[s.start:s.stop], s.regions) is not None:
            out.append(s)
    return out


def aumann_sensitivity(cl: ClosedLoopPwa, rec: FlowRecord, grid: Optional[Sequence[float]] = None,
                       mode="discrete", critical: Optional[CriticalSet] = None, b_max=B_MAX,
                       det_rel=DET_REL) -> SensitivityTree:
    """Branching sensitivity matrices along ``rec`` at the instants in ``grid``.

    ``mode='discrete'`` multiplies the Euler step Jacobians I + dt D and matches
    the recorded flow; ``mode='exact'`` uses matrix exponentials between the
    refined switch instants.
    """
    if grid is None:
        grid = rec.times
    idx = rec.indices_of(grid)
    if np.any(np.diff(idx) < 0):
        raise ValueError("grid must be non-decreasing")
    branch = branching_segments(cl, rec, critical)
    n_leaves = int(np.prod([len(s.regions) for s in branch])) if branch else 1
    if n_leaves > b_max:
        raise BranchOverflow(f"{n_leaves} leaves exceed the limit {b_max}")
    choices = list(itertools.product(*[s.regions for s in branch])) if branch else [()]
    if mode == "discrete":
        per_leaf = [_discrete_leaf(cl, rec, idx, branch, c) for c in choices]
    elif mode == "exact":
        per_leaf = [_exact_leaf(cl, rec, idx, branch, c) for c in choices]
    else:
        raise ValueError(f"unknown propagation mode {mode!r}")
    if len(per_leaf) == 1:
        Q = list(np.asarray(per_leaf[0])[:, None])
    else:
        Q = [_dedupe([leaf[l] for leaf in per_leaf]) for l in range(len(idx))]
    flat = np.concatenate(Q)
    dets = np.abs(np.linalg.det(flat))
    norms = np.linalg.norm(flat, axis=(1, 2))  # Frobenius, bounds the spectral norm
    if np.any(dets <= det_rel * norms ** cl.n):
        raise NonInvertible("sensitivity matrix is singular")
    return SensitivityTree(rec.times[idx], idx, Q, choices, branch, mode)


def _leaf_modes(rec, branch, choice):
    modes = rec.modes
    if branch:
        modes = modes.copy()
        for seg, i in zip(branch, choice):
            modes[seg.start:min(seg.stop, len(modes))] = i
    return modes


def _discrete_leaf(cl, rec, idx, branch, choice):
    modes = _leaf_modes(rec, branch, choice)
    n = cl.n
    cuts = np.flatnonzero(np.diff(modes)) + 1 if modes.size else np.zeros(0, int)
    stops = np.union1d(cuts, idx)
    out = {}
    Q = np.eye(n)
    k = 0
    for s in stops:
        s = int(s)
        if s > k:
            P, _ = power_tables(cl, int(modes[k]), rec.dt, s - k)
            Q = P[s - k] @ Q
            k = s
        out[s] = Q
    out.setdefault(0, np.eye(n))
    return [out[int(i)] for i in idx]


def _exact_leaf(cl, rec, idx, branch, choice):
    picks = {id(s): i for s, i in zip(branch, choice)}
    n = cl.n
    segs = rec.segments
    bounds = [s.tau for s in segs] + [np.inf]
    res = []
    for t in rec.times[idx]:
        Q = np.eye(n)
        for s, a, b in zip(segs, bounds[:-1], bounds[1:]):
            if a >= t:
                break
            i = picks.get(id(s), s.regions[0])
            Q = expm(cl.regions[i].D * (min(b, t) - a)) @ Q
        res.append(Q)
    return res


@dataclass(frozen=True)
class FdReport:
    worst: float
    tolerance: float
    passed: bool
    fd: np.ndarray
    leaf: np.ndarray


def finite_difference_jacobian(cl, x0, tau, dt, step=1e-5):
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        xp = integrate(cl, x0 + e, tau, dt).states[-1]
        xm = integrate(cl, x0 - e, tau, dt).states[-1]
        J[:, j] = (xp - xm) / (2 * step)
    return J


def validate_against_fd(cl: ClosedLoopPwa, x0, tau, tree: SensitivityTree, dt, step=1e-5) -> FdReport:
    Qs = tree.at(tau)
    if len(Qs) > 1:
        raise MultiValuedPoint(f"{len(Qs)} sensitivity matrices at tau={tau}")
    fd = finite_difference_jacobian(cl, x0, tau, dt, step)
    worst = float(np.max(np.abs(fd - Qs[0])))
    tol = max(1e-3, 10 * dt)
    return FdReport(worst, tol, worst <= tol, fd, Qs[0])


def convex_combination_min_det(tree: SensitivityTree, n_samples=100, rng=None) -> float:
    """Smallest |det| over random convex combinations of the leaves at every grid instant."""
    rng = np.random.default_rng(0) if rng is None else rng
    worst = np.inf
    for Qs in tree.Q:
        if len(Qs) == 1:
            worst = min(worst, abs(np.linalg.det(Qs[0])))
            continue
        W = rng.dirichlet(np.ones(len(Qs)), size=n_samples)
        combos = np.einsum("sk,kij->sij", W, Qs)
        worst = min(worst, float(np.min(np.abs(np.linalg.det(combos)))))
    return float(worst)
