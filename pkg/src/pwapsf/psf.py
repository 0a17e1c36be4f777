"""All-elements predictive safety filter: constraint assembly and solution."""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .barrier import ACTIVE_TOL, ClassK, PiecewiseBarrier
from .errors import Infeasible
from .flow import integrate
from .optim import LpFeasibilityProblem, QpProblem, lp_feasible, qp_project
from .pwa_core import ClosedLoopPwa, MEMBERSHIP_TOL, PwaSystem
from .sensitivity import CriticalSet, aumann_sensitivity

ROW_HX, ROW_HB, ROW_U, ROW_SLICE = 0, 1, 2, 3
ROW_KINDS = ("h_X", "h_b", "U", "slice")
FEAS_CHECK = 1e-8


@dataclass(frozen=True)
class PsfConfig:
    """Horizon T (s) split into N grid intervals; dt is the prediction step.

    N = 0 gives the classical one-step filter: only tau = 0 is used, for both
    h_X and h_b, whatever T is.
    """

    T: float = 1.0
    N: int = 50
    alpha: ClassK = field(default_factory=ClassK)
    alpha_b: ClassK = field(default_factory=ClassK)
    dt: float = 1e-3
    eps_act: float = ACTIVE_TOL
    delta: float = 0.0
    sensitivity_mode: str = "discrete"
    b_max: int = 64
    tol: float = MEMBERSHIP_TOL

    def __post_init__(self):
        if self.N < 0 or self.T < 0:
            raise ValueError("N and T must be non-negative")
        if self.N > 0 and self.T == 0:
            raise ValueError("a positive N needs a positive horizon")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")

    @property
    def horizon(self):
        return 0.0 if self.N == 0 else float(self.T)

    @property
    def grid(self):
        if self.N == 0:
            return np.zeros(1)
        return np.arange(self.N + 1) * (self.T / self.N)

    def to_dict(self):
        return {
            "T": self.T, "N": self.N, "alpha": self.alpha.to_dict(), "alpha_b": self.alpha_b.to_dict(),
            "dt": self.dt, "eps_act": self.eps_act, "delta": self.delta,
            "sensitivity_mode": self.sensitivity_mode, "b_max": self.b_max, "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["alpha"] = ClassK.from_dict(d["alpha"])
        d["alpha_b"] = ClassK.from_dict(d["alpha_b"])
        return cls(**d)


@dataclass
class PsfProblem:
    """Per-region stacks G_i u <= g_i at one state.

    The prediction rows are stored once as  -W B_i u <= W (A_i x + c_i) + r ;
    ``meta`` holds (kind, grid index, generator index) for every row of W.
    """

    x: np.ndarray
    regions: Tuple[int, ...]
    W: np.ndarray
    r: np.ndarray
    meta: np.ndarray
    sys: PwaSystem
    times: np.ndarray
    predicted: np.ndarray
    n_leaves: int
    _stacks: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def stack(self, i) -> Tuple[np.ndarray, np.ndarray]:
        if i not in self._stacks:
            reg = self.sys.regions[i]
            U = self.sys.U
            G = np.vstack([-self.W @ reg.B, U.H, reg.Hu])
            g = np.concatenate([self.W @ (reg.A @ self.x + reg.c) + self.r, -U.h, -(reg.Hx @ self.x + reg.h)])
            self._stacks[i] = (G, g)
        return self._stacks[i]

    def row_kinds(self, i):
        reg = self.sys.regions[i]
        return np.concatenate([
            self.meta[:, 0],
            np.full(self.sys.U.n_rows, ROW_U),
            np.full(reg.Hu.shape[0], ROW_SLICE),
        ])

    def n_rows(self, i):
        return self.W.shape[0] + self.sys.U.n_rows + self.sys.regions[i].Hu.shape[0]

    def margins(self, i, u):
        G, g = self.stack(i)
        return g - G @ np.asarray(u, dtype=float)

    def satisfied_by(self, u, tol=FEAS_CHECK):
        """Regions whose full stack holds at u within ``tol``."""
        return tuple(i for i in self.regions if np.min(self.margins(i, u)) >= -tol)


@dataclass
class PsfSolution:
    u: Optional[np.ndarray]
    objective: float
    region: Optional[int]
    feasible: bool
    min_margin: float = np.nan
    worst_row: Optional[Tuple[str, int, int]] = None
    objectives: Dict[int, float] = field(default_factory=dict)
    iterations: int = 0


def _gradient_rows(h: PiecewiseBarrier, pts, Qsets, eps_act, selection, rng):
    """Rows g Q for every limiting gradient g at pts[l] and every Q in Qsets[l].

    Returns (W, grid index per row, generator index per row).
    """
    if selection not in ("all", "first", "random"):
        raise ValueError(f"unknown gradient selection {selection!r}")
    vals = h.piece_values(pts)
    active = vals <= vals.min(axis=1, keepdims=True) + eps_act
    grads = np.stack([np.atleast_2d(p.gradients(pts)) for p in h.pieces], axis=1)  # (L, K, n)
    ls, ks, gens = [], [], []
    for l in range(pts.shape[0]):
        act = np.flatnonzero(active[l])
        if act.size > 1:
            uniq = [act[0]]
            for k in act[1:]:
                if not any(np.max(np.abs(grads[l, k] - grads[l, j])) <= 1e-12 for j in uniq):
                    uniq.append(k)
            act = np.array(uniq)
            if selection == "first":
                act = act[:1]
            elif selection == "random":
                act = act[[int(rng.integers(act.size))]]
        ls.extend([l] * act.size)
        ks.extend(act.tolist())
        gens.extend(range(act.size))
    ls = np.array(ls, dtype=int)
    ks = np.array(ks, dtype=int)
    gens = np.array(gens, dtype=int)
    G = grads[ls, ks]
    n = pts.shape[1]
    if all(len(Q) == 1 for Q in Qsets):
        Qs = np.stack([Q[0] for Q in Qsets])
        return np.einsum("pi,pij->pj", G, Qs[ls]), ls, gens
    W, L, Gi = [], [], []
    for p in range(ls.size):
        Qs = Qsets[ls[p]]
        W.append(G[p] @ Qs)  # one row per leaf
        L.extend([ls[p]] * len(Qs))
        Gi.extend([gens[p]] * len(Qs))
    return np.vstack(W).reshape(-1, n), np.array(L, dtype=int), np.array(Gi, dtype=int)


def candidate_regions(sys: PwaSystem, x, tol=MEMBERSHIP_TOL) -> Tuple[int, ...]:
    """Regions whose input slice at x is nonempty."""
    out = []
    for i, reg in enumerate(sys.regions):
        rhs = -(reg.Hx @ x + reg.h)
        zero = ~np.any(reg.Hu != 0, axis=1)
        if np.any(rhs[zero] < -tol * (1.0 + np.abs(reg.Hx[zero]) @ np.abs(x))):
            continue
        if np.all(zero):
            out.append(i)
            continue
        res = lp_feasible(LpFeasibilityProblem(sys.m, A_in=reg.Hu[~zero], b_in=rhs[~zero] + tol))
        if res:
            out.append(i)
    return tuple(out)


def assemble(sys: PwaSystem, cl: ClosedLoopPwa, h_X: PiecewiseBarrier, h_b: PiecewiseBarrier,
             cfg: PsfConfig, x, gradient_selection="all", rng=None,
             critical: Optional[CriticalSet] = None) -> PsfProblem:
    """Build the derobustified constraint stacks of the filter at state x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    rec = integrate(cl, x, cfg.horizon, cfg.dt, cfg.tol)
    tree = aumann_sensitivity(cl, rec, cfg.grid, mode=cfg.sensitivity_mode, critical=critical,
                              b_max=cfg.b_max)
    if gradient_selection == "random" and rng is None:
        rng = np.random.default_rng(0)
    predicted = rec.states[tree.indices]
    W1, l1, g1 = _gradient_rows(h_X, predicted, tree.Q, cfg.eps_act, gradient_selection, rng)
    r1 = cfg.alpha(h_X.values(predicted))[l1] - cfg.delta
    last = len(tree.Q) - 1
    W2, _, g2 = _gradient_rows(h_b, predicted[-1:], tree.Q[-1:], cfg.eps_act, gradient_selection, rng)
    r2 = np.full(W2.shape[0], cfg.alpha_b(h_b.value(predicted[-1])) - cfg.delta)
    meta = np.vstack([
        np.column_stack([np.full(l1.size, ROW_HX), l1, g1]),
        np.column_stack([np.full(g2.size, ROW_HB), np.full(g2.size, last), g2]),
    ]).astype(int)
    return PsfProblem(
        x=x,
        regions=candidate_regions(sys, x, cfg.tol),
        W=np.vstack([W1, W2]),
        r=np.concatenate([r1, r2]),
        meta=meta,
        sys=sys,
        times=tree.times,
        predicted=predicted,
        n_leaves=tree.n_leaves,
    )


def solve_psf(prob: PsfProblem, u_ref, tie_tol=1e-12) -> PsfSolution:
    """Project u_ref onto each candidate region's stack and keep the best.

    Ties within ``tie_tol`` go to the lowest region index.  Raises Infeasible
    when every region's stack is empty.
    """
    u_ref = np.atleast_1d(np.asarray(u_ref, dtype=float))
    best = None
    objectives = {}
    iters = 0
    cert = np.inf
    for i in prob.regions:
        G, g = prob.stack(i)
        try:
            res = qp_project(QpProblem(u_ref, G, g))
        except Infeasible as exc:
            cert = min(cert, float(exc.certificate))
            continue
        iters += res.iterations
        objectives[i] = res.objective
        if best is None or res.objective < best[1].objective - tie_tol:
            best = (i, res)
    if best is None:
        raise Infeasible("no candidate region admits a safe input", certificate=cert)
    i, res = best
    margins = prob.margins(i, res.u)
    j = int(np.argmin(margins))
    return PsfSolution(
        u=res.u,
        objective=res.objective,
        region=i,
        feasible=True,
        min_margin=float(margins[j]),
        worst_row=describe_row(prob, i, j),
        objectives=objectives,
        iterations=iters,
    )


def describe_row(prob: PsfProblem, i, j):
    """(kind, grid index, generator index) of row j in region i's stack."""
    nW = prob.W.shape[0]
    if j < nW:
        kind, l, g = prob.meta[j]
        return ROW_KINDS[kind], int(l), int(g)
    if j < nW + prob.sys.U.n_rows:
        return "U", -1, j - nW
    return "slice", -1, j - nW - prob.sys.U.n_rows


def solve_single_gradient_ablation(sys, cl, h_X, h_b, cfg, x, u_ref, rng=None, critical=None) -> PsfSolution:
    """Same filter, but each limiting-gradient set is cut to one random element."""
    prob = assemble(sys, cl, h_X, h_b, cfg, x, gradient_selection="random",
                    rng=np.random.default_rng(0) if rng is None else rng, critical=critical)
    return solve_psf(prob, u_ref)
