"""Closed-form filter restricted to the segment between backup and reference inputs."""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import NoRegion
from .psf import FEAS_CHECK, PsfProblem

ETA_ZERO = 1e-14
EMPTY_INNER = ("segment_end", "segment_start", "zero")


@dataclass(frozen=True)
class RegionStack:
    """eta * lam <= omega, one entry per row (lambda-bound rows last)."""

    region: int
    eta: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class LambdaResult:
    lam: float
    region: Optional[int]
    per_region: Dict[int, float]


def _stacked(sys, regions):
    """Model data of the given regions as 3-d arrays, cached on the system.

    Columns act on v = [u; x; 1; s] with v1 = [u_r - u_b; 0; 0; 1] and
    v2 = [u_b; x; 1; 0].  M[k] = [B A c 0] feeds the prediction rows.  S[k]
    holds the other rows as [G H -g 0] for G u <= g - H x (U rows, then
    slice rows, padded with 0 <= 1), then the bounds lam <= 1 and -lam <= 0,
    so that E = S v1 and Om = -S v2 there.  Both come back flattened.
    """
    cache = sys.__dict__.setdefault("_explicit_arrays", {})
    if regions not in cache:
        regs = [sys.regions[i] for i in regions]
        n, m = sys.n, sys.m
        p = m + n + 2
        U = sys.U
        nU = U.n_rows
        q = nU + max(reg.Hu.shape[0] for reg in regs)
        M = np.zeros((len(regs), n, p))
        S = np.zeros((len(regs), q + 2, p))
        S[:, :q, -2] = -1.0  # padding rows read 0 <= 1
        S[:, q, -2:] = (-1.0, 1.0)
        S[:, q + 1, -1] = -1.0
        for k, reg in enumerate(regs):
            M[k, :, :m], M[k, :, m:m + n], M[k, :, -2] = reg.B, reg.A, reg.c
            r = nU + reg.Hu.shape[0]
            S[k, :nU, :m], S[k, :nU, -2] = U.H, U.h
            S[k, nU:r, :m], S[k, nU:r, m:m + n], S[k, nU:r, -2] = reg.Hu, reg.Hx, reg.h
        counts = np.array([nU + reg.Hu.shape[0] for reg in regs], dtype=int)
        # flattened to (p, regions * rows) so that V @ block is one 2-d product
        cache[regions] = (np.ascontiguousarray(M.transpose(2, 0, 1).reshape(p, -1)),
                          np.ascontiguousarray(S.transpose(2, 0, 1).reshape(p, -1)), counts)
    return cache[regions]


def reduce_matrices(prob: PsfProblem, u_b, u_r):
    """All regions at once: (regions, E, Om, counts) with E[k] lam <= Om[k] row-wise.

    Rows are prediction rows, U rows, slice rows (padded to a common length
    with 0 <= 1) and finally the bounds lam <= 1, -lam <= 0.  counts[k] is
    the number of genuine rows of region k before the two bounds.
    """
    regions = tuple(prob.regions)
    if not regions:
        return regions, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int)
    Mf, Sf, q_rows = _stacked(prob.sys, regions)
    p = Mf.shape[0]
    n = prob.x.size
    m = p - n - 2
    R = len(regions)
    # rows [-v1; v2]: prediction rows need -W M v1 and W M v2, the others S v1 and -S v2
    V = np.zeros((2, p))
    V[0, :m] = u_b
    V[0, :m] -= u_r
    V[1, :m] = u_b
    V[1, m:-2] = prob.x
    V[1, -2] = 1.0
    V[0, -1] = -1.0
    nW = prob.W.shape[0]
    X = np.concatenate([(V @ Mf).reshape(2, R, n) @ prob.W.T, (-V @ Sf).reshape(2, R, -1)], axis=2)
    E, Om = X
    Om[:, :nW] += prob.r
    return regions, E, Om, nW + q_rows


def reduce_to_lambda(prob: PsfProblem, u_b, u_r) -> List[RegionStack]:
    """Substitute u = u_b + lam (u_r - u_b) into every region's stack."""
    regions, E, Om, counts = reduce_matrices(prob, u_b, u_r)
    return [RegionStack(i, np.concatenate([E[k, :c], E[k, -2:]]), np.concatenate([Om[k, :c], Om[k, -2:]]))
            for k, (i, c) in enumerate(zip(regions, counts))]


def _step(v):
    return (np.asarray(v) >= 0).astype(float)


def region_value(eta, omega, empty_inner="segment_end", eta_zero=ETA_ZERO):
    """Inner min over rows of one region's stack, in two passes."""
    if empty_inner not in EMPTY_INNER:
        raise ValueError(f"empty_inner must be one of {EMPTY_INNER}")
    eta = np.asarray(eta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    scale = eta_zero * np.maximum(1.0, np.abs(omega))
    pos = eta > scale
    neg = eta < -scale
    zero = ~(pos | neg)
    vals = np.empty(eta.size)
    vals[pos] = omega[pos] / eta[pos]
    vals[zero] = _step(omega[zero])
    inside = vals[pos][(vals[pos] > 0) & (vals[pos] < 1)]
    if inside.size:
        vals[neg] = _step(omega[neg] - eta[neg] * inside.min())
    elif empty_inner == "segment_end":
        vals[neg] = _step(omega[neg] - eta[neg])
    elif empty_inner == "segment_start":
        vals[neg] = _step(omega[neg])
    else:
        vals[neg] = 0.0
    return float(vals.min()) if vals.size else 1.0


def region_values(E, Om, empty_inner="segment_end", eta_zero=ETA_ZERO):
    """region_value for every row of (E, Om) at once."""
    if empty_inner not in EMPTY_INNER:
        raise ValueError(f"empty_inner must be one of {EMPTY_INNER}")
    thr = np.abs(Om)
    np.maximum(thr, 1.0, out=thr)
    thr *= eta_zero
    pos = E > thr
    neg = E < -thr
    ratio = np.divide(Om, E, out=np.full(E.shape, np.inf), where=pos)
    # the smallest positive ratio is the inner min whenever it lies below 1
    inside = np.where(ratio > 0, ratio, np.inf).min(axis=1)
    empty = inside >= 1
    inside[empty] = 0.0 if empty_inner == "segment_start" else 1.0
    # rows with eta = 0 read step(omega); eta < 0 rows step(omega - eta * inner)
    vals = Om - np.where(neg, E * inside[:, None], 0.0) >= 0
    if empty_inner == "zero":
        vals[empty[:, None] & neg] = False
    return np.where(pos, ratio, vals).min(axis=1)


def lambda_star(stacks: List[RegionStack], empty_inner="segment_end") -> LambdaResult:
    """max over regions of the per-region value; ties go to the first region listed.

    ``empty_inner`` fixes the eta < 0 rows when no ratio lies in (0, 1):
    'segment_end' treats the inner min as 1, 'segment_start' as 0, and
    'zero' sets those rows' value to 0.
    """
    if not stacks:
        raise NoRegion("no candidate region at this state")
    per = {s.region: region_value(s.eta, s.omega, empty_inner) for s in stacks}
    best = max(per, key=lambda i: (per[i], -stacks_index(stacks, i)))
    return LambdaResult(per[best], best, per)


def stacks_index(stacks, region):
    for k, s in enumerate(stacks):
        if s.region == region:
            return k
    raise KeyError(region)


def lambda_grid_oracle(stacks: List[RegionStack], points=100_001) -> float:
    """Largest lam on a uniform grid of [0, 1] feasible for some region, or -1."""
    lam = np.linspace(0.0, 1.0, points)
    best = -1.0
    for s in stacks:
        ok = np.all(np.outer(s.eta, lam) <= s.omega[:, None] + 1e-12, axis=0)
        if ok.any():
            best = max(best, float(lam[np.flatnonzero(ok)[-1]]))
    return best


@dataclass(frozen=True)
class ExplicitResult:
    u: np.ndarray
    lam: float
    region: Optional[int]
    feasible: bool
    min_margin: float


def apply_explicit(prob: PsfProblem, u_b, u_r, empty_inner="segment_end", tol=FEAS_CHECK) -> ExplicitResult:
    """u = u_b + lam* (u_r - u_b), checked against the maximising region's stack.

    The check reads g - G u off the reduced rows, omega - lam eta.

    ``feasible`` is False when lam* < 0 or the check fails; callers then fall back.
    """
    u_b = np.atleast_1d(np.asarray(u_b, dtype=float))
    u_r = np.atleast_1d(np.asarray(u_r, dtype=float))
    regions, E, Om, _ = reduce_matrices(prob, u_b, u_r)
    if not regions:
        raise NoRegion("no candidate region at this state")
    vals = region_values(E, Om, empty_inner)
    k = int(vals.argmax())  # first maximiser
    lam = float(vals[k])
    lam_u = max(lam, 0.0)
    u = u_b + lam_u * (u_r - u_b)
    # g - G u on the region's own rows (the lambda bounds excluded)
    margin = float((Om[k, :-2] - lam_u * E[k, :-2]).min())
    feasible = lam >= 0 and margin >= -tol
    return ExplicitResult(u, lam, regions[k], feasible, margin)
