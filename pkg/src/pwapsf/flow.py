"""Forward-Euler flow of the backup closed loop and its switching sequence."""
import csv
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from .errors import EmptyLocation, SlidingModeError, SwitchOverflow
from .pwa_core import CONTINUITY_TOL, ClosedLoopPwa, MEMBERSHIP_TOL

MAX_SWITCHES = 10_000
REFINE_POINTS = 1000  # switch instants resolved to dt / REFINE_POINTS
CHUNK = 256


@dataclass(frozen=True)
class Segment:
    """States start..stop-1 share the region set ``regions``; ``tau`` is its start time."""

    start: int
    stop: int
    regions: Tuple[int, ...]
    tau: float

    @property
    def dwell(self):
        return len(self.regions) > 1


@dataclass
class FlowRecord:
    x0: np.ndarray
    dt: float
    times: np.ndarray
    states: np.ndarray
    member: np.ndarray  # (K+1, regions) closure membership per sample
    modes: np.ndarray  # mode used for the Euler step k -> k+1
    segments: List[Segment] = field(default_factory=list)

    @property
    def sets(self) -> List[Tuple[int, ...]]:
        return [_located(row) for row in self.member]

    def set_at(self, k) -> Tuple[int, ...]:
        return _located(self.member[k])

    @property
    def switching(self):
        return [(s.tau, s.regions) for s in self.segments]

    @property
    def T(self):
        return float(self.times[-1])

    def index_of(self, tau):
        k = tau / self.dt
        ki = int(round(k))
        if abs(k - ki) > 1e-6 or not 0 <= ki < len(self.times):
            raise ValueError(f"instant {tau} is not on the integration grid")
        return ki

    def indices_of(self, taus):
        k = np.asarray(taus, dtype=float) / self.dt
        ki = np.rint(k).astype(int)
        if np.any(np.abs(k - ki) > 1e-6) or np.any(ki < 0) or np.any(ki >= len(self.times)):
            raise ValueError("some instants are not on the integration grid")
        return ki

    def to_csv(self, path):
        n = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i + 1}" for i in range(n)] + ["region_set"])
            for t, x, s in zip(self.times, self.states, self.sets):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [";".join(map(str, s))])


def power_tables(cl: ClosedLoopPwa, mode: int, dt: float, upto: int):
    """(P, S) with P[j] = (I + dt D)^j and S[j] = dt * sum_{q<j} (I + dt D)^q, j = 0..upto.

    Cached on the closed loop and grown by doubling.
    """
    key = ("pow", mode, float(dt))
    cached = cl._cache.get(key)
    if cached is not None and cached[0].shape[0] > upto:
        return cached
    n = cl.n
    size = max(upto + 1, CHUNK + 1)
    if cached is not None:
        size = max(size, 2 * cached[0].shape[0])
    M = np.eye(n) + dt * cl.regions[mode].D
    P = np.empty((size, n, n))
    S = np.empty((size, n, n))
    P[0] = np.eye(n)
    S[0] = 0.0
    for j in range(1, size):
        P[j] = M @ P[j - 1]
        S[j] = S[j - 1] + dt * P[j - 1]
    cl._cache[key] = (P, S)
    return P, S


def _steps(T, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    K = T / dt
    Ki = int(round(K))
    if abs(K - Ki) > 1e-9 * max(1.0, K):
        raise ValueError(f"T/dt = {K} is not integral")
    return Ki


def _located(member_row):
    return tuple(int(i) for i in np.flatnonzero(member_row))


def integrate(cl: ClosedLoopPwa, x0, T, dt, tol=MEMBERSHIP_TOL, max_switches=MAX_SWITCHES,
              check_sliding=True) -> FlowRecord:
    """Forward-Euler flow with located region sets at every sample.

    Within one region the Euler map is affine, so runs of steps are produced in
    chunks from cached matrix powers and cut at the first membership change.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    K = _steps(T, dt)
    n = cl.n
    states = np.empty((K + 1, n))
    member = np.empty((K + 1, len(cl.regions)), dtype=bool)
    states[0] = x0
    member[0] = cl.membership(x0, tol)[0]
    if not member[0].any():
        raise EmptyLocation(x0)
    modes = np.empty(K, dtype=int)
    k = 0
    while k < K:
        cur = member[k]
        mode = int(np.argmax(cur))
        C = min(CHUNK, K - k)
        P, S = power_tables(cl, mode, dt, C)
        X = P[1:C + 1] @ states[k] + S[1:C + 1] @ cl.regions[mode].d
        M = cl.membership(X, tol)
        changed = np.flatnonzero(np.any(M != cur, axis=1))
        take = C if changed.size == 0 else int(changed[0]) + 1
        states[k + 1:k + 1 + take] = X[:take]
        member[k + 1:k + 1 + take] = M[:take]
        modes[k:k + take] = mode
        if not M[take - 1].any():
            raise EmptyLocation(X[take - 1])
        k += take
    rec = FlowRecord(x0, float(dt), dt * np.arange(K + 1), states, member, modes)
    rec.segments = _segments(cl, rec, tol, max_switches, check_sliding)
    return rec


def _segments(cl, rec, tol, max_switches, check_sliding):
    member = rec.member
    cuts = np.flatnonzero(np.any(member[1:] != member[:-1], axis=1)) + 1
    bounds = np.concatenate([[0], cuts, [len(member)]])
    runs = [[_located(member[a]), int(a), int(b)] for a, b in zip(bounds[:-1], bounds[1:])]
    # multi-region runs shorter than two samples are crossings, not dwells
    kept = []
    for r in runs:
        if len(r[0]) > 1 and r[2] - r[1] < 2 and len(runs) > 1:
            if kept:
                kept[-1][2] = r[2]
            else:
                kept.append(None)  # absorbed by the following run
            continue
        if kept and kept[-1] is None:
            kept[-1] = [r[0], 0, r[2]]
        elif kept and kept[-1][0] == r[0]:
            kept[-1][2] = r[2]
        else:
            kept.append(list(r))
    if kept and kept[-1] is None:
        kept[-1] = [runs[0][0], 0, len(member)]
    if len(kept) > max_switches:
        raise SwitchOverflow(f"{len(kept) - 1} switches exceed the limit {max_switches}")
    out = []
    for idx, (s, start, stop) in enumerate(kept):
        if idx == 0:
            tau = 0.0
        else:
            tau = _refine(cl, rec, kept[idx - 1], tol)
            if out and tau <= out[-1].tau:
                tau = np.nextafter(out[-1].tau, np.inf)
        if check_sliding and len(s) > 1 and stop - start >= 2:
            _check_dwell(cl, rec.states[start:stop], s)
        out.append(Segment(int(start), int(stop), tuple(s), float(tau)))
    return out


def _refine(cl, rec, prev, tol):
    s, start, stop = prev
    p = stop - 1
    while p > start and rec.set_at(p) != tuple(s):
        p -= 1
    if p + 1 >= len(rec.states):
        return float(rec.times[p])
    xa, xb = rec.states[p], rec.states[p + 1]
    frac = np.arange(1, REFINE_POINTS + 1) / REFINE_POINTS
    Z = xa + frac[:, None] * (xb - xa)
    M = cl.membership(Z, tol)
    mask = np.zeros(len(cl.regions), dtype=bool)
    mask[list(s)] = True
    diff = np.flatnonzero(np.any(M != mask, axis=1))
    j = int(diff[0]) if diff.size else REFINE_POINTS - 1
    return float(rec.times[p] + frac[j] * rec.dt)


def _check_dwell(cl, X, regions):
    F = np.stack([cl.regions[i].field(X) for i in regions])
    spread = float(np.max(np.abs(F - F[0])))
    scale = 1.0 + float(np.max(np.abs(F)))
    if spread > CONTINUITY_TOL * scale * 1e3:
        raise SlidingModeError(
            f"fields of regions {regions} disagree by {spread:.3e} along a boundary dwell"
        )


def integrate_exact(cl: ClosedLoopPwa, x0, T, dt, tol=MEMBERSHIP_TOL):
    """Validation oracle: each step advanced by the exact affine flow of the mode at its start."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    K = _steps(T, dt)
    n = cl.n
    maps = {}
    states = np.empty((K + 1, n))
    states[0] = x0
    for k in range(K):
        loc = np.flatnonzero(cl.membership(states[k], tol)[0])
        if loc.size == 0:
            raise EmptyLocation(states[k])
        i = int(loc[0])
        if i not in maps:
            aug = np.zeros((n + 1, n + 1))
            aug[:n, :n] = cl.regions[i].D
            aug[:n, n] = cl.regions[i].d
            maps[i] = expm(aug * dt)
        E = maps[i]
        states[k + 1] = E[:n, :n] @ states[k] + E[:n, n]
    return states


@dataclass(frozen=True)
class ReachResult:
    member: bool
    min_h_X: float
    h_b_T: float
    record: FlowRecord

    def __bool__(self):
        return self.member


def is_in_constrained_reachable(cl: ClosedLoopPwa, h_X, h_b, x, T, dt, N: Optional[int] = None,
                                tol=MEMBERSHIP_TOL) -> ReachResult:
    """Check h_X >= 0 along the backup flow on the grid and h_b >= 0 at T.

    ``N`` selects the grid {lT/N}; by default every integration sample is used.
    """
    rec = integrate(cl, x, T, dt, tol)
    if N is None or N == 0 or T == 0:
        idx = np.arange(len(rec.times)) if N is None else np.array([0])
    else:
        idx = np.array([rec.index_of(l * T / N) for l in range(N + 1)])
    hx = float(np.min(h_X.values(rec.states[idx])))
    hb = h_b.value(rec.states[-1])
    return ReachResult(hx >= 0 and hb >= 0, hx, hb, rec)
