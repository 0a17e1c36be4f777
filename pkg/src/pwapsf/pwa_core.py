"""Polyhedra, PWA systems and piecewise-linear policies.

Conventions
-----------
* A polyhedron is ``{z | H z + h <= 0}``.
* Region indices are 0-based everywhere.
* Membership uses an absolute tolerance on the entries of ``H z + h``; a point
  on a shared facet is reported in *every* adjacent region on purpose, since
  limiting gradients and sensitivities need all of them.
"""
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyLocation, Infeasible, PartitionError, RefinementOverflow
from .optim import QpProblem, polyhedron_nonempty, qp_project

MEMBERSHIP_TOL = 1e-9
CONTINUITY_TOL = 1e-7
INTERIOR_RADIUS = 1e-7


def _frozen(a, shape=None):
    arr = np.array(a, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Polyhedron:
    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        h = np.atleast_1d(np.asarray(self.h, dtype=float)).reshape(-1)
        if H.shape[0] < 1:
            raise ValueError("a polyhedron needs at least one row")
        if H.shape[0] != h.size:
            raise ValueError(f"H has {H.shape[0]} rows but h has {h.size} entries")
        object.__setattr__(self, "H", _frozen(H))
        object.__setattr__(self, "h", _frozen(h))

    @classmethod
    def whole_space(cls, n):
        """R^n written with a single always-satisfied row."""
        return cls(np.zeros((1, n)), [-1.0])

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = lower.size
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([-upper, lower]))

    @property
    def dim(self):
        return self.H.shape[1]

    @property
    def n_rows(self):
        return self.H.shape[0]

    def residual(self, z):
        """H z + h, vectorised over leading axes of ``z``."""
        return np.asarray(z, dtype=float) @ self.H.T + self.h

    def contains(self, z, tol=MEMBERSHIP_TOL):
        return bool(np.all(self.residual(z) <= tol))

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        return Polyhedron(np.vstack([self.H, other.H]), np.concatenate([self.h, other.h]))

    def is_empty(self, tol=MEMBERSHIP_TOL):
        return not polyhedron_nonempty(self.H, -self.h, tol=tol).feasible

    def has_interior(self, radius=INTERIOR_RADIUS):
        """True if a ball of ``radius`` fits inside (rows scaled to unit norm)."""
        norms = np.linalg.norm(self.H, axis=1)
        return polyhedron_nonempty(self.H, -self.h - radius * norms).feasible

    def project(self, z):
        """Closest point of the polyhedron to ``z``."""
        return qp_project(QpProblem(np.asarray(z, dtype=float), self.H, -self.h)).u

    def to_dict(self):
        return {"H": self.H.tolist(), "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["H"], data["h"])


@dataclass(frozen=True, eq=False)
class PwaRegion:
    """Mode of the open-loop system on {(x, u) | Hx x + Hu u + h <= 0}."""

    Hx: np.ndarray
    Hu: np.ndarray
    h: np.ndarray
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        m = B.shape[1]
        Hx = np.asarray(self.Hx, dtype=float).reshape(-1, n)
        Hu = np.asarray(self.Hu, dtype=float).reshape(Hx.shape[0], m)
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "c", _frozen(self.c, (n,)))
        object.__setattr__(self, "Hx", _frozen(Hx))
        object.__setattr__(self, "Hu", _frozen(Hu))
        object.__setattr__(self, "h", _frozen(self.h, (Hx.shape[0],)))

    @property
    def polyhedron(self):
        return Polyhedron(np.hstack([self.Hx, self.Hu]), self.h)

    def slice_at(self, x):
        """Input slice {u | Hu u <= -(Hx x + h)} as (A, b)."""
        return self.Hu, -(self.Hx @ x + self.h)

    def dynamics(self, x, u):
        return self.A @ x + self.B @ u + self.c


def _validate_partition(polys: Sequence[Polyhedron], fields, n_samples, rng, box_half_width=10.0):
    """Pairwise interior-disjointness and sampled continuity across facets.

    ``fields[i](z)`` returns the vector field of cell ``i`` at the stacked
    point ``z``.  Returns the largest jump observed on sampled shared points.
    """
    worst_jump = 0.0
    dim = polys[0].dim
    for i, j in combinations(range(len(polys)), 2):
        inter = polys[i].intersect(polys[j])
        if inter.has_interior():
            raise PartitionError(f"regions {i} and {j} have overlapping interiors")
        if inter.is_empty():
            continue
        for _ in range(n_samples):
            probe = rng.uniform(-box_half_width, box_half_width, size=dim)
            try:
                z = inter.project(probe)
            except Infeasible:
                break
            jump = float(np.max(np.abs(fields[i](z) - fields[j](z))))
            scale = 1.0 + float(np.max(np.abs(fields[i](z))))
            worst_jump = max(worst_jump, jump / scale)
            if jump > CONTINUITY_TOL * scale:
                raise PartitionError(
                    f"vector field jumps by {jump:.3e} between regions {i} and {j} at {z}"
                )
    return worst_jump


class _Locator:
    """Stacked constraint rows for vectorised membership of many points."""

    def __init__(self, polys):
        self.H = np.vstack([p.H for p in polys])
        self.h = np.concatenate([p.h for p in polys])
        counts = [p.n_rows for p in polys]
        self.starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)

    def membership(self, Z, tol):
        """Boolean (k, r) matrix: row k, column i is True if Z[k] in clo(R_i)."""
        Z = np.atleast_2d(Z)
        res = Z @ self.H.T + self.h
        worst = np.maximum.reduceat(res, self.starts, axis=1)
        return worst <= tol


class PwaSystem:
    """Open-loop continuous PWA system over a state-input partition.

    Parameters
    ----------
    regions : sequence of PwaRegion
    U : Polyhedron
        Input constraint set (a single polyhedron).
    validate : bool
        Check interior disjointness and continuity by LP tests and sampling.
    """

    def __init__(self, regions: Sequence[PwaRegion], U: Polyhedron, validate=True, n_samples=8, seed=0):
        if not regions:
            raise ValueError("at least one region is required")
        self.regions: Tuple[PwaRegion, ...] = tuple(regions)
        self.n = self.regions[0].A.shape[0]
        self.m = self.regions[0].B.shape[1]
        for k, reg in enumerate(self.regions):
            if reg.A.shape != (self.n, self.n) or reg.B.shape != (self.n, self.m):
                raise PartitionError(f"region {k} has inconsistent dimensions")
        if U.dim != self.m:
            raise PartitionError("input set dimension does not match B")
        self.U = U
        self._locator = _Locator([r.polyhedron for r in self.regions])
        self.state_only = all(np.all(r.Hu == 0) for r in self.regions)
        if validate:
            polys = [r.polyhedron for r in self.regions]
            fields = [
                (lambda z, r=r: r.A @ z[: self.n] + r.B @ z[self.n:] + r.c) for r in self.regions
            ]
            _validate_partition(polys, fields, n_samples, np.random.default_rng(seed))

    def __len__(self):
        return len(self.regions)

    def dynamics(self, x, u, region=None, tol=MEMBERSHIP_TOL):
        if region is None:
            region = locate_state_input(self, x, u, tol)[0]
        return self.regions[region].dynamics(x, u)

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "U": self.U.to_dict(),
            "regions": [
                {
                    "Hx": r.Hx.tolist(),
                    "Hu": r.Hu.tolist(),
                    "h": r.h.tolist(),
                    "A": r.A.tolist(),
                    "B": r.B.tolist(),
                    "c": r.c.tolist(),
                }
                for r in self.regions
            ],
        }

    @classmethod
    def from_dict(cls, data, validate=True):
        regions = [
            PwaRegion(r["Hx"], r["Hu"], r["h"], r["A"], r["B"], r["c"]) for r in data["regions"]
        ]
        return cls(regions, Polyhedron.from_dict(data["U"]), validate=validate)


@dataclass(frozen=True, eq=False)
class ClosedLoopRegion:
    poly: Polyhedron
    D: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        object.__setattr__(self, "D", _frozen(D))
        object.__setattr__(self, "d", _frozen(self.d, (D.shape[0],)))

    def field(self, x):
        return x @ self.D.T + self.d


class ClosedLoopPwa:
    """Autonomous PWA system xdot = D_i x + d_i on a state partition."""

    def __init__(self, regions: Sequence[ClosedLoopRegion], validate=True, n_samples=8, seed=0):
        if not regions:
            raise ValueError("at least one region is required")
        self.regions: Tuple[ClosedLoopRegion, ...] = tuple(regions)
        self.n = self.regions[0].D.shape[0]
        for k, reg in enumerate(self.regions):
            if reg.D.shape != (self.n, self.n) or reg.poly.dim != self.n:
                raise PartitionError(f"region {k} has inconsistent dimensions")
        self.L = max(float(np.linalg.norm(r.D, 2)) for r in self.regions)
        self._locator = _Locator([r.poly for r in self.regions])
        self._cache = {}
        if validate:
            _validate_partition(
                [r.poly for r in self.regions],
                [r.field for r in self.regions],
                n_samples,
                np.random.default_rng(seed),
            )

    def __len__(self):
        return len(self.regions)

    def membership(self, X, tol=MEMBERSHIP_TOL):
        return self._locator.membership(X, tol)

    def field(self, x, tol=MEMBERSHIP_TOL):
        return self.regions[locate_state(self, x, tol)[0]].field(x)

    def to_dict(self):
        return {
            "regions": [
                {"poly": r.poly.to_dict(), "D": r.D.tolist(), "d": r.d.tolist()} for r in self.regions
            ]
        }

    @classmethod
    def from_dict(cls, data, validate=True):
        return cls(
            [
                ClosedLoopRegion(Polyhedron.from_dict(r["poly"]), r["D"], r["d"])
                for r in data["regions"]
            ],
            validate=validate,
        )


@dataclass(frozen=True, eq=False)
class PolicyPiece:
    region: Polyhedron
    K: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        object.__setattr__(self, "K", _frozen(K))
        object.__setattr__(self, "k", _frozen(self.k, (K.shape[0],)))


class PiecewiseLinearPolicy:
    """u = K_l x + k_l on the l-th polyhedral piece."""

    def __init__(self, pieces: Sequence[PolicyPiece]):
        if not pieces:
            raise ValueError("a policy needs at least one piece")
        self.pieces: Tuple[PolicyPiece, ...] = tuple(pieces)
        self.m, self.n = self.pieces[0].K.shape

    @classmethod
    def linear(cls, K, k=None):
        K = np.atleast_2d(np.asarray(K, dtype=float))
        k = np.zeros(K.shape[0]) if k is None else k
        return cls([PolicyPiece(Polyhedron.whole_space(K.shape[1]), K, k)])

    def __call__(self, x, tol=MEMBERSHIP_TOL):
        x = np.asarray(x, dtype=float)
        for piece in self.pieces:
            if piece.region.contains(x, tol):
                return piece.K @ x + piece.k
        raise EmptyLocation(x, f"policy undefined at {x!r}")

    def check_continuity(self, n_samples=8, seed=0):
        fields = [(lambda z, p=p: p.K @ z + p.k) for p in self.pieces]
        if len(self.pieces) < 2:
            return 0.0
        return _validate_partition([p.region for p in self.pieces], fields, n_samples,
                                   np.random.default_rng(seed))

    def to_dict(self):
        return {
            "pieces": [
                {"region": p.region.to_dict(), "K": p.K.tolist(), "k": p.k.tolist()} for p in self.pieces
            ]
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            [PolicyPiece(Polyhedron.from_dict(p["region"]), p["K"], p["k"]) for p in data["pieces"]]
        )


def locate_state(sys: ClosedLoopPwa, x, tol=MEMBERSHIP_TOL) -> Tuple[int, ...]:
    """Indices of all regions whose tol-inflated closure contains ``x``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    hits = np.flatnonzero(sys.membership(np.asarray(x, dtype=float), tol)[0])
    if hits.size == 0:
        raise EmptyLocation(np.asarray(x))
    return tuple(int(i) for i in hits)


def locate_state_input(sys: PwaSystem, x, u, tol=MEMBERSHIP_TOL) -> Tuple[int, ...]:
    """Indices of all open-loop regions P_i containing (x, u); U is not checked here."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    z = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(u, dtype=float))])
    hits = np.flatnonzero(sys._locator.membership(z, tol)[0])
    if hits.size == 0:
        raise EmptyLocation(z)
    return tuple(int(i) for i in hits)


def close_loop(sys: PwaSystem, policy: PiecewiseLinearPolicy, max_cells=1000, validate=True) -> ClosedLoopPwa:
    """Common refinement of the open-loop partition and the policy pieces.

    Each candidate cell substitutes u = K_l x + k_l into the rows of P_j and
    intersects with the policy piece; cells without interior are dropped.
    """
    cells: List[ClosedLoopRegion] = []
    for reg in sys.regions:
        for piece in policy.pieces:
            H = np.vstack([reg.Hx + reg.Hu @ piece.K, piece.region.H])
            h = np.concatenate([reg.Hu @ piece.k + reg.h, piece.region.h])
            keep = np.linalg.norm(H, axis=1) > 0
            if not np.all(keep):
                if np.any(h[~keep] > 0):
                    continue
                H, h = H[keep], h[keep]
                if H.shape[0] == 0:
                    H, h = np.zeros((1, sys.n)), np.array([-1.0])
            poly = Polyhedron(H, h)
            if not poly.has_interior():
                continue
            cells.append(
                ClosedLoopRegion(poly, reg.A + reg.B @ piece.K, reg.B @ piece.k + reg.c)
            )
            if len(cells) > max_cells:
                raise RefinementOverflow(f"refinement exceeded {max_cells} cells")
    if not cells:
        raise PartitionError("closed loop has no full-dimensional cell")
    return ClosedLoopPwa(cells, validate=validate)
