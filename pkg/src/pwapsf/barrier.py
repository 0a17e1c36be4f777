"""Min-of-pieces barrier functions, limiting gradients and class-K gains."""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AssumptionViolated, EmptyLocation
from .pwa_core import ClosedLoopPwa, MEMBERSHIP_TOL

ACTIVE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class AffinePiece:
    """a.x + b"""

    a: np.ndarray
    b: float

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    def values(self, X):
        return X @ self.a + self.b

    def gradients(self, X):
        X = np.atleast_2d(X)
        return np.broadcast_to(self.a, X.shape)

    def to_dict(self):
        return {"kind": "affine", "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class QuadraticPiece:
    """gamma - x' R x with R symmetric."""

    R: np.ndarray
    gamma: float

    def __post_init__(self):
        R = np.atleast_2d(np.array(self.R, dtype=float))
        R = 0.5 * (R + R.T)
        R.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "gamma", float(self.gamma))

    def values(self, X):
        X = np.asarray(X, dtype=float)
        return self.gamma - np.einsum("...i,ij,...j->...", X, self.R, X)

    def gradients(self, X):
        return -2.0 * np.atleast_2d(X) @ self.R

    def to_dict(self):
        return {"kind": "quadratic", "R": self.R.tolist(), "gamma": self.gamma}


Piece = Union[AffinePiece, QuadraticPiece]


def piece_from_dict(data) -> Piece:
    if data["kind"] == "affine":
        return AffinePiece(data["a"], data["b"])
    if data["kind"] == "quadratic":
        return QuadraticPiece(data["R"], data["gamma"])
    raise ValueError(f"unknown piece kind {data['kind']!r}")


class PiecewiseBarrier:
    """h(x) = min_k piece_k(x)."""

    def __init__(self, pieces: Sequence[Piece]):
        if not pieces:
            raise ValueError("a barrier needs at least one piece")
        self.pieces: Tuple[Piece, ...] = tuple(pieces)

    @classmethod
    def from_halfspaces(cls, H, h):
        """Barrier of {x | H x + h <= 0}: min_k -(H_k x + h_k)."""
        H = np.atleast_2d(np.asarray(H, dtype=float))
        h = np.asarray(h, dtype=float).reshape(-1)
        return cls([AffinePiece(-H[k], -h[k]) for k in range(H.shape[0])])

    def piece_values(self, X):
        """(..., k) array of every piece's value."""
        X = np.asarray(X, dtype=float)
        return np.stack([p.values(X) for p in self.pieces], axis=-1)

    def value(self, x):
        return float(np.min(self.piece_values(x)))

    def values(self, X):
        return np.min(self.piece_values(X), axis=-1)

    def limiting_gradients(self, x, eps_act=ACTIVE_TOL):
        """Gradients of the pieces within ``eps_act`` of the minimum, as rows.

        Duplicate rows are removed; the Clarke gradient is their convex hull.
        """
        if eps_act < 0:
            raise ValueError("eps_act must be non-negative")
        x = np.asarray(x, dtype=float)
        vals = self.piece_values(x)
        active = np.flatnonzero(vals <= vals.min() + eps_act)
        grads = np.vstack([self.pieces[k].gradients(x)[0] for k in active])
        return _unique_rows(grads)

    def active_pieces(self, x, eps_act=ACTIVE_TOL):
        vals = self.piece_values(np.asarray(x, dtype=float))
        return tuple(int(k) for k in np.flatnonzero(vals <= vals.min() + eps_act))

    def to_dict(self):
        return {"pieces": [p.to_dict() for p in self.pieces]}

    @classmethod
    def from_dict(cls, data):
        return cls([piece_from_dict(p) for p in data["pieces"]])


def _unique_rows(G, tol=1e-12):
    keep = []
    for row in G:
        if not any(np.max(np.abs(row - k)) <= tol for k in keep):
            keep.append(row)
    return np.array(keep)


def limiting_gradients(h: PiecewiseBarrier, x, eps_act=ACTIVE_TOL):
    return h.limiting_gradients(x, eps_act)


@dataclass(frozen=True)
class ClassK:
    """alpha(s) = kappa * s, used unchanged for negative s."""

    kappa: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    def __call__(self, s):
        return self.kappa * np.asarray(s, dtype=float) if np.ndim(s) else self.kappa * float(s)

    def to_dict(self):
        return {"kind": "linear", "kappa": self.kappa}

    @classmethod
    def from_dict(cls, data):
        if data.get("kind", "linear") != "linear":
            raise ValueError("only linear class-K functions are supported")
        return cls(float(data["kappa"]))


@dataclass
class SamplingPlan:
    """States at which the backup pair is checked.

    ``interior`` are points with h_b >= 0; ``boundary`` lie on {h_b = 0}.
    """

    interior: np.ndarray
    boundary: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def points(self):
        if self.boundary.size == 0:
            return self.interior
        return np.vstack([self.interior, self.boundary])


def sample_safe_set(h_b: PiecewiseBarrier, lower, upper, n_interior, n_boundary, rng,
                    center=None, domain=None) -> SamplingPlan:
    """Rejection-sample {h_b >= 0} inside a box and bisect rays to its boundary.

    ``center`` must satisfy h_b(center) > 0; boundary points are found along
    random rays from it (the safe set is assumed star-shaped about ``center``).
    ``domain`` optionally restricts samples further (callable returning bool
    per row).
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = lower.size
    chunks = []
    got = 0
    tries = 0
    while got < n_interior and tries < 1000:
        tries += 1
        cand = rng.uniform(lower, upper, size=(max(4 * n_interior, 64), n))
        ok = h_b.values(cand) >= 0
        if domain is not None:
            ok &= domain(cand)
        chunks.append(cand[ok])
        got += int(ok.sum())
    interior = np.vstack(chunks)[:n_interior] if chunks else np.zeros((0, n))
    boundary = np.zeros((0, n))
    if n_boundary and center is not None:
        center = np.asarray(center, dtype=float)
        if h_b.value(center) <= 0:
            raise ValueError("center must lie strictly inside the safe set")
        span = float(np.max(upper - lower))
        dirs = rng.normal(size=(n_boundary, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pts = []
        for d in dirs:
            lo, hi = 0.0, span
            if h_b.value(center + hi * d) >= 0:
                continue
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if h_b.value(center + mid * d) >= 0:
                    lo = mid
                else:
                    hi = mid
            p = center + lo * d
            if domain is None or bool(domain(p[None])[0]):
                pts.append(p)
        if pts:
            boundary = np.array(pts)
    return SamplingPlan(interior, boundary)


@dataclass(frozen=True)
class BackupPairReport:
    margin: float
    witness: np.ndarray
    n_samples: int
    passed: bool
    tolerance: float


def check_backup_pair(h_b: PiecewiseBarrier, cl: ClosedLoopPwa, alpha_b: ClassK, samples,
                      eps_verify=1e-9, eps_act=ACTIVE_TOL, tol=MEMBERSHIP_TOL, strict=True) -> BackupPairReport:
    """Sampled check of  dh_b . f_b(x) >= -alpha_b(h_b(x))  on S_b.

    The margin at a sample is the minimum over every limiting gradient of
    h_b and every closed-loop mode whose closure contains the sample.

    Raises AssumptionViolated (with the worst state) when ``strict`` and the
    worst margin is below ``-eps_verify``.
    """
    X = samples.points if isinstance(samples, SamplingPlan) else np.atleast_2d(samples)
    if X.shape[0] == 0:
        raise ValueError("empty sampling plan")
    worst = np.inf
    witness = X[0]
    member = cl.membership(X, tol)
    hv = h_b.values(X)
    for x, hx, row in zip(X, hv, member):
        modes = np.flatnonzero(row)
        if modes.size == 0:
            raise EmptyLocation(x)
        grads = h_b.limiting_gradients(x, eps_act)
        fields = np.array([cl.regions[i].field(x) for i in modes])
        margin = float(np.min(grads @ fields.T)) + alpha_b(hx)
        if margin < worst:
            worst, witness = margin, x
    report = BackupPairReport(worst, np.array(witness), X.shape[0], worst >= -eps_verify, eps_verify)
    if strict and not report.passed:
        raise AssumptionViolated(report.witness, worst)
    return report
