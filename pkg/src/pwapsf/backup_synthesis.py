"""Sampled synthesis of a quadratic backup barrier for a PWA closed loop."""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .barrier import ClassK, PiecewiseBarrier, QuadraticPiece, check_backup_pair
from .errors import SynthesisFailed
from .pwa_core import ClosedLoopPwa, Polyhedron


@dataclass(frozen=True)
class QuadraticBackup:
    R: np.ndarray
    gamma: float
    margin: float
    n_checked: int

    @property
    def barrier(self):
        return PiecewiseBarrier([QuadraticPiece(self.R, self.gamma)])


def ellipse_samples(R, gamma, n_boundary, n_interior, rng):
    """Points on and inside {x' R x <= gamma}."""
    n = R.shape[0]
    L = np.linalg.cholesky(np.linalg.inv(R))  # x = sqrt(gamma) L z, |z| = 1 on the boundary
    z = rng.normal(size=(n_boundary + n_interior, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    radius = np.ones(n_boundary + n_interior)
    radius[n_boundary:] = rng.uniform(size=n_interior) ** (1.0 / n)
    return np.sqrt(gamma) * (z * radius[:, None]) @ L.T


def max_gamma_inside(R, H, h):
    """Largest gamma with {x' R x <= gamma} inside {H x + h <= 0}."""
    Rinv = np.linalg.inv(R)
    H = np.atleast_2d(H)
    if np.any(h >= 0):
        raise SynthesisFailed("the origin must be an interior point of the constraint set")
    support = np.einsum("ki,ij,kj->k", H, Rinv, H)
    return float(np.min(h ** 2 / support))


def synthesize_quadratic_backup(cl: ClosedLoopPwa, X: Polyhedron, kappa_b: float,
                                input_rows: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                                n_samples=10_000, n_gamma=40, seed=0, eps_verify=1e-9) -> QuadraticBackup:
    """Common Lyapunov candidate R (average of per-mode solutions) and the largest verified gamma.

    ``input_rows`` = (G, g) optionally adds state constraints G x <= g that the
    safe ellipse must also respect (e.g. the backup input staying inside U).
    """
    for k, reg in enumerate(cl.regions):
        if np.any(np.linalg.eigvals(reg.D).real >= 0):
            raise SynthesisFailed(f"mode {k} is not Hurwitz", witness=k)
        if np.any(np.abs(reg.d) > 0):
            raise SynthesisFailed("affine offsets are not supported; the origin must be an equilibrium", witness=k)
    n = cl.n
    sols = [solve_continuous_lyapunov(reg.D.T, -np.eye(n)) for reg in cl.regions]
    R = 0.5 * (np.mean(sols, axis=0) + np.mean(sols, axis=0).T)
    if np.min(np.linalg.eigvalsh(R)) <= 0:
        raise SynthesisFailed("averaged Lyapunov candidate is not positive definite")
    H, h = X.H, X.h
    if input_rows is not None:
        G, g = input_rows
        H = np.vstack([H, G])
        h = np.concatenate([h, -np.asarray(g, dtype=float)])
    gamma_max = max_gamma_inside(R, H, h)
    alpha_b = ClassK(kappa_b)
    rng = np.random.default_rng(seed)
    worst = None
    for gamma in gamma_max * np.linspace(1.0, 1.0 / n_gamma, n_gamma):
        samples = ellipse_samples(R, gamma, n_samples // 2, n_samples - n_samples // 2, rng)
        h_b = PiecewiseBarrier([QuadraticPiece(R, gamma)])
        report = check_backup_pair(h_b, cl, alpha_b, samples, eps_verify=eps_verify, strict=False)
        if report.passed:
            return QuadraticBackup(R, float(gamma), report.margin, report.n_samples)
        if worst is None or report.margin < worst.margin:
            worst = report
    raise SynthesisFailed(f"no gamma passed the sampled check (worst margin {worst.margin:.3e})",
                          witness=worst.witness)
