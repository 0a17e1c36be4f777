"""Predictive safety filters for continuous piecewise affine systems."""
from .barrier import AffinePiece, ClassK, PiecewiseBarrier, QuadraticPiece, check_backup_pair
from .explicit_filter import apply_explicit, lambda_star
from .flow import integrate, is_in_constrained_reachable
from .psf import PsfConfig, assemble, solve_psf, solve_single_gradient_ablation
from .pwa_core import PiecewiseLinearPolicy, Polyhedron, PwaRegion, PwaSystem, close_loop
from .sensitivity import aumann_sensitivity, compute_critical_sets

__version__ = "0.1.0"
