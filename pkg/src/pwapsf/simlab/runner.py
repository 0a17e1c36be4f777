"""Closed-loop simulation under the safety filters."""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from ..errors import (BranchOverflow, EmptyLocation, Infeasible, IterationCap, NonInvertible,
                      NoRegion, SlidingModeError, SwitchOverflow)
from ..explicit_filter import apply_explicit
from ..optim import QpProblem, qp_project
from ..psf import PsfConfig, assemble, solve_psf
from ..pwa_core import locate_state_input
from ..sensitivity import compute_critical_sets
from .reference import reference_policy, tracking_cost
from .scenarios import Scenario

log = logging.getLogger(__name__)

CONTROLLERS = ("psf", "explicit", "ablation", "standard", "reference", "backup")
# failures inside a controller call that trigger the fallback input
RECOVERABLE = (Infeasible, BranchOverflow, SwitchOverflow, EmptyLocation, IterationCap,
               NonInvertible, NoRegion, SlidingModeError)


@dataclass
class StepInfo:
    u: np.ndarray
    region: int = -1
    margin: float = np.nan
    lam: float = np.nan
    fallback: bool = False
    solve_s: float = np.nan


@dataclass
class RunMetrics:
    violations: int
    worst_h_X: float
    tracking_error: float
    mean_us: float
    p50_us: float
    p95_us: float
    mean_solve_us: float
    infeasible: int
    fallbacks: int
    steps: int

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class RunResult:
    scenario: str
    controller: str
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    u_ref: np.ndarray
    h_X: np.ndarray
    h_b: np.ndarray
    margin: np.ndarray
    lam: np.ndarray
    region: np.ndarray
    fallback: np.ndarray
    call_us: np.ndarray
    solve_us: np.ndarray
    metrics: Optional[RunMetrics] = None


class Controller:
    """Callable (x, t) -> StepInfo for one controller kind of a scenario."""

    def __init__(self, sc: Scenario, kind: str, cfg: Optional[PsfConfig] = None):
        if kind not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")
        self.sc = sc
        self.kind = kind
        self.cl = sc.closed_loop
        self.cfg = cfg or sc.psf
        if kind == "standard":
            self.cfg = replace(self.cfg, T=0.0, N=0)
        self.critical = compute_critical_sets(self.cl)
        self.rng = np.random.default_rng(sc.seed)
        self.U = sc.system.U

    def _project_U(self, u):
        if np.all(self.U.H @ u + self.U.h <= 1e-12):
            return u
        return qp_project(QpProblem(u, self.U.H, -self.U.h)).u

    def fallback(self, x, u_ref):
        if self.sc.fallback == "saturated_reference":
            return self._project_U(u_ref)
        return self._project_U(self.sc.backup(x))

    def __call__(self, x, t) -> StepInfo:
        sc = self.sc
        u_ref = reference_policy(sc.reference, x, t)
        if self.kind == "reference":
            return StepInfo(self._project_U(u_ref))
        if self.kind == "backup":
            return StepInfo(self._project_U(sc.backup(x)))
        try:
            prob = assemble(sc.system, self.cl, sc.h_X, sc.h_b, self.cfg, x,
                            gradient_selection="random" if self.kind == "ablation" else "all",
                            rng=self.rng, critical=self.critical)
            # the solve window starts once the stacks and both policy inputs are known
            u_b = sc.backup(x) if self.kind == "explicit" else None
            t0 = time.perf_counter()
            if self.kind == "explicit":
                res = apply_explicit(prob, u_b, u_ref, empty_inner=sc.empty_inner)
                solve_s = time.perf_counter() - t0
                if not res.feasible:
                    raise Infeasible("explicit input failed its constraint check")
                return StepInfo(res.u, res.region, res.min_margin, res.lam, False, solve_s)
            sol = solve_psf(prob, u_ref)
            solve_s = time.perf_counter() - t0
            return StepInfo(sol.u, sol.region, sol.min_margin, np.nan, False, solve_s)
        except RECOVERABLE as exc:
            log.info("t=%.4f %s fallback: %s", t, self.kind, exc)
            return StepInfo(self.fallback(x, u_ref), fallback=True)


def plant_step(sc: Scenario, x, u, dt):
    i = locate_state_input(sc.system, x, u)[0]
    return x + dt * sc.system.regions[i].dynamics(x, u)


def run_closed_loop(sc: Scenario, kind: str, duration: Optional[float] = None,
                    x0=None, cfg: Optional[PsfConfig] = None) -> RunResult:
    """Zero-order hold of the controller at every sample of the forward-Euler plant."""
    duration = sc.duration if duration is None else duration
    x = np.asarray(sc.x0 if x0 is None else x0, dtype=float)
    steps = int(round(duration / sc.dt))
    ctrl = Controller(sc, kind, cfg)
    n, m = x.size, sc.system.m
    states = np.empty((steps + 1, n))
    inputs = np.empty((steps, m))
    u_ref = np.empty((steps, m))
    margin = np.full(steps, np.nan)
    lam = np.full(steps, np.nan)
    region = np.full(steps, -1)
    fb = np.zeros(steps, dtype=bool)
    call_us = np.empty(steps)
    solve_us = np.full(steps, np.nan)
    states[0] = x
    for k in range(steps):
        t = k * sc.dt
        t0 = time.perf_counter()
        info = ctrl(x, t)
        call_us[k] = 1e6 * (time.perf_counter() - t0)
        solve_us[k] = 1e6 * info.solve_s
        inputs[k] = info.u
        u_ref[k] = reference_policy(sc.reference, x, t)
        margin[k], lam[k], region[k], fb[k] = info.margin, info.lam, info.region, info.fallback
        x = plant_step(sc, x, info.u, sc.dt)
        states[k + 1] = x
    times = sc.dt * np.arange(steps + 1)
    res = RunResult(sc.name, kind, times, states, inputs, u_ref, sc.h_X.values(states),
                    sc.h_b.values(states), margin, lam, region, fb, call_us, solve_us)
    res.metrics = compute_metrics(sc, res)
    return res


def compute_metrics(sc: Scenario, res: RunResult) -> RunMetrics:
    steps = len(res.inputs)
    cost = sum(tracking_cost(sc.reference, x, t) for x, t in zip(res.states[:-1], res.times[:-1])) * sc.dt
    # the first call warms caches and is left out of the timing statistics
    calls = res.call_us[1:] if steps > 1 else res.call_us
    solves = res.solve_us[1:] if steps > 1 else res.solve_us
    solves = solves[np.isfinite(solves)]
    return RunMetrics(
        violations=int(np.sum(res.h_X < -sc.eps_sim)),
        worst_h_X=float(np.min(res.h_X)),
        tracking_error=float(cost),
        mean_us=float(np.mean(calls)) if calls.size else 0.0,
        p50_us=float(np.percentile(calls, 50)) if calls.size else 0.0,
        p95_us=float(np.percentile(calls, 95)) if calls.size else 0.0,
        mean_solve_us=float(np.mean(solves)) if solves.size else 0.0,
        infeasible=int(np.sum(res.fallback)),
        fallbacks=int(np.sum(res.fallback)),
        steps=steps,
    )


def horizon_config(cfg: PsfConfig, T: float, grid_step: float) -> PsfConfig:
    N = int(round(T / grid_step))
    return replace(cfg, T=float(T) if N else 0.0, N=N)


def compare_horizons(sc: Scenario, horizons, controllers=("psf", "explicit"), grid_step=0.1,
                     duration: Optional[float] = None) -> List[Dict]:
    """Tracking error and timing per (horizon, controller); N = T / grid_step."""
    rows = []
    for T in horizons:
        cfg = horizon_config(sc.psf, T, grid_step)
        for kind in controllers:
            res = run_closed_loop(sc, kind, duration=duration, cfg=cfg)
            m = res.metrics
            rows.append({
                "T": float(T), "N": cfg.N, "controller": kind,
                "tracking_error": m.tracking_error, "violations": m.violations,
                "worst_h_X": m.worst_h_X, "fallbacks": m.fallbacks,
                "mean_us": m.mean_us, "mean_solve_us": m.mean_solve_us,
            })
    return rows
