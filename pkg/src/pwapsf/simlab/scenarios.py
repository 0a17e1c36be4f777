"""Case-study scenarios and their JSON form."""
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from ..barrier import AffinePiece, ClassK, PiecewiseBarrier, QuadraticPiece
from ..psf import PsfConfig
from ..pwa_core import PiecewiseLinearPolicy, Polyhedron, PwaRegion, PwaSystem, close_loop

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
FALLBACKS = ("backup", "saturated_reference")

# pendulum: m, L, g, wall stiffness
PEND = dict(m=1.0, L=1.0, g=10.0, k=2.0)
PEND_GAIN = [[-12.0, -3.0]]
# archived output of synthesize_quadratic_backup on the pendulum closed loop (kappa_b = 1)
PEND_R = [[1.2291666666666667, 0.1875], [0.1875, 0.22916666666666669]]
PEND_GAMMA = 0.268939393939394
PEND_KAPPA = 20.0
PEND_KAPPA_B = 5.0

ROOMS = dict(K=0.0035, K0=0.001, K1=0.01, K2=0.02, K3=0.008, K4=0.016, T0=0.0, band=5.0)
ROOMS_KAPPA_B = 0.0145  # K + K0 + max(K1, K3)
# pieces within this band of the minimum get prediction rows; with a 1 s plant
# step a nearly active piece can otherwise cross zero between samples
ROOMS_EPS_ACT = 0.05


@dataclass
class Scenario:
    name: str
    system: PwaSystem
    backup: PiecewiseLinearPolicy
    h_X: PiecewiseBarrier
    h_b: PiecewiseBarrier
    psf: PsfConfig
    reference: dict
    x0: np.ndarray
    duration: float
    dt: float
    fallback: str = "backup"
    empty_inner: str = "segment_end"
    seed: int = 0
    eps_sim: float = 1e-6
    validate: bool = True
    sample_box: Optional[tuple] = None  # (lower, upper) for backup-pair checks
    sample_center: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.fallback not in FALLBACKS:
            raise ValueError(f"fallback must be one of {FALLBACKS}")

    @cached_property
    def closed_loop(self):
        return close_loop(self.system, self.backup, validate=self.validate)

    def with_(self, **changes) -> "Scenario":
        """Copy with fields replaced (the closed loop is rebuilt lazily)."""
        return replace(self, **changes)

    def to_dict(self):
        return {
            "name": self.name,
            "system": self.system.to_dict(),
            "backup": self.backup.to_dict(),
            "h_X": self.h_X.to_dict(),
            "h_b": self.h_b.to_dict(),
            "psf": self.psf.to_dict(),
            "reference": self.reference,
            "x0": self.x0.tolist(),
            "duration": self.duration,
            "dt": self.dt,
            "fallback": self.fallback,
            "empty_inner": self.empty_inner,
            "seed": self.seed,
            "eps_sim": self.eps_sim,
            "validate": self.validate,
            "sample_box": None if self.sample_box is None else [list(map(float, b)) for b in self.sample_box],
            "sample_center": None if self.sample_center is None else list(map(float, self.sample_center)),
        }

    @classmethod
    def from_dict(cls, d):
        validate = d.get("validate", True)
        return cls(
            name=d["name"],
            system=PwaSystem.from_dict(d["system"], validate=validate),
            backup=PiecewiseLinearPolicy.from_dict(d["backup"]),
            h_X=PiecewiseBarrier.from_dict(d["h_X"]),
            h_b=PiecewiseBarrier.from_dict(d["h_b"]),
            psf=PsfConfig.from_dict(d["psf"]),
            reference=d["reference"],
            x0=d["x0"],
            duration=d["duration"],
            dt=d["dt"],
            fallback=d.get("fallback", "backup"),
            empty_inner=d.get("empty_inner", "segment_end"),
            seed=d.get("seed", 0),
            eps_sim=d.get("eps_sim", 1e-6),
            validate=validate,
            sample_box=None if d.get("sample_box") is None else tuple(np.array(b) for b in d["sample_box"]),
            sample_center=None if d.get("sample_center") is None else np.array(d["sample_center"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def pendulum_system(p=PEND, umax=10.0) -> PwaSystem:
    m, L, g, k = p["m"], p["L"], p["g"], p["k"]
    b = 1.0 / (m * L * L)
    up = PwaRegion([[-1.0, 0.0]], [[0.0]], [0.0], [[0, 1], [g / L, 0]], [[0], [b]], [0, 0])
    wall = PwaRegion([[1.0, 0.0]], [[0.0]], [0.0], [[0, 1], [g / L - k * L, 0]], [[0], [b]], [0, 0])
    return PwaSystem([up, wall], Polyhedron.box([-umax], [umax]))


def pendulum_constraints():
    """|theta| <= 0.5, |theta_dot| <= 2 as a barrier."""
    return PiecewiseBarrier([
        AffinePiece([-1, 0], 0.5), AffinePiece([1, 0], 0.5),
        AffinePiece([0, -1], 2.0), AffinePiece([0, 1], 2.0),
    ])


def pendulum_scenario(kappa=PEND_KAPPA, kappa_b=PEND_KAPPA_B, T=1.0, N=50, x0=(0.1, 0.1), duration=10.0,
                      reference="pendulum_pd_ff", R=PEND_R, gamma=PEND_GAMMA, seed=0) -> Scenario:
    ref = {"kind": reference, "amplitude": 0.8, "m": PEND["m"], "L": PEND["L"], "g": PEND["g"],
           "gain": PEND_GAIN[0], "value": -10.0}
    return Scenario(
        name="pendulum",
        system=pendulum_system(),
        backup=PiecewiseLinearPolicy.linear(PEND_GAIN),
        h_X=pendulum_constraints(),
        h_b=PiecewiseBarrier([QuadraticPiece(R, gamma)]),
        psf=PsfConfig(T=T, N=N, alpha=ClassK(kappa), alpha_b=ClassK(kappa_b), dt=1e-3),
        reference=ref,
        x0=np.array(x0, dtype=float),
        duration=duration,
        dt=1e-3,
        fallback="backup" if reference == "pendulum_pd_ff" else "saturated_reference",
        seed=seed,
        sample_box=(np.array([-0.5, -2.0]), np.array([0.5, 2.0])),
        sample_center=np.zeros(2),
    )


def pendulum_boundary_scenario(seed=1, duration=0.5, **kw) -> Scenario:
    """Start on the corner theta = 0.5, theta_dot = -2 under a constant -10 reference.

    Seed 1 makes the single-gradient ablation keep the theta row at the corner
    and drop the theta_dot row.
    """
    sc = pendulum_scenario(reference="pendulum_const", x0=(0.5, -2.0), duration=duration, seed=seed, **kw)
    return sc.with_(name="pendulum_boundary")


def _band_rows(state, inp, n, m, band):
    """(Hx, Hu, h) rows for s = u[inp] - x[state] in each of the three bands."""
    ex = np.zeros(n)
    ex[state] = -1.0
    eu = np.zeros(m)
    eu[inp] = 1.0
    return {
        "low": (np.array([ex]), np.array([eu]), np.array([band])),          # s + band <= 0
        "mid": (np.array([ex, -ex]), np.array([eu, -eu]), np.array([-band, -band])),
        "high": (np.array([-ex]), np.array([-eu]), np.array([band])),       # band - s <= 0
    }


def rooms_system(p=ROOMS, continuous=True, umin=-10.0, umax=35.0) -> PwaSystem:
    """Four rooms; heaters in rooms 1 and 4 switch gain when |u - T| exceeds the band.

    ``continuous`` offsets the outer-band heat flow so it agrees with the inner
    band at |u - T| = band; the literal model jumps there.
    """
    K, K0, band, T0 = p["K"], p["K0"], p["band"], p["T0"]
    n, m = 4, 2
    A = np.array([
        [-(K + K0), K, 0, 0],
        [K, -(2 * K + K0), K, 0],
        [0, K, -(2 * K + K0), K],
        [0, 0, K, -(K + K0)],
    ])
    base_c = K0 * T0 * np.ones(n)
    heaters = [(0, p["K1"], p["K2"]), (3, p["K3"], p["K4"])]
    rows = [_band_rows(0, 0, n, m, band), _band_rows(3, 1, n, m, band)]
    regions = []
    for b1 in ("low", "mid", "high"):
        for b2 in ("low", "mid", "high"):
            Ai = A.copy()
            B = np.zeros((n, m))
            c = base_c.copy()
            for (state, k_in, k_out), b, j in zip(heaters, (b1, b2), (0, 1)):
                gain = k_in if b == "mid" else k_out
                Ai[state, state] -= gain
                B[state, j] = gain
                if continuous and b != "mid":
                    c[state] += (band if b == "low" else -band) * (k_out - k_in)
            Hx = np.vstack([rows[0][b1][0], rows[1][b2][0]])
            Hu = np.vstack([rows[0][b1][1], rows[1][b2][1]])
            h = np.concatenate([rows[0][b1][2], rows[1][b2][2]])
            regions.append(PwaRegion(Hx, Hu, h, Ai, B, c))
    return PwaSystem(regions, Polyhedron.box([umin] * m, [umax] * m), validate=continuous)


def rooms_backup(p=ROOMS):
    K, K1, K3 = p["K"], p["K1"], p["K3"]
    return PiecewiseLinearPolicy.linear([[0, -K / K1, 0, 0], [0, 0, -K / K3, 0]])


def rooms_scenario(T=4.0, N=40, kappa=1.0, kappa_b=ROOMS_KAPPA_B, continuous=True,
                   x0=(5.0, 20.0, 10.0, 15.0), duration=2000.0, pred_dt=0.1,
                   eps_act=ROOMS_EPS_ACT) -> Scenario:
    if N == 0:
        T = 0.0
    ref = {"kind": "rooms_backstepping", "target": [20.0, 20.0], **{k: ROOMS[k] for k in ("K", "K0", "K1", "K3")}}
    return Scenario(
        name="rooms",
        system=rooms_system(continuous=continuous),
        backup=rooms_backup(),
        h_X=PiecewiseBarrier([AffinePiece([-1, 0, 0, 0], 26.0), AffinePiece([0, 0, 0, -1], 26.0)]),
        h_b=PiecewiseBarrier([AffinePiece([-1, 0, 0, 0], 24.0), AffinePiece([0, 0, 0, -1], 24.0)]),
        psf=PsfConfig(T=T, N=N, alpha=ClassK(kappa), alpha_b=ClassK(kappa_b), dt=pred_dt, eps_act=eps_act),
        reference=ref,
        x0=np.array(x0, dtype=float),
        duration=duration,
        dt=1.0,
        validate=continuous,
        sample_box=(np.zeros(4), np.full(4, 30.0)),
        sample_center=np.full(4, 10.0),
    )


def builtin(name) -> Scenario:
    if name == "pendulum":
        return pendulum_scenario()
    if name == "pendulum_boundary":
        return pendulum_boundary_scenario()
    if name == "rooms":
        return rooms_scenario()
    raise KeyError(f"unknown built-in scenario {name!r}")


def load_scenario(spec) -> Scenario:
    """A path to a JSON file or the name of a built-in scenario."""
    path = Path(spec)
    if path.exists():
        return Scenario.load(path)
    if (DATA_DIR / f"{spec}.json").exists():
        return Scenario.load(DATA_DIR / f"{spec}.json")
    return builtin(spec)
