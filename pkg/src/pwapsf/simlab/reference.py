"""Reference (performance) policies of the case studies."""
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_continuous_are

REFERENCE_KINDS = ("pendulum_pd_ff", "pendulum_const", "rooms_backstepping")


def lqr_gain(A, B, Q=None, R=None):
    """K such that u = -K x is the LQR law."""
    n, m = B.shape
    Q = np.eye(n) if Q is None else Q
    R = np.eye(m) if R is None else R
    P = solve_continuous_are(A, B, Q, R)
    return np.linalg.solve(R, B.T @ P)


@lru_cache(maxsize=8)
def _rooms_gains(K, K0, K1, K3):
    A23 = np.array([[-(2 * K + K0), K], [K, -(2 * K + K0)]])
    B23 = K * np.eye(2)
    A14 = np.diag([-(K + K1 + K0), -(K + K3 + K0)])
    B14 = np.diag([K1, K3])
    Ku23 = -lqr_gain(A23, B23)
    Ku14 = -lqr_gain(A14, B14)
    return A23, B23, A14, B14, Ku23, Ku14


def pendulum_reference_state(spec, t):
    a = spec.get("amplitude", 0.8)
    return np.array([a * np.cos(t), -a * np.sin(t)]), -a * np.cos(t)


def reference_policy(spec: dict, x, t) -> np.ndarray:
    kind = spec["kind"]
    x = np.asarray(x, dtype=float)
    if kind == "pendulum_pd_ff":
        (th_r, thd_r), thdd_r = pendulum_reference_state(spec, t)
        m, L, g = spec["m"], spec["L"], spec["g"]
        k_p, k_d = spec.get("gain", [-12.0, -3.0])
        u = k_p * (x[0] - th_r) + k_d * (x[1] - thd_r) + m * L * L * thdd_r - m * g * L * th_r
        return np.array([u])
    if kind == "pendulum_const":
        return np.array([spec.get("value", -10.0)])
    if kind == "rooms_backstepping":
        K, K0, K1, K3 = spec["K"], spec["K0"], spec["K1"], spec["K3"]
        A23, B23, A14, B14, Ku23, Ku14 = _rooms_gains(K, K0, K1, K3)
        target = np.asarray(spec.get("target", [20.0, 20.0]), dtype=float)
        v = Ku23 @ (x[[1, 2]] - target) - np.linalg.solve(B23, A23 @ target)
        return Ku14 @ (x[[0, 3]] - v) - np.linalg.solve(B14, A14 @ v) - np.array([x[1] * K / K1, x[2] * K / K3])
    raise ValueError(f"unknown reference kind {kind!r}")


def tracking_cost(spec: dict, x, t) -> float:
    """Instantaneous squared tracking error of the scenario's objective."""
    kind = spec["kind"]
    if kind == "pendulum_pd_ff":
        x_r, _ = pendulum_reference_state(spec, t)
        return float(np.sum((np.asarray(x) - x_r) ** 2))
    if kind == "rooms_backstepping":
        target = np.asarray(spec.get("target", [20.0, 20.0]))
        return float(np.sum((np.asarray(x)[[1, 2]] - target) ** 2))
    return 0.0
