"""Two-link reacher: decoupled torque-driven joints with damping and hard stops.

Free motion integrates with RK4; joint limits are resolved by projection with
the outward velocity component zeroed (a hard stop, applied as part of
constraint resolution, then re-checked).
"""

from __future__ import annotations

import numpy as np

from ..errors import SimulationError
from ..numerics.ode import rk4_step
from .types import EnvConstants, ReacherState

Q_LIM = np.pi


def tip_position(q: np.ndarray, c: EnvConstants) -> np.ndarray:
    x = c.link1 * np.cos(q[0]) + c.link2 * np.cos(q[0] + q[1])
    y = c.link1 * np.sin(q[0]) + c.link2 * np.sin(q[0] + q[1])
    return np.array([x, y])


def tip_velocity(q: np.ndarray, qd: np.ndarray, c: EnvConstants) -> np.ndarray:
    s1, c1 = np.sin(q[0]), np.cos(q[0])
    s12, c12 = np.sin(q[0] + q[1]), np.cos(q[0] + q[1])
    vx = -c.link1 * s1 * qd[0] - c.link2 * s12 * (qd[0] + qd[1])
    vy = c.link1 * c1 * qd[0] + c.link2 * c12 * (qd[0] + qd[1])
    return np.array([vx, vy])


def reset(rng, c: EnvConstants) -> ReacherState:
    q = np.array([float(rng.uniform(-1.0, 1.0)) * Q_LIM * 0.98 for _ in range(2)])
    qd = np.array([float(rng.uniform(-1.0, 1.0)) for _ in range(2)])
    return ReacherState(q=q, qd=qd)


def step(state: ReacherState, action: np.ndarray, dt: float, c: EnvConstants) -> ReacherState:
    tau = np.clip(np.asarray(action[:2], dtype=np.float64), -1.0, 1.0) * c.reacher_torque_scale

    def deriv(s):
        q, qd = s[:2], s[2:]
        return np.concatenate([qd, tau - c.reacher_damping * qd])

    s = rk4_step(deriv, np.concatenate([state.q, state.qd]), dt)
    q, qd = s[:2].copy(), s[2:].copy()
    for i in range(2):
        if q[i] > Q_LIM:
            q[i] = Q_LIM
            qd[i] = min(qd[i], 0.0)
        elif q[i] < -Q_LIM:
            q[i] = -Q_LIM
            qd[i] = max(qd[i], 0.0)
    out = ReacherState(q=q, qd=qd)
    check_invariants(out, c)
    return out


def check_invariants(state: ReacherState, c: EnvConstants) -> None:
    if np.any(np.abs(state.q) > Q_LIM + 1e-9):
        raise SimulationError(f"reacher joint limit violated: q={state.q}")
    if np.any(np.abs(state.qd) > c.reacher_qd_max + 1e-6):
        raise SimulationError(f"reacher velocity cap violated: qd={state.qd}")
