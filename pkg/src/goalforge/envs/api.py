"""Public environment operations: reset, step, render, labels, distances.

Environments are value-semantic: step is a pure function of (state, action),
so trajectories are a pure function of the seed.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import pickplace, pusher, reacher
from .raster import render_state
from .types import (
    Appearance,
    EnvConstants,
    EnvKind,
    Observation,
    PhysState,
    PickPlaceState,
    PusherState,
    ReacherState,
    label_bounds,
    normalize_label,
    sample_appearance,
)

_MODS = {EnvKind.REACHER2: reacher, EnvKind.PUSHER2: pusher, EnvKind.PICKPLACE2: pickplace}


def reset(kind: EnvKind, rng, c: EnvConstants, appearance_randomization: bool = True,
          res: int = 32) -> tuple[PhysState, Observation]:
    state = _MODS[kind].reset(rng, c)
    appearance = sample_appearance(rng, appearance_randomization)
    obs = observe(kind, state, appearance, res, c)
    return state, obs


def sample_state(kind: EnvKind, rng, c: EnvConstants) -> PhysState:
    """A feasible state drawn from the reset distribution (oracle goals, tests)."""
    return _MODS[kind].reset(rng, c)


def step(kind: EnvKind, state: PhysState, action: np.ndarray, dt: float | None,
         c: EnvConstants) -> PhysState:
    return _MODS[kind].step(state, np.asarray(action, dtype=np.float64),
                            c.dt if dt is None else dt, c)


def observe(kind: EnvKind, state: PhysState, appearance: Appearance, res: int,
            c: EnvConstants) -> Observation:
    img = render(kind, state, appearance, res, c)
    return Observation(image=img, label=physics_label(kind, state, c), appearance=appearance)


def render(kind: EnvKind, state: PhysState, appearance: Appearance, res: int,
           c: EnvConstants) -> np.ndarray:
    return render_state(kind, state, appearance, res, c)


def object_position(kind: EnvKind, state: PhysState, c: EnvConstants) -> np.ndarray:
    """Position of the manipulable object (reacher: the hand/tip)."""
    if kind == EnvKind.REACHER2:
        return reacher.tip_position(state.q, c)
    if kind == EnvKind.PUSHER2:
        return state.puck_p
    return state.obj_p


def object_velocity(kind: EnvKind, state: PhysState, c: EnvConstants) -> np.ndarray:
    if kind == EnvKind.REACHER2:
        return reacher.tip_velocity(state.q, state.qd, c)
    if kind == EnvKind.PUSHER2:
        return state.puck_v
    return state.obj_v


def effector_position(kind: EnvKind, state: PhysState) -> np.ndarray:
    if kind == EnvKind.PUSHER2:
        return state.eff_p
    if kind == EnvKind.PICKPLACE2:
        return state.grip_p
    raise ShapeError("reacher has no separate effector; the tip is the object")


def physics_label(kind: EnvKind, state: PhysState, c: EnvConstants) -> np.ndarray:
    """Fixed-order physics vector, each dim affinely normalized to [-1, 1]."""
    pos = object_position(kind, state, c)
    vel = object_velocity(kind, state, c)
    raw = np.concatenate([pos, vel])
    if kind == EnvKind.PICKPLACE2:
        raw = np.concatenate([raw, [float(state.grasped)]])
    center, half = label_bounds(kind, c)
    return normalize_label(raw, center, half)


def object_distance(kind: EnvKind, state: PhysState, goal_state: PhysState,
                    c: EnvConstants) -> float:
    """Euclidean distance between designated object positions, meters."""
    for s in (state, goal_state):
        expected = {EnvKind.REACHER2: ReacherState, EnvKind.PUSHER2: PusherState,
                    EnvKind.PICKPLACE2: PickPlaceState}[kind]
        if not isinstance(s, expected):
            raise ShapeError(f"object_distance: state {type(s).__name__} does not match {kind.value}")
    return float(np.linalg.norm(object_position(kind, state, c) - object_position(kind, goal_state, c)))


def smooth_dynamics(kind: EnvKind, c: EnvConstants):
    """Contact-free smooth dynamics over the unnormalized physics vector.

    Used by the decoder's integration functional; written against the
    dual-backend vocabulary so it runs on numpy arrays and Tensors alike,
    batched over rows of a (..., label_dim) vector.
    """
    from ..numerics.backend import NUMPY, TENSOR

    def backend_of(v):
        return NUMPY if isinstance(v, np.ndarray) else TENSOR

    if kind == EnvKind.REACHER2:
        damp = c.reacher_damping

        def deriv(v):  # (px, py, vx, vy): damped drift of the hand marker
            be = backend_of(v)
            return be.stack_last([v[..., 2], v[..., 3], v[..., 2] * (-damp), v[..., 3] * (-damp)])

        return deriv
    if kind == EnvKind.PUSHER2:
        mu_g = c.friction_mu * c.gravity
        eps_v = 1e-3

        def deriv(v):  # smoothed Coulomb friction on the puck
            be = backend_of(v)
            vx, vy = v[..., 2], v[..., 3]
            speed = be.sqrt(be.square(vx) + be.square(vy), eps=eps_v * eps_v)
            return be.stack_last([vx, vy, vx * (-mu_g) / speed, vy * (-mu_g) / speed])

        return deriv
    if kind == EnvKind.PICKPLACE2:
        g = c.gravity
        h_soft = 0.01

        def deriv(v):  # gravity on a free object, gated smoothly at the table
            be = backend_of(v)
            z, vx, vz, grasp = v[..., 1], v[..., 2], v[..., 3], v[..., 4]
            zp = be.relu(z)
            air = be.square(zp) / (be.square(zp) + h_soft * h_soft)  # 0 on table, ~1 aloft
            free = be.relu(1.0 - be.relu(grasp))  # grasp flag lives in [0, 1]
            acc_z = air * free * (-g)
            zero = z * 0.0
            return be.stack_last([vx, vz, zero, acc_z, zero])

        return deriv
    raise ValueError(kind)
