"""Planar pick-and-place in the (x, z) plane.

A servo-driven gripper moves in a box; a free object feels gravity above the
table and Coulomb friction on it, and lands inelastically. A grasp toggle
snaps the object rigidly to the gripper (fixed offset) when close enough;
release clamps any upward object velocity to zero, so a free object above
the table is always falling.
"""

from __future__ import annotations

import numpy as np

from ..errors import SimulationError
from .types import EnvConstants, PickPlaceState


def _grip_bounds(c: EnvConstants):
    lo = np.array([-(c.pp_half_x - c.gripper_radius), c.grip_z_min])
    hi = np.array([c.pp_half_x - c.gripper_radius, c.pp_z_max])
    return lo, hi


def _obj_x_limit(c: EnvConstants) -> float:
    return c.pp_half_x - c.obj_radius


def grasp_offset(c: EnvConstants) -> np.ndarray:
    return np.array([0.0, c.grasp_offset_z])


def reset(rng, c: EnvConstants) -> PickPlaceState:
    glo, ghi = _grip_bounds(c)
    gmid, ghalf = (glo + ghi) / 2.0, (ghi - glo) / 2.0
    grip = np.array([gmid[0] + ghalf[0] * 0.95 * float(rng.uniform(-1.0, 1.0)),
                     gmid[1] + ghalf[1] * 0.95 * float(rng.uniform(-1.0, 1.0))])
    obj_x = _obj_x_limit(c) * 0.95 * float(rng.uniform(-1.0, 1.0))
    grasped = float(rng.uniform(0.0, 1.0)) < 0.2
    if grasped:
        obj = grip + grasp_offset(c)
    else:
        obj = np.array([obj_x, 0.0])
    return PickPlaceState(grip_p=grip, grip_v=np.zeros(2), obj_p=obj,
                          obj_v=np.zeros(2), grasped=grasped)


def step(state: PickPlaceState, action: np.ndarray, dt: float, c: EnvConstants) -> PickPlaceState:
    cmd = np.clip(np.asarray(action[:2], dtype=np.float64), -1.0, 1.0) * c.effector_v_scale
    toggle = len(action) > 2 and float(action[2]) > 0.5
    glo, ghi = _grip_bounds(c)
    h = dt / c.substeps
    grip_p, grip_v = state.grip_p.copy(), state.grip_v.copy()
    obj_p, obj_v = state.obj_p.copy(), state.obj_v.copy()
    grasped = state.grasped
    mu_g = c.friction_mu * c.gravity

    if toggle:
        if grasped:
            grasped = False
            obj_v = np.array([obj_v[0], min(obj_v[1], 0.0)])  # no tossing on release
        elif float(np.linalg.norm(obj_p - grip_p)) <= c.grasp_radius:
            grasped = True

    for _ in range(c.substeps):
        grip_v = grip_v + (cmd - grip_v) * (c.servo_gain * h)
        grip_p = grip_p + grip_v * h
        for i in range(2):
            if grip_p[i] < glo[i]:
                grip_p[i] = glo[i]
                grip_v[i] = max(grip_v[i], 0.0)
            elif grip_p[i] > ghi[i]:
                grip_p[i] = ghi[i]
                grip_v[i] = min(grip_v[i], 0.0)
        if grasped:
            obj_p = grip_p + grasp_offset(c)
            obj_v = grip_v.copy()
            continue
        on_table = obj_p[1] <= 0.0 and obj_v[1] <= 0.0
        if on_table:
            obj_p[1] = 0.0
            obj_v[1] = 0.0
            speed = abs(obj_v[0])
            if speed <= mu_g * h:
                obj_v[0] = 0.0
            else:
                obj_v[0] -= np.sign(obj_v[0]) * mu_g * h
        else:
            obj_v[1] -= c.gravity * h
        obj_p = obj_p + obj_v * h
        if obj_p[1] <= 0.0:
            obj_p[1] = 0.0
            obj_v[1] = 0.0  # inelastic landing
        xl = _obj_x_limit(c)
        if obj_p[0] < -xl:
            obj_p[0] = -xl
            obj_v[0] = max(obj_v[0], 0.0)
        elif obj_p[0] > xl:
            obj_p[0] = xl
            obj_v[0] = min(obj_v[0], 0.0)

    out = PickPlaceState(grip_p=grip_p, grip_v=grip_v, obj_p=obj_p, obj_v=obj_v, grasped=grasped)
    check_invariants(out, c)
    return out


def check_invariants(state: PickPlaceState, c: EnvConstants) -> None:
    if state.obj_p[1] < -1e-12:
        raise SimulationError(f"object below table surface: z={state.obj_p[1]}")
    glo, ghi = _grip_bounds(c)
    if np.any(state.grip_p < glo - 1e-9) or np.any(state.grip_p > ghi + 1e-9):
        raise SimulationError(f"gripper left its box: {state.grip_p}")
    if abs(state.obj_p[0]) > _obj_x_limit(c) + 1e-9:
        raise SimulationError(f"object left the workspace: {state.obj_p}")
    if state.grasped:
        err = state.obj_p - (state.grip_p + grasp_offset(c))
        if float(np.linalg.norm(err)) != 0.0:
            raise SimulationError(f"grasp rigidity violated by {err}")
