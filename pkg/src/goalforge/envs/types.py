"""Environment kinds, physical states, constants, and label conventions."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


class EnvKind(str, Enum):
    REACHER2 = "reacher2"
    PUSHER2 = "pusher2"
    PICKPLACE2 = "pickplace2"


@dataclass
class ReacherState:
    q: np.ndarray   # joint angles (2,), radians
    qd: np.ndarray  # joint velocities (2,), rad/s


@dataclass
class PusherState:
    eff_p: np.ndarray   # effector center (2,), m
    eff_v: np.ndarray   # effector velocity (2,), m/s
    puck_p: np.ndarray  # puck center (2,), m
    puck_v: np.ndarray  # puck velocity (2,), m/s


@dataclass
class PickPlaceState:
    grip_p: np.ndarray  # gripper (x, z), m
    grip_v: np.ndarray
    obj_p: np.ndarray   # object (x, z), m; z = 0 is resting on the table
    obj_v: np.ndarray
    grasped: bool = False


PhysState = ReacherState | PusherState | PickPlaceState


@dataclass(frozen=True)
class EnvConstants:
    """All simulator constants; config-overridable."""

    dt: float = 0.05
    horizon: int = 50
    substeps: int = 4
    gravity: float = 9.81
    contact_tol: float = 1e-6
    # reacher
    link1: float = 0.1
    link2: float = 0.1
    reacher_qd_max: float = 4.0
    reacher_torque_scale: float = 6.0
    reacher_damping: float = 1.5
    # pusher
    table_half_x: float = 0.2
    table_half_y: float = 0.1
    puck_radius: float = 0.02
    pusher_radius: float = 0.02
    pusher_mass: float = 0.5
    puck_mass: float = 0.05
    friction_mu: float = 0.3
    restitution: float = 0.9
    servo_gain: float = 20.0
    effector_v_scale: float = 0.25
    puck_v_max: float = 3.0
    # pick-and-place
    pp_half_x: float = 0.2
    pp_z_max: float = 0.2
    obj_radius: float = 0.015
    gripper_radius: float = 0.02
    grasp_offset_z: float = -0.015
    grasp_radius: float = 0.03
    pp_vx_max: float = 0.6
    pp_vz_max: float = 2.2

    @property
    def grip_z_min(self) -> float:
        # gripper floor keeps the grasped object at or above the table
        return -self.grasp_offset_z

    def pusher_center_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) bounds for disc centers on the pusher table."""
        rx = max(self.puck_radius, self.pusher_radius)
        lo = np.array([-(self.table_half_x - rx), -(self.table_half_y - rx)])
        return lo, -lo


@dataclass(frozen=True)
class Appearance:
    shade: float = 0.4  # background brightness in [0, 1]
    hue: float = 0.0    # object color index in [0, 1]

    def as_array(self) -> np.ndarray:
        return np.array([self.shade, self.hue])


SHADE_LO, SHADE_HI = 0.25, 0.55


def sample_appearance(rng, randomize: bool) -> Appearance:
    if not randomize:
        return Appearance()
    mid, half = (SHADE_LO + SHADE_HI) / 2.0, (SHADE_HI - SHADE_LO) / 2.0
    shade = mid + half * float(rng.uniform(-1.0, 1.0))
    hue = 0.5 + 0.5 * float(rng.uniform(-1.0, 1.0))
    return Appearance(shade=shade, hue=hue)


@dataclass
class Observation:
    image: np.ndarray           # (3, H, W) in [0, 1]
    label: np.ndarray | None    # physics vector, present iff supervised
    appearance: Appearance


LABEL_DIMS = {EnvKind.REACHER2: 4, EnvKind.PUSHER2: 4, EnvKind.PICKPLACE2: 5}

STATE_DIMS = {EnvKind.REACHER2: 4, EnvKind.PUSHER2: 8, EnvKind.PICKPLACE2: 9}

ACTION_DIMS = {EnvKind.REACHER2: 2, EnvKind.PUSHER2: 2, EnvKind.PICKPLACE2: 3}


def label_bounds(kind: EnvKind, c: EnvConstants) -> tuple[np.ndarray, np.ndarray]:
    """(center, halfwidth) of the affine [-1, 1] normalization per label dim."""
    if kind == EnvKind.REACHER2:
        reach = c.link1 + c.link2
        vmax = c.link1 * c.reacher_qd_max + c.link2 * 2.0 * c.reacher_qd_max
        return np.zeros(4), np.array([reach, reach, vmax, vmax])
    if kind == EnvKind.PUSHER2:
        lo, hi = c.pusher_center_bounds()
        return np.zeros(4), np.array([hi[0], hi[1], c.puck_v_max, c.puck_v_max])
    if kind == EnvKind.PICKPLACE2:
        xh = c.pp_half_x - c.obj_radius
        z_max = c.pp_z_max + c.grasp_offset_z  # highest carried object
        return (
            np.array([0.0, z_max / 2.0, 0.0, 0.0, 0.5]),
            np.array([xh, z_max / 2.0, c.pp_vx_max, c.pp_vz_max, 0.5]),
        )
    raise ValueError(kind)


def normalize_label(vec, center: np.ndarray, halfwidth: np.ndarray):
    return (vec - center) / halfwidth


def denormalize_label(vec, center: np.ndarray, halfwidth: np.ndarray):
    return vec * halfwidth + center


def state_to_vec(kind: EnvKind, s: PhysState) -> np.ndarray:
    if kind == EnvKind.REACHER2:
        return np.concatenate([s.q, s.qd])
    if kind == EnvKind.PUSHER2:
        return np.concatenate([s.eff_p, s.eff_v, s.puck_p, s.puck_v])
    if kind == EnvKind.PICKPLACE2:
        return np.concatenate([s.grip_p, s.grip_v, s.obj_p, s.obj_v, [float(s.grasped)]])
    raise ValueError(kind)


def state_from_vec(kind: EnvKind, v: np.ndarray) -> PhysState:
    v = np.asarray(v, dtype=np.float64)
    if kind == EnvKind.REACHER2:
        return ReacherState(q=v[0:2].copy(), qd=v[2:4].copy())
    if kind == EnvKind.PUSHER2:
        return PusherState(eff_p=v[0:2].copy(), eff_v=v[2:4].copy(),
                           puck_p=v[4:6].copy(), puck_v=v[6:8].copy())
    if kind == EnvKind.PICKPLACE2:
        return PickPlaceState(grip_p=v[0:2].copy(), grip_v=v[2:4].copy(),
                              obj_p=v[4:6].copy(), obj_v=v[6:8].copy(),
                              grasped=bool(v[8] > 0.5))
    raise ValueError(kind)


def copy_state(kind: EnvKind, s: PhysState) -> PhysState:
    return state_from_vec(kind, state_to_vec(kind, s))
