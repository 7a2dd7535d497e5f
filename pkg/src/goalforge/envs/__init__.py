"""Deterministic 2D manipulation environments with rendered observations."""

from .api import (
    effector_position,
    object_distance,
    object_position,
    object_velocity,
    observe,
    physics_label,
    render,
    reset,
    sample_state,
    smooth_dynamics,
    step,
)
from .types import (
    ACTION_DIMS,
    LABEL_DIMS,
    STATE_DIMS,
    Appearance,
    EnvConstants,
    EnvKind,
    Observation,
    PhysState,
    PickPlaceState,
    PusherState,
    ReacherState,
    copy_state,
    denormalize_label,
    label_bounds,
    normalize_label,
    state_from_vec,
    state_to_vec,
)

__all__ = [
    "EnvKind", "EnvConstants", "Appearance", "Observation", "PhysState",
    "ReacherState", "PusherState", "PickPlaceState",
    "reset", "step", "render", "observe", "sample_state", "physics_label",
    "object_distance", "object_position", "object_velocity", "effector_position",
    "smooth_dynamics", "state_to_vec", "state_from_vec", "copy_state",
    "label_bounds", "normalize_label", "denormalize_label",
    "LABEL_DIMS", "STATE_DIMS", "ACTION_DIMS",
]
