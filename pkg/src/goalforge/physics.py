"""Differentiable physics penalties, feasibility scores, and the exact
ground-truth feasibility test.

Penalties are squared hinges over the *normalized* physics-vector convention
of envs.physics_label (positions denormalized to meters internally, so the
hinge scale has physical units). They are smooth enough to sit inside
gradient-trained losses, zero exactly on the feasible set, and aggregate to
score = exp(-sum_i w_i c_i) in (0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import pickplace, reacher
from .envs.types import EnvConstants, EnvKind, PhysState, label_bounds
from .errors import ShapeError
from .numerics import tensor as T
from .numerics.backend import NUMPY, TENSOR
from .numerics.tensor import Tensor

POS_SCALE = 0.1      # m, characteristic length for hinge normalization
VEL_SCALE = 0.5      # m/s
HOVER_V_THRESH = 0.05  # m/s, "at rest" threshold for the unsupported-hover test
HOVER_Z_SCALE = 0.05   # m
# scores stay in (0, 1]: cap the exponent so exp(-total) cannot underflow to 0
SCORE_TOTAL_CAP = 60.0


def _be(v):
    return NUMPY if isinstance(v, np.ndarray) else TENSOR


def _hinge_sq(be, excess, scale):
    h = be.relu(excess) * (1.0 / scale)
    return be.square(h)


@dataclass(frozen=True)
class Constraint:
    name: str
    weight: float
    fn: object  # callable(vec_normalized) -> penalty, batched over leading axes


@dataclass
class ConstraintSet:
    kind: EnvKind
    constants: EnvConstants
    constraints: list[Constraint] = field(default_factory=list)

    def names(self) -> list[str]:
        return [c.name for c in self.constraints]


@dataclass
class ConstraintReport:
    penalties: dict[str, float]
    total: float
    score: float


def build_constraint_set(kind: EnvKind, c: EnvConstants,
                         weights: dict[str, float] | None = None) -> ConstraintSet:
    """The fixed per-environment constraint list; weights config-overridable."""
    weights = weights or {}
    center, half = label_bounds(kind, c)
    cs: list[Constraint] = []

    def w(name):
        val = float(weights.get(name, 1.0))
        if not np.isfinite(val) or val < 0.0:
            raise ValueError(f"constraint weight {name!r} must be finite and >= 0")
        return val

    if kind == EnvKind.REACHER2:
        reach = c.link1 + c.link2
        vcap = half[2]

        def workspace(v):
            be = _be(v)
            px, py = v[..., 0] * half[0], v[..., 1] * half[1]
            r = be.sqrt(be.square(px) + be.square(py), eps=1e-12)
            return _hinge_sq(be, r - reach, POS_SCALE)

        def velocity(v):
            be = _be(v)
            vx, vy = v[..., 2] * half[2], v[..., 3] * half[3]
            s = be.sqrt(be.square(vx) + be.square(vy), eps=1e-12)
            return _hinge_sq(be, s - vcap, VEL_SCALE)

        cs = [Constraint("workspace", w("workspace"), workspace),
              Constraint("velocity", w("velocity"), velocity)]

    elif kind == EnvKind.PUSHER2:
        lo, hi = c.pusher_center_bounds()
        vcap = c.puck_v_max

        def workspace(v):
            be = _be(v)
            px, py = v[..., 0] * half[0], v[..., 1] * half[1]
            ax = be.sqrt(be.square(px), eps=1e-18)
            ay = be.sqrt(be.square(py), eps=1e-18)
            return _hinge_sq(be, ax - hi[0], POS_SCALE) + _hinge_sq(be, ay - hi[1], POS_SCALE)

        def velocity(v):
            be = _be(v)
            vx, vy = v[..., 2] * half[2], v[..., 3] * half[3]
            s = be.sqrt(be.square(vx) + be.square(vy), eps=1e-12)
            return _hinge_sq(be, s - vcap, VEL_SCALE)

        cs = [Constraint("workspace", w("workspace"), workspace),
              Constraint("velocity", w("velocity"), velocity)]

    elif kind == EnvKind.PICKPLACE2:
        xl = c.pp_half_x - c.obj_radius
        z_top = c.pp_z_max + c.grasp_offset_z

        def workspace(v):
            be = _be(v)
            px = v[..., 0] * half[0] + center[0]
            z = v[..., 1] * half[1] + center[1]
            ax = be.sqrt(be.square(px), eps=1e-18)
            return _hinge_sq(be, ax - xl, POS_SCALE) + _hinge_sq(be, z - z_top, POS_SCALE)

        def support(v):
            be = _be(v)
            z = v[..., 1] * half[1] + center[1]
            return _hinge_sq(be, -z, POS_SCALE)

        def hover(v):
            # object above the table, not grasped, essentially at rest:
            # the "floating in mid-air" goal no dynamics can hold
            be = _be(v)
            z = v[..., 1] * half[1] + center[1]
            vx, vz = v[..., 2] * half[2], v[..., 3] * half[3]
            grasp = v[..., 4] * half[4] + center[4]
            speed = be.sqrt(be.square(vx) + be.square(vz), eps=1e-12)
            at_rest = be.square(be.relu(1.0 - speed * (1.0 / HOVER_V_THRESH)))
            free = be.relu(1.0 - be.relu(grasp))
            return _hinge_sq(be, z, HOVER_Z_SCALE) * at_rest * free

        def velocity(v):
            be = _be(v)
            vx, vz = v[..., 2] * half[2], v[..., 3] * half[3]
            avx = be.sqrt(be.square(vx), eps=1e-18)
            avz = be.sqrt(be.square(vz), eps=1e-18)
            return _hinge_sq(be, avx - c.pp_vx_max, VEL_SCALE) + _hinge_sq(be, avz - c.pp_vz_max, VEL_SCALE)

        cs = [Constraint("workspace", w("workspace"), workspace),
              Constraint("support", w("support"), support),
              Constraint("hover", w("hover"), hover),
              Constraint("velocity", w("velocity"), velocity)]
    else:
        raise ValueError(kind)

    return ConstraintSet(kind=kind, constants=c, constraints=cs)


def _check_dim(cset: ConstraintSet, vec) -> None:
    d = vec.shape[-1]
    expected = label_bounds(cset.kind, cset.constants)[0].shape[0]
    if d != expected:
        raise ShapeError(f"physics vector dim {d} != label dim {expected} for {cset.kind.value}")


def evaluate_constraints(cset: ConstraintSet, phys: np.ndarray) -> ConstraintReport:
    """Per-constraint penalties of one normalized physics vector."""
    phys = np.asarray(phys, dtype=np.float64)
    _check_dim(cset, phys)
    penalties = {c.name: float(c.fn(phys)) for c in cset.constraints}
    total = float(sum(c.weight * penalties[c.name] for c in cset.constraints))
    return ConstraintReport(penalties=penalties, total=total,
                            score=float(np.exp(-min(total, SCORE_TOTAL_CAP))))


def total_penalty(cset: ConstraintSet, phys):
    """Weighted penalty total, batched; numpy in -> numpy out, Tensor in -> Tensor out."""
    _check_dim(cset, phys)
    total = None
    for c in cset.constraints:
        term = c.fn(phys) * c.weight
        total = term if total is None else total + term
    return total


def physics_loss(cset: ConstraintSet, z_I, phys_map) -> Tensor:
    """Batch-mean weighted penalty of decoded latents; trains through phys_map."""
    phys = phys_map(z_I)
    return T.mean(total_penalty(cset, phys))


def physics_scores(cset: ConstraintSet, phys) -> np.ndarray:
    """exp(-total penalty) per row of a normalized physics-vector batch."""
    phys = phys.data if isinstance(phys, Tensor) else np.asarray(phys, dtype=np.float64)
    total = total_penalty(cset, phys)
    return np.exp(-np.minimum(np.asarray(total), SCORE_TOTAL_CAP))


def physics_score(cset: ConstraintSet, z_g, phys_map) -> float:
    """Score one latent goal's decoded physics vector; pure function in (0, 1]."""
    phys = phys_map(z_g)
    return float(physics_scores(cset, phys if isinstance(phys, np.ndarray) else phys.data))


def ground_truth_feasible(kind: EnvKind, state: PhysState, c: EnvConstants) -> bool:
    """Exact hard-constraint membership test. Tests and metrics only, never training."""
    if kind == EnvKind.REACHER2:
        if np.any(np.abs(state.q) > reacher.Q_LIM + 1e-9):
            return False
        if np.any(np.abs(state.qd) > c.reacher_qd_max + 1e-6):
            return False
        return True
    if kind == EnvKind.PUSHER2:
        lo, hi = c.pusher_center_bounds()
        for p in (state.eff_p, state.puck_p):
            if np.any(p < lo - 1e-9) or np.any(p > hi + 1e-9):
                return False
        gap = float(np.linalg.norm(state.puck_p - state.eff_p)) - (c.pusher_radius + c.puck_radius)
        if gap < -c.contact_tol:
            return False
        if float(np.linalg.norm(state.puck_v)) > c.puck_v_max + 1e-9:
            return False
        return True
    if kind == EnvKind.PICKPLACE2:
        if state.obj_p[1] < -1e-12 or abs(state.obj_p[0]) > c.pp_half_x - c.obj_radius + 1e-9:
            return False
        if state.obj_p[1] > c.pp_z_max + c.grasp_offset_z + 1e-9:
            return False
        if state.grasped:
            err = state.obj_p - (state.grip_p + pickplace.grasp_offset(c))
            if float(np.linalg.norm(err)) > 1e-12:
                return False
        else:
            speed = float(np.linalg.norm(state.obj_v))
            if state.obj_p[1] > 1e-4 and speed < HOVER_V_THRESH:
                return False  # unsupported hover
        if abs(state.obj_v[0]) > c.pp_vx_max + 1e-9 or abs(state.obj_v[1]) > c.pp_vz_max + 1e-9:
            return False
        return True
    raise ValueError(kind)


def feasible_from_label(kind: EnvKind, label_norm: np.ndarray, c: EnvConstants) -> bool:
    """Feasibility of a decoded goal's physics vector (object part only)."""
    center, half = label_bounds(kind, c)
    raw = np.asarray(label_norm) * half + center
    if kind == EnvKind.REACHER2:
        if float(np.hypot(raw[0], raw[1])) > c.link1 + c.link2 + 1e-9:
            return False
        return float(np.hypot(raw[2], raw[3])) <= half[2] + 1e-9
    if kind == EnvKind.PUSHER2:
        lo, hi = c.pusher_center_bounds()
        if abs(raw[0]) > hi[0] + 1e-9 or abs(raw[1]) > hi[1] + 1e-9:
            return False
        return float(np.hypot(raw[2], raw[3])) <= c.puck_v_max + 1e-9
    if kind == EnvKind.PICKPLACE2:
        x, z, vx, vz, grasp = raw
        if z < -1e-9 or z > c.pp_z_max + c.grasp_offset_z + 1e-9:
            return False
        if abs(x) > c.pp_half_x - c.obj_radius + 1e-9:
            return False
        if grasp < 0.5 and z > 1e-4 and float(np.hypot(vx, vz)) < HOVER_V_THRESH:
            return False
        return abs(vx) <= c.pp_vx_max + 1e-9 and abs(vz) <= c.pp_vz_max + 1e-9
    raise ValueError(kind)
