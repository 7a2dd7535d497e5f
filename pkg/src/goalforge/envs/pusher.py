"""Planar pusher: servo-driven effector disc and a free puck with Coulomb
friction, impulse contact with restitution, and table walls.

Substepped semi-implicit Euler; body-body contact resolves an impulse pair
(momentum-exact) plus positional projection split by inverse mass; wall
contact reflects and projects. Resolution is re-checked and raises rather
than silently clamping.
"""

from __future__ import annotations

import numpy as np

from ..errors import SimulationError
from .types import EnvConstants, PusherState


def reset(rng, c: EnvConstants) -> PusherState:
    lo, hi = c.pusher_center_bounds()
    eff = np.array([float(rng.uniform(-1.0, 1.0)) * hi[0] * 0.95,
                    float(rng.uniform(-1.0, 1.0)) * hi[1] * 0.95])
    min_gap = c.pusher_radius + c.puck_radius + 1e-3
    puck = eff.copy()
    for attempt in range(64):
        puck = np.array([float(rng.uniform(-1.0, 1.0)) * hi[0] * 0.95,
                         float(rng.uniform(-1.0, 1.0)) * hi[1] * 0.95])
        if np.linalg.norm(puck - eff) >= min_gap:
            break
        # degenerate stream (e.g. forced zeros): nudge deterministically
        puck = eff + np.array([min_gap + 1e-3 * (attempt + 1), 0.0])
        puck = np.clip(puck, lo, hi)
        if np.linalg.norm(puck - eff) >= min_gap:
            break
    puck_v = np.array([float(rng.uniform(-1.0, 1.0)), float(rng.uniform(-1.0, 1.0))]) * 0.2
    return PusherState(eff_p=eff, eff_v=np.zeros(2), puck_p=puck, puck_v=puck_v)


def _contact_normal(pa, pb):
    delta = pb - pa
    d = float(np.linalg.norm(delta))
    if d == 0.0:
        return np.array([1.0, 0.0]), 0.0  # coincident centers: fixed separation axis
    return delta / d, d


def _resolve_disc_contact(pa, va, ma, pb, vb, mb, dist_contact, e):
    """Impulse + positional projection for two discs; returns updated (pa,va,pb,vb)."""
    n, d = _contact_normal(pa, pb)
    if d >= dist_contact:
        return pa, va, pb, vb, False
    # positional projection split by inverse mass
    overlap = dist_contact - d
    wa, wb = (1.0 / ma), (1.0 / mb)
    pa = pa - n * (overlap * wa / (wa + wb))
    pb = pb + n * (overlap * wb / (wa + wb))
    # impulse only if approaching
    rel = float((vb - va) @ n)
    if rel < 0.0:
        j = -(1.0 + e) * rel / (wa + wb)
        va = va - n * (j * wa)
        vb = vb + n * (j * wb)
    return pa, va, pb, vb, True


def _wall_bounce(p, v, lo, hi, e):
    p = p.copy()
    v = v.copy()
    for i in range(2):
        if p[i] < lo[i]:
            p[i] = lo[i]
            if v[i] < 0.0:
                v[i] = -e * v[i]
        elif p[i] > hi[i]:
            p[i] = hi[i]
            if v[i] > 0.0:
                v[i] = -e * v[i]
    return p, v


def step(state: PusherState, action: np.ndarray, dt: float, c: EnvConstants) -> PusherState:
    cmd = np.clip(np.asarray(action[:2], dtype=np.float64), -1.0, 1.0) * c.effector_v_scale
    lo, hi = c.pusher_center_bounds()
    h = dt / c.substeps
    eff_p, eff_v = state.eff_p.copy(), state.eff_v.copy()
    puck_p, puck_v = state.puck_p.copy(), state.puck_v.copy()
    mu_g = c.friction_mu * c.gravity

    for _ in range(c.substeps):
        # forces: effector velocity servo, puck Coulomb ground friction
        eff_v = eff_v + (cmd - eff_v) * (c.servo_gain * h)
        speed = float(np.linalg.norm(puck_v))
        if speed <= mu_g * h:
            puck_v = np.zeros(2)  # static friction holds
        elif speed > 0.0:
            puck_v = puck_v - (puck_v / speed) * (mu_g * h)
        eff_p = eff_p + eff_v * h
        puck_p = puck_p + puck_v * h

        contact_dist = c.pusher_radius + c.puck_radius
        eff_p, eff_v, puck_p, puck_v, _ = _resolve_disc_contact(
            eff_p, eff_v, c.pusher_mass, puck_p, puck_v, c.puck_mass,
            contact_dist, c.restitution)
        eff_p, eff_v = _wall_bounce(eff_p, eff_v, lo, hi, c.restitution)
        puck_p, puck_v = _wall_bounce(puck_p, puck_v, lo, hi, c.restitution)
        # wall projection can (re)introduce body overlap: iterate positional
        # correction; a wall-pinned puck pushes the full correction onto the
        # effector, which always has interior room
        for _ in range(8):
            n, d = _contact_normal(eff_p, puck_p)
            if d - contact_dist >= -c.contact_tol * 0.5:
                break
            puck_p = np.clip(puck_p + n * (contact_dist - d), lo, hi)
            n, d = _contact_normal(eff_p, puck_p)
            if d - contact_dist >= -c.contact_tol * 0.5:
                break
            eff_p = np.clip(eff_p - n * (contact_dist - d), lo, hi)

    out = PusherState(eff_p=eff_p, eff_v=eff_v, puck_p=puck_p, puck_v=puck_v)
    check_invariants(out, c)
    return out


def check_invariants(state: PusherState, c: EnvConstants) -> None:
    lo, hi = c.pusher_center_bounds()
    for name, p in (("effector", state.eff_p), ("puck", state.puck_p)):
        if np.any(p < lo - 1e-9) or np.any(p > hi + 1e-9):
            raise SimulationError(f"pusher {name} center left the table: {p}")
    gap = float(np.linalg.norm(state.puck_p - state.eff_p)) - (c.pusher_radius + c.puck_radius)
    if gap < -c.contact_tol:
        raise SimulationError(f"pusher bodies overlap by {-gap:.3g} m")
    if float(np.linalg.norm(state.puck_v)) > c.puck_v_max + 1e-9:
        raise SimulationError(f"puck speed exceeds cap: {state.puck_v}")
