"""Classical RK4 integration, generic over the array type.

The step uses only arithmetic operators, so it works both on plain numpy
arrays (environment simulation) and on autodiff Tensors (the decoder's
dynamics functional, where gradients must flow through the integration).
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError


def rk4_step(deriv, state, dt: float):
    """One RK4 step of ds/dt = deriv(s). Local error O(dt^5) for smooth deriv."""
    if dt <= 0.0:
        raise ValueError(f"rk4_step: dt must be positive, got {dt}")
    k1 = deriv(state)
    k2 = deriv(state + k1 * (dt / 2.0))
    k3 = deriv(state + k2 * (dt / 2.0))
    k4 = deriv(state + k3 * dt)
    out = state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    data = out.data if hasattr(out, "data") else np.asarray(out)
    if not np.all(np.isfinite(data)):
        bad = int(np.argmin(np.isfinite(np.asarray(data)).ravel()))
        raise NumericError(f"rk4_step: non-finite state component at flat index {bad}")
    return out


def rk4_integrate(deriv, state, dt: float, n_steps: int):
    """n_steps consecutive RK4 steps of size dt."""
    for _ in range(int(n_steps)):
        state = rk4_step(deriv, state, dt)
    return state
