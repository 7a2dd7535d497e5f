"""Central finite-difference oracle for analytic gradients.

Independent of the tape: evaluates the loss as a black box at shifted
parameter values and compares against the accumulated .grad fields.
"""

from __future__ import annotations

import numpy as np

from .params import ParamStore
from .rng import RngStream


def finite_difference_check(
    loss_fn,
    params: ParamStore,
    rng: RngStream,
    n_coords: int = 64,
    h: float = 1e-5,
    rel_tol: float = 1e-4,
    abs_floor: float = 1e-7,
) -> dict:
    """Compare analytic grads of loss_fn(params) against central differences.

    loss_fn must be a deterministic pure function of the parameter values
    (fix any sampling noise before calling). n_coords coordinates are drawn
    uniformly over all parameter entries. Returns a report dict; raises
    AssertionError on failure so pytest output names the offending coord.
    """
    params.zero_grads()
    loss = loss_fn(params)
    loss.backward()
    grads = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
             for name, t in params.items()}
    params.zero_grads()

    names = params.names()
    sizes = np.array([params[n].data.size for n in names])
    total = int(sizes.sum())
    flat_idx = rng.integers(total, shape=(min(n_coords, total),))

    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    worst_coord = None
    for fi in np.unique(flat_idx):
        entry = int(np.searchsorted(offsets, fi, side="right") - 1)
        name = names[entry]
        local = int(fi - offsets[entry])
        p = params[name]
        orig = p.data.ravel()[local]

        p.data.ravel()[local] = orig + h
        f_plus = float(loss_fn(params).data)
        p.data.ravel()[local] = orig - h
        f_minus = float(loss_fn(params).data)
        p.data.ravel()[local] = orig

        fd = (f_plus - f_minus) / (2.0 * h)
        an = float(grads[name].ravel()[local])
        denom = max(abs(fd), abs(an), abs_floor)
        rel = abs(fd - an) / denom
        if rel > worst:
            worst = rel
            worst_coord = (name, local, an, fd)
        assert rel <= rel_tol, (
            f"gradient mismatch at {name}[{local}]: analytic={an:.8g} fd={fd:.8g} rel={rel:.3g}"
        )
    return {"loss": float(loss.data), "worst_rel": worst, "worst_coord": worst_coord,
            "n_checked": int(len(np.unique(flat_idx)))}
