"""Training loops for both latent models, with per-epoch loss histories."""

from __future__ import annotations

import numpy as np

from ..envs.dataset import TrajectoryData
from ..errors import NumericError
from ..numerics import RngStream, adam_update
from ..numerics.tensor import Tensor
from ..physics import ConstraintSet, build_constraint_set
from .losses import VaeLossBreakdown, rig_loss, total_loss
from .model import EnhancedVae, RigVae


def _epoch_mean(breakdowns: list[VaeLossBreakdown]) -> VaeLossBreakdown:
    n = len(breakdowns)
    return VaeLossBreakdown(
        reconstruction=sum(b.reconstruction for b in breakdowns) / n,
        kl_I=sum(b.kl_I for b in breakdowns) / n,
        kl_E=sum(b.kl_E for b in breakdowns) / n,
        physics=sum(b.physics for b in breakdowns) / n,
        supervised=sum(b.supervised for b in breakdowns) / n,
        total=sum(b.total for b in breakdowns) / n,
        alpha=breakdowns[0].alpha, beta=breakdowns[0].beta, lam=breakdowns[0].lam)


def train_enhanced(model: EnhancedVae, data: TrajectoryData, epochs: int,
                   rng: RngStream, cset: ConstraintSet | None = None,
                   weights: dict | None = None) -> list[VaeLossBreakdown]:
    """Algorithm: encode, sample, decode, physics-penalize, total loss, Adam.

    Aborts on a non-finite loss, restoring the last epoch-end parameters.
    """
    cfg = model.cfg
    cset = cset or build_constraint_set(model.kind, model.constants, weights)
    shuffle = rng.spawn("shuffle")
    noise = rng.spawn("noise")
    n = len(data)
    bs = min(cfg.batch_size, n)
    history: list[VaeLossBreakdown] = []
    snapshot = {name: t.data.copy() for name, t in model.params.items()}
    for _ in range(int(epochs)):
        order = shuffle.permutation(n)
        epoch_parts = []
        for start in range(0, n - bs + 1, bs):
            idx = order[start:start + bs]
            x = Tensor(data.images[idx])
            labels = Tensor(data.labels[idx])
            mask = data.label_mask[idx]
            eps = (noise.normal((len(idx), cfg.d_I)), noise.normal((len(idx), cfg.d_E)))
            loss, bd = total_loss(x, labels, mask, model, cset, eps=eps)
            if not np.isfinite(bd.total):
                for name, t in model.params.items():
                    t.data = snapshot[name].copy()
                raise NumericError(f"enhanced VAE diverged (loss={bd.total}); last epoch restored")
            model.params.zero_grads()
            loss.backward()
            adam_update(model.params, lr=cfg.lr)
            epoch_parts.append(bd)
        history.append(_epoch_mean(epoch_parts))
        snapshot = {name: t.data.copy() for name, t in model.params.items()}
    return history


def train_rig(model: RigVae, data: TrajectoryData, epochs: int,
              rng: RngStream) -> list[VaeLossBreakdown]:
    cfg = model.cfg
    shuffle = rng.spawn("shuffle")
    noise = rng.spawn("noise")
    n = len(data)
    bs = min(cfg.batch_size, n)
    history: list[VaeLossBreakdown] = []
    snapshot = {name: t.data.copy() for name, t in model.params.items()}
    for _ in range(int(epochs)):
        order = shuffle.permutation(n)
        epoch_parts = []
        for start in range(0, n - bs + 1, bs):
            idx = order[start:start + bs]
            x = Tensor(data.images[idx])
            eps = noise.normal((len(idx), model.d))
            loss, bd = rig_loss(x, model, eps=eps)
            if not np.isfinite(bd.total):
                for name, t in model.params.items():
                    t.data = snapshot[name].copy()
                raise NumericError(f"baseline VAE diverged (loss={bd.total}); last epoch restored")
            model.params.zero_grads()
            loss.backward()
            adam_update(model.params, lr=cfg.lr)
            epoch_parts.append(bd)
        history.append(_epoch_mean(epoch_parts))
        snapshot = {name: t.data.copy() for name, t in model.params.items()}
    return history
