"""Training objectives: plain negative ELBO, the baseline reconstruction loss,
the semi-supervised bounds, and the combined objective with the physics term.

Conventions, fixed across the repo:
- reconstruction is the Gaussian NLL with fixed sigma_x, constant dropped:
  sum over pixels of (x - xhat)^2 / (2 sigma_x^2), averaged over the batch;
- z-space terms in the semi-supervised bounds are single-sample log densities
  (Monte Carlo), while elbo() defaults to analytic KL (kl_mode switches);
- every loss returns a scalar Tensor, differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from ..numerics import (
    gaussian_logpdf,
    gaussian_logpdf_std,
    kl_diag_gaussian_rows,
    reparam_sample,
)
from ..numerics import tensor as T
from ..numerics.tensor import Tensor
from ..physics import ConstraintSet, physics_loss
from .model import EnhancedVae, RigVae


@dataclass
class VaeLossBreakdown:
    """Weighted contributions; total is their exact sum."""

    reconstruction: float
    kl_I: float
    kl_E: float
    physics: float
    supervised: float
    total: float
    alpha: float
    beta: float
    lam: float

    def parts_sum(self) -> float:
        return self.reconstruction + self.kl_I + self.kl_E + self.physics + self.supervised


def recon_nll_rows(x: Tensor, xhat: Tensor, sigma_x: float) -> Tensor:
    """Per-sample scaled squared error, (B,)."""
    if x.shape != xhat.shape:
        raise ShapeError(f"reconstruction: {x.shape} vs {xhat.shape}")
    B = x.shape[0]
    diff = T.reshape(x - xhat, (B, -1))
    return T.sum_(T.square(diff), axis=1) * (0.5 / (sigma_x * sigma_x))


def _draw_eps(rng, shape):
    return rng.normal(shape) if rng is not None else np.zeros(shape)


def elbo(x: Tensor, model: EnhancedVae, rng=None, eps=None, kl_mode: str = "analytic"):
    """Negative ELBO of the structured model: recon + beta * (KL_I + KL_E).

    kl_mode="analytic" uses the closed-form KL; "sampled" uses the pointwise
    log-density estimator at the drawn z (matching the semi-supervised bounds).
    Returns (total, breakdown).
    """
    cfg = model.cfg
    enc = model.encode(x)
    if eps is None:
        eps = (_draw_eps(rng, enc.mu_I.shape), _draw_eps(rng, enc.mu_E.shape))
    z_I = reparam_sample(enc.mu_I, enc.log_sigma_I, eps=eps[0])
    z_E = reparam_sample(enc.mu_E, enc.log_sigma_E, eps=eps[1])
    xhat = model.decode(z_I, z_E)
    recon = T.mean(recon_nll_rows(x, xhat, cfg.sigma_x))
    if kl_mode == "analytic":
        kl_I = T.mean(kl_diag_gaussian_rows(enc.mu_I, enc.log_sigma_I))
        kl_E = T.mean(kl_diag_gaussian_rows(enc.mu_E, enc.log_sigma_E))
    elif kl_mode == "sampled":
        kl_I = T.mean(gaussian_logpdf(z_I, enc.mu_I, enc.log_sigma_I) - gaussian_logpdf_std(z_I))
        kl_E = T.mean(gaussian_logpdf(z_E, enc.mu_E, enc.log_sigma_E) - gaussian_logpdf_std(z_E))
    else:
        raise ConfigError(f"unknown kl_mode {kl_mode!r}")
    total = recon + (kl_I + kl_E) * cfg.beta
    bd = VaeLossBreakdown(
        reconstruction=float(recon.data), kl_I=float(kl_I.data) * cfg.beta,
        kl_E=float(kl_E.data) * cfg.beta, physics=0.0, supervised=0.0,
        total=float(total.data), alpha=cfg.alpha, beta=cfg.beta, lam=cfg.lam)
    return total, bd


def rig_loss(x: Tensor, model: RigVae, rng=None, eps=None):
    """Baseline objective: ||x - D(E(x))||^2 term + beta * KL, one latent block."""
    cfg = model.cfg
    enc = model.encode(x)
    if eps is None:
        eps = _draw_eps(rng, enc.mu_I.shape)
    z = reparam_sample(enc.mu_I, enc.log_sigma_I, eps=eps)
    xhat = model.decode(z)
    recon = T.mean(recon_nll_rows(x, xhat, cfg.sigma_x))
    kl = T.mean(kl_diag_gaussian_rows(enc.mu_I, enc.log_sigma_I))
    total = recon + kl * cfg.beta
    bd = VaeLossBreakdown(
        reconstruction=float(recon.data), kl_I=float(kl.data) * cfg.beta, kl_E=0.0,
        physics=0.0, supervised=0.0, total=float(total.data),
        alpha=cfg.alpha, beta=cfg.beta, lam=cfg.lam)
    return total, bd


def _complete_label(z_star: Tensor, d_I: int, k: int) -> Tensor:
    """Label as a full intrinsic vector: unsupervised coordinates sit at the
    prior mean (no z_I posterior appears anywhere in the supervised bound)."""
    if k == d_I:
        return z_star
    B = z_star.shape[0]
    return T.concat([z_star, Tensor(np.zeros((B, d_I - k)))], axis=1)


def supervised_bound(x: Tensor, z_star: Tensor, model: EnhancedVae, rng=None, eps_E=None):
    """Negated supervised bound: labels pin the intrinsic coordinates, only the
    appearance posterior is sampled. Returns (scalar, row_terms dict)."""
    cfg = model.cfg
    k = model.label_dim
    if z_star.shape[-1] != k:
        raise ShapeError(f"label dim {z_star.shape[-1]} != {k}")
    z_sup = _complete_label(z_star, cfg.d_I, k)
    enc = model.encode(x, cond_mu_I=z_sup)
    if eps_E is None:
        eps_E = _draw_eps(rng, enc.mu_E.shape)
    z_E = reparam_sample(enc.mu_E, enc.log_sigma_E, eps=eps_E)
    xhat = model.render_phys(model.phys_of_latent(z_sup), z_E)
    nll_x = recon_nll_rows(x, xhat, cfg.sigma_x)
    logp_zstar = gaussian_logpdf_std(z_star)
    logp_zE = gaussian_logpdf_std(z_E)
    logq_zE = gaussian_logpdf(z_E, enc.mu_E, enc.log_sigma_E)
    rows = {"nll_x": nll_x, "neg_logp_zstar": logp_zstar * -1.0,
            "kl_E_sampled": logq_zE - logp_zE}
    total = T.mean(nll_x - logp_zstar - logp_zE + logq_zE)
    return total, rows


def unsupervised_bound(x: Tensor, model: EnhancedVae, rng=None, eps=None):
    """Negated marginal bound with the stop-gradient on the physics-head output:
    gradients reach the encoder and the z_E path but never f_I^theta."""
    cfg = model.cfg
    enc = model.encode(x)
    if eps is None:
        eps = (_draw_eps(rng, enc.mu_I.shape), _draw_eps(rng, enc.mu_E.shape))
    z_I = reparam_sample(enc.mu_I, enc.log_sigma_I, eps=eps[0])
    z_E = reparam_sample(enc.mu_E, enc.log_sigma_E, eps=eps[1])
    xhat = model.decode(z_I, z_E, stop_grad_phys=cfg.stop_grad_unsupervised)
    nll_x = recon_nll_rows(x, xhat, cfg.sigma_x)
    kl_I_s = gaussian_logpdf(z_I, enc.mu_I, enc.log_sigma_I) - gaussian_logpdf_std(z_I)
    kl_E_s = gaussian_logpdf(z_E, enc.mu_E, enc.log_sigma_E) - gaussian_logpdf_std(z_E)
    rows = {"nll_x": nll_x, "kl_I_sampled": kl_I_s, "kl_E_sampled": kl_E_s}
    total = T.mean(nll_x + kl_I_s + kl_E_s)
    return total, rows


def total_loss(x: Tensor, labels: Tensor, label_mask: np.ndarray, model: EnhancedVae,
               cset: ConstraintSet, rng=None, eps=None):
    """alpha-weighted supervised + unsupervised bounds, the mu_I regression
    anchor L_c, and the physics penalty on all decoded samples.

    Subset terms are means within each subset; empty subsets contribute 0.
    The trunk runs once over the batch; subset heads reuse its features
    (numerically the same math as the standalone bound functions).
    Returns (total, VaeLossBreakdown).
    """
    cfg = model.cfg
    if not 0.0 <= cfg.alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {cfg.alpha}")
    if cfg.lam < 0.0 or cfg.w_phys < 0.0:
        raise ConfigError("lambda and physics weight must be >= 0")
    mask = np.asarray(label_mask, dtype=bool)
    idx_s = np.nonzero(mask)[0]
    idx_u = np.nonzero(~mask)[0]
    B = x.shape[0]
    k = model.label_dim

    if eps is None:
        eps = (_draw_eps(rng, (B, cfg.d_I)), _draw_eps(rng, (B, cfg.d_E)))

    h = model.trunk(x, model.params)
    enc_all = model.encode(None, h=h)

    zero = Tensor(0.0)
    recon_part, kl_I_part, kl_E_part, sup_part = zero, zero, zero, zero

    if len(idx_s) > 0:
        zs = labels[idx_s] if isinstance(labels, Tensor) else Tensor(np.asarray(labels)[idx_s])
        mu_I_s = enc_all.mu_I[idx_s]
        if cfg.alpha > 0.0:
            xs = x[idx_s]
            z_sup = _complete_label(zs, cfg.d_I, k)
            enc_s = model.encode(None, cond_mu_I=z_sup, h=h[idx_s])
            z_E = reparam_sample(enc_s.mu_E, enc_s.log_sigma_E, eps=eps[1][idx_s])
            xhat = model.render_phys(model.phys_of_latent(z_sup), z_E)
            nll_x = recon_nll_rows(xs, xhat, cfg.sigma_x)
            recon_part = recon_part + T.mean(nll_x) * cfg.alpha
            kl_I_part = kl_I_part + T.mean(gaussian_logpdf_std(zs) * -1.0) * cfg.alpha
            kl_E_part = kl_E_part + T.mean(
                gaussian_logpdf(z_E, enc_s.mu_E, enc_s.log_sigma_E) - gaussian_logpdf_std(z_E)
            ) * cfg.alpha
        if cfg.lam > 0.0:
            l_c = T.mean(T.sum_(T.square(mu_I_s[:, :k] - zs), axis=1))
            sup_part = l_c * cfg.lam
    if len(idx_u) > 0 and cfg.alpha < 1.0:
        xu = x[idx_u]
        mu_I_u, ls_I_u = enc_all.mu_I[idx_u], enc_all.log_sigma_I[idx_u]
        enc_u = model.encode(None, cond_mu_I=mu_I_u, h=h[idx_u])
        z_I = reparam_sample(mu_I_u, ls_I_u, eps=eps[0][idx_u])
        z_E = reparam_sample(enc_u.mu_E, enc_u.log_sigma_E, eps=eps[1][idx_u])
        xhat = model.decode(z_I, z_E, stop_grad_phys=cfg.stop_grad_unsupervised)
        nll_x = recon_nll_rows(xu, xhat, cfg.sigma_x)
        recon_part = recon_part + T.mean(nll_x) * (1.0 - cfg.alpha)
        kl_I_part = kl_I_part + T.mean(
            gaussian_logpdf(z_I, mu_I_u, ls_I_u) - gaussian_logpdf_std(z_I)) * (1.0 - cfg.alpha)
        kl_E_part = kl_E_part + T.mean(
            gaussian_logpdf(z_E, enc_u.mu_E, enc_u.log_sigma_E) - gaussian_logpdf_std(z_E)
        ) * (1.0 - cfg.alpha)

    # Algorithm-1 physics term: posterior z_I samples of the full batch
    z_I_all = reparam_sample(enc_all.mu_I, enc_all.log_sigma_I, eps=eps[0])
    phys_part = physics_loss(cset, z_I_all, model.phys_of_latent) * cfg.w_phys

    total = recon_part + kl_I_part + kl_E_part + phys_part + sup_part
    bd = VaeLossBreakdown(
        reconstruction=float(recon_part.data), kl_I=float(kl_I_part.data),
        kl_E=float(kl_E_part.data), physics=float(phys_part.data),
        supervised=float(sup_part.data), total=float(total.data),
        alpha=cfg.alpha, beta=cfg.beta, lam=cfg.lam)
    return total, bd
