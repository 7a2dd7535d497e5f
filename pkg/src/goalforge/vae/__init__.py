"""Physics-structured VAE, baseline VAE, losses, training, checkpoints."""

from .checkpoint import load_model, save_model
from .losses import (
    VaeLossBreakdown,
    elbo,
    recon_nll_rows,
    rig_loss,
    supervised_bound,
    total_loss,
    unsupervised_bound,
)
from .model import EncoderOut, EnhancedVae, RigVae, VaeConfig
from .train import train_enhanced, train_rig

__all__ = [
    "EnhancedVae", "RigVae", "VaeConfig", "EncoderOut", "VaeLossBreakdown",
    "elbo", "rig_loss", "supervised_bound", "unsupervised_bound", "total_loss",
    "recon_nll_rows", "train_enhanced", "train_rig", "save_model", "load_model",
]
