"""Dense math core: tensors with reverse-mode gradients, RNG streams, RK4, Adam."""

from .gradcheck import finite_difference_check
from .ode import rk4_integrate, rk4_step
from .ops import (
    clamp_log_sigma,
    forward_backward,
    gaussian_logpdf,
    gaussian_logpdf_std,
    kl_diag_gaussian,
    kl_diag_gaussian_rows,
    reparam_sample,
)
from .params import ParamStore, adam_update
from .rng import RngStream, label_id
from .tensor import Tensor, astensor, set_checked, stop_gradient

__all__ = [
    "Tensor", "astensor", "set_checked", "stop_gradient",
    "ParamStore", "adam_update", "RngStream", "label_id",
    "rk4_step", "rk4_integrate",
    "kl_diag_gaussian", "kl_diag_gaussian_rows", "reparam_sample",
    "gaussian_logpdf", "gaussian_logpdf_std", "clamp_log_sigma",
    "forward_backward", "finite_difference_check",
]
