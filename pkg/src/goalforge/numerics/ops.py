"""Distribution helpers and the forward/backward driver built on the tensor ops."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import tensor as T
from .params import ParamStore
from .tensor import Tensor

LOG_SIGMA_MIN = -10.0
LOG_SIGMA_MAX = 4.0
LOG_2PI = float(np.log(2.0 * np.pi))


def clamp_log_sigma(log_sigma: Tensor) -> Tensor:
    return T.clamp(log_sigma, LOG_SIGMA_MIN, LOG_SIGMA_MAX)


def kl_diag_gaussian(mu, log_sigma) -> Tensor:
    """KL( N(mu, diag(sigma^2)) || N(0, I) ) summed over all dims.

    Sum_d 0.5 * (sigma_d^2 + mu_d^2 - 1 - 2 log sigma_d), always >= 0.
    """
    mu, log_sigma = T.astensor(mu), T.astensor(log_sigma)
    if mu.shape != log_sigma.shape:
        raise ShapeError(f"kl_diag_gaussian: mu {mu.shape} vs log_sigma {log_sigma.shape}")
    var = T.exp(log_sigma * 2.0)
    return T.sum_(var + T.square(mu) - 1.0 - log_sigma * 2.0) * 0.5


def kl_diag_gaussian_rows(mu, log_sigma) -> Tensor:
    """Per-row KL for batched (B, D) inputs: returns (B,)."""
    mu, log_sigma = T.astensor(mu), T.astensor(log_sigma)
    if mu.shape != log_sigma.shape:
        raise ShapeError(f"kl_diag_gaussian: mu {mu.shape} vs log_sigma {log_sigma.shape}")
    var = T.exp(log_sigma * 2.0)
    return T.sum_(var + T.square(mu) - 1.0 - log_sigma * 2.0, axis=-1) * 0.5


def gaussian_logpdf_std(x) -> Tensor:
    """Row-wise log N(x; 0, I): returns (B,) for (B, D) input."""
    x = T.astensor(x)
    d = x.shape[-1]
    return (T.sum_(T.square(x), axis=-1) + d * LOG_2PI) * -0.5


def gaussian_logpdf(x, mu, log_sigma) -> Tensor:
    """Row-wise log N(x; mu, diag(exp(log_sigma)^2)): returns (B,)."""
    x, mu, log_sigma = T.astensor(x), T.astensor(mu), T.astensor(log_sigma)
    z = (x - mu) * T.exp(-log_sigma)
    d = x.shape[-1]
    return (T.sum_(T.square(z), axis=-1) + d * LOG_2PI) * -0.5 - T.sum_(log_sigma, axis=-1)


def reparam_sample(mu, log_sigma, rng=None, eps=None) -> Tensor:
    """mu + exp(clamped log_sigma) * eps with eps ~ N(0, I) from rng.

    Pass eps explicitly to pin the noise (finite-difference checks, tests).
    Gradient flows to mu and log_sigma; eps is a constant.
    """
    mu, log_sigma = T.astensor(mu), T.astensor(log_sigma)
    if mu.shape != log_sigma.shape:
        raise ShapeError(f"reparam_sample: mu {mu.shape} vs log_sigma {log_sigma.shape}")
    if eps is None:
        if rng is None:
            raise ValueError("reparam_sample: provide rng or eps")
        eps = rng.normal(mu.shape)
    eps = np.asarray(eps, dtype=np.float64)
    return mu + T.exp(clamp_log_sigma(log_sigma)) * eps


def forward_backward(graph, inputs, params: ParamStore):
    """Run graph(inputs, params) -> Tensor list, backprop from the first output.

    The first output must be the scalar loss; gradients accumulate into params.
    """
    outputs = graph(inputs, params)
    if isinstance(outputs, Tensor):
        outputs = [outputs]
    outputs[0].backward()
    return outputs
