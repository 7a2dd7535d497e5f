"""Dual-backend function namespace.

Code that must run both on plain numpy arrays (fast simulation/rasterization)
and on autodiff Tensors (inside the decoder and the physics penalties) is
written against this tiny vocabulary and receives the backend as an argument.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T


class NumpyBackend:
    name = "numpy"

    @staticmethod
    def exp(x):
        return np.exp(x)

    @staticmethod
    def tanh(x):
        return np.tanh(x)

    @staticmethod
    def sigmoid(x):
        return 1.0 / (1.0 + np.exp(-x))

    @staticmethod
    def relu(x):
        return np.maximum(x, 0.0)

    @staticmethod
    def square(x):
        return x * x

    @staticmethod
    def sqrt(x, eps=0.0):
        return np.sqrt(x + eps)

    @staticmethod
    def sum(x, axis=None):
        return np.sum(x, axis=axis)

    @staticmethod
    def mean(x, axis=None):
        return np.mean(x, axis=axis)

    @staticmethod
    def stack_last(parts):
        return np.stack(parts, axis=-1)

    @staticmethod
    def stack_channels(parts):
        """Scalars/(1,1)-likes -> (3, 1, 1) color array."""
        return np.asarray(parts, dtype=np.float64).reshape(3, 1, 1)


class TensorBackend:
    name = "tensor"

    exp = staticmethod(T.exp)
    tanh = staticmethod(T.tanh)
    sigmoid = staticmethod(T.sigmoid)
    relu = staticmethod(T.relu)
    square = staticmethod(T.square)

    @staticmethod
    def sqrt(x, eps=0.0):
        return T.sqrt(x, eps=eps)

    @staticmethod
    def sum(x, axis=None):
        return T.sum_(x, axis=axis)

    @staticmethod
    def mean(x, axis=None):
        return T.mean(x, axis=axis)

    @staticmethod
    def stack_last(parts):
        expanded = [T.reshape(p, p.shape + (1,)) for p in parts]
        return T.concat(expanded, axis=-1)

    @staticmethod
    def stack_channels(parts):
        """(B,1,1,1) tensors -> (B, 3, 1, 1) color tensor."""
        return T.concat([T.astensor(p) for p in parts], axis=1)


NUMPY = NumpyBackend()
TENSOR = TensorBackend()
