"""Named parameter groups with accumulated gradients and the Adam update."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import Tensor


class ParamStore:
    """name -> trainable Tensor (gradient rides on the Tensor); plus Adam state."""

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self.step = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._entries:
            raise ShapeError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True, op=f"param:{name}")
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def n_params(self) -> int:
        return sum(t.data.size for t in self._entries.values())

    def grads(self) -> dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self._entries.items()
        }

    def zero_grads(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def clone(self) -> "ParamStore":
        other = ParamStore()
        for name, t in self._entries.items():
            other.add(name, t.data.copy())
        other.step = self.step
        other._m = {k: v.copy() for k, v in self._m.items()}
        other._v = {k: v.copy() for k, v in self._v.items()}
        return other

    def copy_values_from(self, other: "ParamStore") -> None:
        """Bitwise copy of parameter values (target-network sync)."""
        for name, t in other._entries.items():
            self._entries[name].data = t.data.copy()


def adam_update(params: ParamStore, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8) -> None:
    """One Adam step over all entries; zeroes gradients and bumps the counter."""
    if lr <= 0.0:
        raise ConfigError(f"adam_update: lr must be positive, got {lr}")
    b1, b2 = betas
    params.step += 1
    t = params.step
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = params._m.get(name)
        if m is None:
            m = params._m[name] = np.zeros_like(p.data)
        v = params._v.get(name)
        if v is None:
            v = params._v[name] = np.zeros_like(p.data)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    params.zero_grads()
