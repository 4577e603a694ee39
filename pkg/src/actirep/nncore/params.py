from __future__ import annotations

import numpy as np

from .layers import LayerSpec, seeded_init
from .tensor import Tensor


class ParamSet:
    """Named parameter tensors of a model, keyed ``"<layer>.<param>"``."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.specs: dict[str, LayerSpec] = {}

    def add_layer(self, name: str, spec: LayerSpec, seed: int) -> None:
        self.specs[name] = spec
        for pname, t in seeded_init(spec, seed).items():
            t.name = f"{name}.{pname}"
            self.params[t.name] = t

    def layer(self, name: str) -> dict[str, Tensor]:
        prefix = name + "."
        return {k[len(prefix) :]: v for k, v in self.params.items() if k.startswith(prefix)}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: p.grad for k, p in self.params.items() if p.grad is not None}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks tensors: {sorted(missing)}")
        for k, p in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.data.shape:
                raise ValueError(f"{k}: checkpoint shape {arr.shape} != model shape {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def astype(self, dtype) -> None:
        for p in self.params.values():
            p.data = p.data.astype(dtype)
            p.grad = None
