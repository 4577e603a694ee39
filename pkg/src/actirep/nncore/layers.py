"""Layer specifications, seeded initialisation and a single ``forward`` dispatch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from . import tensor as T
from .conv import conv1d, conv2d, conv2d_transpose
from .tensor import Tensor

KINDS = ("conv2d", "conv2d_transpose", "conv1d", "dense", "lstm", "activation")
ACTIVATIONS = ("relu", "sigmoid", "linear", "tanh")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 1  # filters for conv kinds
    inputs: int = 1  # input channels / features
    kernel: int = 1
    stride: int = 1
    padding: str = "same"
    activation: str = "linear"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.kernel < 1 or self.stride < 1 or self.units < 1 or self.inputs < 1:
            raise ValueError("kernel, stride, units and inputs must be >= 1")

    @property
    def filters(self) -> int:
        return self.units


def param_shapes(spec: LayerSpec) -> dict[str, tuple[int, ...]]:
    k, u, i = spec.kernel, spec.units, spec.inputs
    if spec.kind == "conv2d":
        return {"w": (u, i, k, k), "b": (u,)}
    if spec.kind == "conv2d_transpose":
        return {"w": (i, u, k, k), "b": (u,)}
    if spec.kind == "conv1d":
        return {"w": (u, i, k), "b": (u,)}
    if spec.kind == "dense":
        return {"w": (i, u), "b": (u,)}
    if spec.kind == "lstm":
        # gate order: input, forget, cell, output
        return {"wx": (i, 4 * u), "wh": (u, 4 * u), "b": (4 * u,)}
    return {}


def _fans(spec: LayerSpec, shape: tuple[int, ...]) -> tuple[int, int]:
    if spec.kind in ("conv2d", "conv2d_transpose", "conv1d"):
        receptive = int(np.prod(shape[2:]))
        return shape[1] * receptive, shape[0] * receptive
    return shape[0], shape[1]


def seeded_init(spec: LayerSpec, seed: int, dtype=T.DEFAULT_DTYPE) -> dict[str, Tensor]:
    """Glorot-uniform weights, zero biases; a pure function of (spec, seed)."""
    rng = np.random.default_rng([seed, KINDS.index(spec.kind), spec.units, spec.inputs, spec.kernel])
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(spec).items():
        if name == "b":
            arr = np.zeros(shape, dtype=dtype)
        else:
            fan_in, fan_out = _fans(spec, shape)
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            arr = rng.uniform(-bound, bound, size=shape).astype(dtype)
        params[name] = Tensor(arr, requires_grad=True, name=name)
    return params


def lstm_step(x: Tensor, h: Tensor, c: Tensor, params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    u = h.shape[1]
    z = T.matmul(x, params["wx"]) + T.matmul(h, params["wh"]) + params["b"]
    i = T.sigmoid(z[:, 0:u])
    f = T.sigmoid(z[:, u : 2 * u])
    g = T.tanh(z[:, 2 * u : 3 * u])
    o = T.sigmoid(z[:, 3 * u : 4 * u])
    c_new = f * c + i * g
    h_new = o * T.tanh(c_new)
    return h_new, c_new


def lstm(x: Tensor, params: dict[str, Tensor], units: int) -> Tensor:
    """Run over ``x`` (N, steps, features); returns the final hidden state."""
    n, steps, _ = x.shape
    h = Tensor(np.zeros((n, units), dtype=x.dtype))
    c = Tensor(np.zeros((n, units), dtype=x.dtype))
    for t in range(steps):
        h, c = lstm_step(x[:, t, :], h, c, params)
    return h


def forward(spec: LayerSpec, params: dict[str, Tensor], x: Tensor, **kw) -> Tensor:
    """Apply one layer, then its activation."""
    if spec.kind == "conv2d":
        if x.ndim != 4 or x.shape[1] != spec.inputs:
            raise ShapeMismatch(f"conv2d expects (N, {spec.inputs}, H, W), got {x.shape}")
        y = conv2d(x, params["w"], params["b"], spec.stride, spec.padding)
    elif spec.kind == "conv2d_transpose":
        if x.ndim != 4 or x.shape[1] != spec.inputs:
            raise ShapeMismatch(f"conv2d_transpose expects (N, {spec.inputs}, H, W), got {x.shape}")
        y = conv2d_transpose(x, params["w"], params["b"], spec.stride, spec.padding, kw.get("output_size"))
    elif spec.kind == "conv1d":
        if x.ndim != 3 or x.shape[1] != spec.inputs:
            raise ShapeMismatch(f"conv1d expects (N, {spec.inputs}, L), got {x.shape}")
        y = conv1d(x, params["w"], params["b"], spec.stride, spec.padding)
    elif spec.kind == "dense":
        if x.ndim != 2 or x.shape[1] != spec.inputs:
            raise ShapeMismatch(f"dense expects (N, {spec.inputs}), got {x.shape}")
        y = T.matmul(x, params["w"]) + params["b"]
    elif spec.kind == "lstm":
        if x.ndim != 3 or x.shape[2] != spec.inputs:
            raise ShapeMismatch(f"lstm expects (N, steps, {spec.inputs}), got {x.shape}")
        y = lstm(x, params, spec.units)
    else:
        y = x
    return T.activation(y, spec.activation)
