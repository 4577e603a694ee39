"""Small deterministic numpy autodiff engine used by the VAE and CNN-LSTM."""

from .checkpoint import dumps, load, loads, save
from .conv import conv1d, conv2d, conv2d_transpose
from .layers import LayerSpec, forward, lstm, lstm_step, param_shapes, seeded_init
from .optim import OptimizerState, optimizer_step
from .tensor import (
    Tensor,
    add,
    bce_with_logits,
    bce_with_logits_rows,
    clip,
    concat,
    exp,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    sigmoid_np,
    square,
    stack,
    sub,
    tanh,
    tsum,
)

__all__ = [
    "LayerSpec",
    "OptimizerState",
    "Tensor",
    "add",
    "bce_with_logits",
    "bce_with_logits_rows",
    "clip",
    "concat",
    "conv1d",
    "conv2d",
    "conv2d_transpose",
    "dumps",
    "exp",
    "forward",
    "load",
    "loads",
    "lstm",
    "lstm_step",
    "matmul",
    "mean",
    "mul",
    "optimizer_step",
    "param_shapes",
    "relu",
    "reshape",
    "save",
    "seeded_init",
    "sigmoid",
    "sigmoid_np",
    "square",
    "stack",
    "sub",
    "tanh",
    "tsum",
]
