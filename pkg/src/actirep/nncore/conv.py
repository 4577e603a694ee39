"""2D/1D convolution and transposed convolution on NCHW arrays.

Kernels are windowed views (no explicit im2col buffer for the input) fed
to ``tensordot``.  The transposed convolution is implemented as the exact
adjoint of the strided convolution, so the two share the same three
kernels: forward, input-gradient (col2im) and weight-gradient.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch
from .tensor import Tensor, _make


def same_padding(size: int, k: int, s: int) -> tuple[int, int, int]:
    """Output size and (before, after) padding for TF-style 'same'."""
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2, total - total // 2


def conv_geometry(size: int, k: int, s: int, padding: str) -> tuple[int, int, int]:
    if padding == "same":
        return same_padding(size, k, s)
    if padding == "valid":
        if size < k:
            raise ShapeMismatch(f"input extent {size} smaller than kernel {k}")
        return (size - k) // s + 1, 0, 0
    raise ValueError(f"unknown padding {padding!r}")


def _geom2d(h, w, kh, kw, sh, sw, padding):
    ho, pt, pb = conv_geometry(h, kh, sh, padding)
    wo, pl, pr = conv_geometry(w, kw, sw, padding)
    return ho, wo, (pt, pb), (pl, pr)


def _windows(x: np.ndarray, kh, kw, sh, sw, ph, pw, ho, wo) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0), ph, pw)) if (sum(ph) or sum(pw)) else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    return win[:, :, :ho, :wo]


def conv2d_forward(x, w, stride, padding):
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeMismatch(f"conv input has {c} channels, kernel expects {ci}")
    sh, sw = stride
    ho, wo, ph, pw = _geom2d(h, wd, kh, kw, sh, sw, padding)
    win = _windows(x, kh, kw, sh, sw, ph, pw, ho, wo)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # n, ho, wo, co
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_grad_input(g, w, in_shape, stride, padding):
    n, c, h, wd = in_shape
    co, ci, kh, kw = w.shape
    sh, sw = stride
    ho, wo, ph, pw = _geom2d(h, wd, kh, kw, sh, sw, padding)
    if g.shape[2:] != (ho, wo):
        raise ShapeMismatch(f"gradient {g.shape} incompatible with input {in_shape}")
    cols = np.tensordot(w, g, axes=([0], [1]))  # ci, kh, kw, n, ho, wo
    hp = h + ph[0] + ph[1]
    wp = wd + pw[0] + pw[1]
    dxp = np.zeros((c, n, hp, wp), dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += cols[:, i, j]
    dxp = dxp.transpose(1, 0, 2, 3)
    return dxp[:, :, ph[0] : ph[0] + h, pw[0] : pw[0] + wd]


def conv2d_grad_weight(x, g, w_shape, stride, padding):
    co, ci, kh, kw = w_shape
    sh, sw = stride
    n, c, h, wd = x.shape
    ho, wo, ph, pw = _geom2d(h, wd, kh, kw, sh, sw, padding)
    win = _windows(x, kh, kw, sh, sw, ph, pw, ho, wo)
    return np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # co, ci, kh, kw


def _pair(v) -> tuple[int, int]:
    return (v, v) if isinstance(v, int) else tuple(v)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=1, padding: str = "same") -> Tensor:
    """Cross-correlation of ``x`` (N, C, H, W) with ``w`` (Cout, C, kh, kw)."""
    if x.ndim != 4:
        raise ShapeMismatch(f"conv2d expects NCHW input, got {x.shape}")
    st = _pair(stride)
    xd, wd = x.data, w.data
    y = conv2d_forward(xd, wd, st, padding)
    if b is not None:
        y += b.data.reshape(1, -1, 1, 1)

    def back(g):
        gx = conv2d_grad_input(g, wd, xd.shape, st, padding) if x.requires_grad else None
        gw = conv2d_grad_weight(xd, g, wd.shape, st, padding) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return (gx, gw, gb)

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, back, "conv2d")


def transposed_output_size(size: int, k: int, s: int, padding: str) -> int:
    if padding == "same":
        return size * s
    return (size - 1) * s + k


def conv2d_transpose(
    x: Tensor,
    w: Tensor,
    b: Tensor | None = None,
    stride=1,
    padding: str = "same",
    output_size: tuple[int, int] | None = None,
) -> Tensor:
    """Adjoint of :func:`conv2d`; ``w`` has shape (Cin, Cout, kh, kw).

    ``output_size`` picks among the spatial sizes whose forward conv maps
    back onto ``x`` (defaults to ``in * stride`` for 'same').
    """
    if x.ndim != 4:
        raise ShapeMismatch(f"conv2d_transpose expects NCHW input, got {x.shape}")
    st = _pair(stride)
    xd, wd = x.data, w.data
    n, ci, h, wdt = xd.shape
    if wd.shape[0] != ci:
        raise ShapeMismatch(f"transposed conv input has {ci} channels, kernel expects {wd.shape[0]}")
    co, kh, kw = wd.shape[1], wd.shape[2], wd.shape[3]
    if output_size is None:
        output_size = (
            transposed_output_size(h, kh, st[0], padding),
            transposed_output_size(wdt, kw, st[1], padding),
        )
    out_shape = (n, co, output_size[0], output_size[1])
    y = conv2d_grad_input(xd, wd, out_shape, st, padding)
    if b is not None:
        y = y + b.data.reshape(1, -1, 1, 1)
    else:
        y = np.ascontiguousarray(y)

    def back(g):
        gx = conv2d_forward(g, wd, st, padding) if x.requires_grad else None
        gw = conv2d_grad_weight(g, xd, wd.shape, st, padding) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return (gx, gw, gb)

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, back, "conv2d_transpose")


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: str = "same") -> Tensor:
    """1D convolution of ``x`` (N, C, L) with ``w`` (Cout, C, k)."""
    if x.ndim != 3:
        raise ShapeMismatch(f"conv1d expects NCL input, got {x.shape}")
    n, c, length = x.shape
    co, ci, k = w.shape
    x4 = x.reshape(n, c, 1, length)
    w4 = w.reshape(co, ci, 1, k)
    y = conv2d(x4, w4, b, stride=(1, stride), padding=padding)
    return y.reshape(n, co, y.shape[3])
