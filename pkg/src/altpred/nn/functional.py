"""Differentiable primitives.

Image tensors are channels-last, ``(N, H, W, C)``. Kernels follow the same
convention: a standard convolution kernel is ``(k, k, C_in, C_out)``, a
depthwise kernel ``(k, k, C)`` and a pointwise kernel ``(C_in, C_out)``.
Spatial padding is always "same" (``k // 2``), so the output side is
``ceil(H / stride)`` for odd ``k``.

The raw ``*_forward`` / ``*_backward`` kernels operate on plain arrays and are
usable without the graph machinery.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, make_node


def out_size(n: int, k: int, stride: int) -> int:
    pad = k // 2
    return (n + 2 * pad - k) // stride + 1


def _check_image(x: np.ndarray, where: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{where}: expected (N, H, W, C) input, got shape {x.shape}")


# --------------------------------------------------------------------------
# raw kernels


def conv2d_forward(x: np.ndarray, kernel: np.ndarray, stride: int = 1):
    """Standard cross-correlation. Returns ``(output, im2col buffer)``."""
    _check_image(x, "conv2d")
    k, k2, c_in, c_out = kernel.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d: kernel must be square with odd side, got {kernel.shape}")
    if x.shape[3] != c_in:
        raise ValueError(f"conv2d: input has {x.shape[3]} channels, kernel expects {c_in}")
    n, h, w, _ = x.shape
    pad = k // 2
    ho, wo = out_size(h, k, stride), out_size(w, k, stride)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    # (N, Ho, Wo, C, k, k) -> (N*Ho*Wo, k*k*C)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * c_in)
    out = cols @ kernel.reshape(k * k * c_in, c_out)
    return out.reshape(n, ho, wo, c_out), cols


def conv2d_backward(
    grad_out: np.ndarray, x_shape, kernel: np.ndarray, cols: np.ndarray, stride: int = 1, need_input: bool = True
):
    """Gradients of :func:`conv2d_forward` w.r.t. input and kernel.

    The input gradient is ``None`` when ``need_input`` is false.
    """
    k, _, c_in, c_out = kernel.shape
    n, h, w, _ = x_shape
    pad = k // 2
    ho, wo = grad_out.shape[1:3]
    g = grad_out.reshape(-1, c_out)
    grad_kernel = (cols.T @ g).reshape(kernel.shape)
    if not need_input:
        return None, grad_kernel
    gcols = (g @ kernel.reshape(k * k * c_in, c_out).T).reshape(n, ho, wo, k, k, c_in)
    gxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c_in), dtype=grad_out.dtype)
    for i in range(k):
        for j in range(k):
            gxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += gcols[:, :, :, i, j, :]
    return gxp[:, pad : pad + h, pad : pad + w, :], grad_kernel


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if not pad:
        return x
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=x.dtype)
    xp[:, pad : pad + h, pad : pad + w, :] = x
    return xp


def depthwise_forward(x: np.ndarray, kernel: np.ndarray, stride: int = 1) -> np.ndarray:
    _check_image(x, "depthwise_conv2d")
    k, _, c = kernel.shape
    if x.shape[3] != c:
        raise ValueError(f"depthwise_conv2d: input has {x.shape[3]} channels, kernel expects {c}")
    n, h, w, _ = x.shape
    ho, wo = out_size(h, k, stride), out_size(w, k, stride)
    xp = _pad_hw(x, k // 2)
    out = np.zeros((n, ho, wo, c), dtype=np.result_type(x, kernel))
    tmp = np.empty_like(out)
    for i in range(k):
        for j in range(k):
            np.multiply(xp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :], kernel[i, j], out=tmp)
            out += tmp
    return out


def depthwise_backward(grad_out: np.ndarray, x: np.ndarray, kernel: np.ndarray, stride: int = 1,
                       need_input: bool = True):
    k, _, c = kernel.shape
    n, h, w, _ = x.shape
    pad = k // 2
    ho, wo = grad_out.shape[1:3]
    xp = _pad_hw(x, pad)
    gxp = np.zeros_like(xp) if need_input else None
    grad_kernel = np.empty_like(kernel)
    tmp = np.empty_like(grad_out)
    for i in range(k):
        for j in range(k):
            sl = (slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
            np.multiply(grad_out, xp[sl], out=tmp)
            grad_kernel[i, j] = tmp.reshape(-1, c).sum(axis=0)
            if need_input:
                np.multiply(grad_out, kernel[i, j], out=tmp)
                gxp[sl] += tmp
    if not need_input:
        return None, grad_kernel
    return gxp[:, pad : pad + h, pad : pad + w, :], grad_kernel


def pointwise_forward(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    _check_image(x, "pointwise_conv2d")
    if x.shape[3] != kernel.shape[0]:
        raise ValueError(f"pointwise_conv2d: input has {x.shape[3]} channels, kernel expects {kernel.shape[0]}")
    n, h, w, c = x.shape
    return (x.reshape(-1, c) @ kernel).reshape(n, h, w, kernel.shape[1])


def pointwise_backward(grad_out: np.ndarray, x: np.ndarray, kernel: np.ndarray, need_input: bool = True):
    c_in, c_out = kernel.shape
    g = grad_out.reshape(-1, c_out)
    grad_x = (g @ kernel.T).reshape(x.shape) if need_input else None
    grad_kernel = x.reshape(-1, c_in).T @ g
    return grad_x, grad_kernel


# --------------------------------------------------------------------------
# graph ops


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b, op: str = "add") -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    return make_node(a.data + b.data, (a, b), op, backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return make_node(a.data * b.data, (a, b), "mul", backward)


def neg(a: Tensor) -> Tensor:
    return make_node(-a.data, (a,), "neg", lambda g: a.accumulate(-g))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return make_node(a.data @ b.data, (a, b), "matmul", backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ValueError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ weight.data.T)
        if weight.requires_grad:
            weight.accumulate(x.data.T @ g)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=0))

    return make_node(out, parents, "linear", backward)


def total(a: Tensor) -> Tensor:
    return make_node(np.asarray(a.data.sum()), (a,), "sum", lambda g: a.accumulate(np.broadcast_to(g, a.shape)))


def mean(a: Tensor) -> Tensor:
    n = a.size
    return make_node(
        np.asarray(a.data.mean()), (a,), "mean", lambda g: a.accumulate(np.broadcast_to(g / n, a.shape))
    )


def reshape(a: Tensor, shape) -> Tensor:
    return make_node(a.data.reshape(shape), (a,), "reshape", lambda g: a.accumulate(g.reshape(a.shape)))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate(g[tuple(idx)])

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat", backward)


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    out, cols = conv2d_forward(x.data, kernel.data, stride)

    def backward(g):
        gx, gk = conv2d_backward(g, x.shape, kernel.data, cols, stride, x.requires_grad)
        if x.requires_grad:
            x.accumulate(gx)
        if kernel.requires_grad:
            kernel.accumulate(gk)

    return make_node(out, (x, kernel), "conv2d", backward)


def depthwise_conv2d(x: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    out = depthwise_forward(x.data, kernel.data, stride)

    def backward(g):
        gx, gk = depthwise_backward(g, x.data, kernel.data, stride, x.requires_grad)
        if x.requires_grad:
            x.accumulate(gx)
        if kernel.requires_grad:
            kernel.accumulate(gk)

    return make_node(out, (x, kernel), "depthwise_conv2d", backward)


def pointwise_conv2d(x: Tensor, kernel: Tensor) -> Tensor:
    out = pointwise_forward(x.data, kernel.data)

    def backward(g):
        gx, gk = pointwise_backward(g, x.data, kernel.data, x.requires_grad)
        if x.requires_grad:
            x.accumulate(gx)
        if kernel.requires_grad:
            kernel.accumulate(gk)

    return make_node(out, (x, kernel), "pointwise_conv2d", backward)


def depthwise_separable(x: Tensor, dw_kernel: Tensor, pw_kernel: Tensor, stride: int = 1) -> Tensor:
    """Per-channel spatial filtering followed by 1x1 channel mixing."""
    return pointwise_conv2d(depthwise_conv2d(x, dw_kernel, stride), pw_kernel)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Normalise over every axis except the trailing channel axis.

    In training mode batch statistics are used and the running buffers are
    updated in place; otherwise the running buffers are used. A training
    batch with a single value per channel has no spread to normalise by, so
    it also falls back to the running buffers.
    """
    c = x.shape[-1]
    x2 = x.data.reshape(-1, c)
    m = x2.shape[0]
    batch_stats = training and m > 1
    if batch_stats:
        mu = x2.mean(axis=0)
        centered = x2 - mu
        var = np.einsum("ij,ij->j", centered, centered) / m
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * m / (m - 1)
    else:
        centered = x2 - running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def backward(g):
        g2 = g.reshape(-1, c)
        gsum = g2.sum(axis=0)
        gxhat = np.einsum("ij,ij->j", g2, xhat)
        if gamma.requires_grad:
            gamma.accumulate(gxhat)
        if beta.requires_grad:
            beta.accumulate(gsum)
        if x.requires_grad:
            scale = gamma.data * inv_std
            if batch_stats:
                dx = (g2 - gsum / m - xhat * (gxhat / m)) * scale
            else:
                dx = g2 * scale
            x.accumulate(dx.reshape(x.shape))

    return make_node(out.reshape(x.shape), (x, gamma, beta), "batch_norm", backward)


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(x.data.dtype)
    return make_node(x.data * mask, (x,), "relu", lambda g: x.accumulate(g * mask))


def relu6(x: Tensor) -> Tensor:
    mask = ((x.data > 0) & (x.data < 6)).astype(x.data.dtype)
    return make_node(np.clip(x.data, 0.0, 6.0), (x,), "relu6", lambda g: x.accumulate(g * mask))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope).astype(x.data.dtype)
    return make_node(x.data * scale, (x,), "leaky_relu", lambda g: x.accumulate(g * scale))


def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_node(s, (x,), "sigmoid", lambda g: x.accumulate(g * s * (1.0 - s)))


def swish(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    out = x.data * s
    return make_node(out, (x,), "swish", lambda g: x.accumulate(g * (s + out * (1.0 - s))))


ACTIVATIONS = {
    "relu": relu,
    "relu6": relu6,
    "leaky_relu": leaky_relu,
    "sigmoid": sigmoid,
    "swish": swish,
}


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    if not training or rate == 0.0:
        return x
    keep = ((rng.random(x.shape) >= rate) / (1.0 - rate)).astype(x.data.dtype)
    return make_node(x.data * keep, (x,), "dropout", lambda g: x.accumulate(g * keep))


def max_pool(x: Tensor, size: int) -> Tensor:
    """Non-overlapping ``size x size`` max pooling; H and W must be divisible by ``size``."""
    n, h, w, c = x.shape
    if h % size or w % size:
        raise ValueError(f"max_pool: spatial dims {h}x{w} not divisible by {size}")
    taps = [(i, j) for i in range(size) for j in range(size)]
    out = x.data[:, ::size, ::size, :].copy()
    for i, j in taps[1:]:
        np.maximum(out, x.data[:, i::size, j::size, :], out=out)

    def backward(g):
        # ties route the gradient to the first tap that attains the maximum
        gx = np.zeros_like(x.data)
        taken = np.zeros(out.shape, dtype=bool)
        for i, j in taps:
            hit = (x.data[:, i::size, j::size, :] == out) & ~taken
            gx[:, i::size, j::size, :] = g * hit
            taken |= hit
        x.accumulate(gx)

    return make_node(out, (x,), "max_pool", backward)


def global_avg_pool(x: Tensor) -> Tensor:
    n, h, w, c = x.shape
    area = h * w
    return make_node(
        x.data.mean(axis=(1, 2)),
        (x,),
        "global_avg_pool",
        lambda g: x.accumulate(np.broadcast_to(g[:, None, None, :] / area, x.shape)),
    )


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error; the subgradient at zero residual is taken as 0."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.data.dtype)
    target = target.reshape(pred.shape)
    diff = pred.data - target
    n = diff.size
    return make_node(
        np.asarray(np.abs(diff).mean()), (pred,), "l1_loss", lambda g: pred.accumulate(g * np.sign(diff) / n)
    )
