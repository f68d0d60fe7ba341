"""Forward and backward passes for every layer primitive the networks use.

Convolutions, pooling, and ReLU run through fused JIT kernels (_kernels.py)
that touch each array once; 2D convolutions with stride > 1 (which none of
the architectures use) fall back to an im2col + matrix-product reference
path.

Array-level kernels (suffix ``_array``) take a leading batch axis and are what
the model graph calls. The public functions mirror them but also accept single
samples without a batch axis, returning results of matching rank.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import as_strided

from . import _kernels
from .errors import ShapeError
from .tensor import Tensor, as_array

# Ceiling for the im2col fallback's unrolled-window buffer, per batch chunk.
_MAX_SCRATCH_BYTES = 256 * 1024 * 1024

PADDING_MODES = ("same", "valid")


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class Conv1DParams:
    """1D convolution parameters: weights (out_ch, in_ch, k), bias (out_ch)."""

    weights: Tensor
    bias: Tensor
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        w, b = as_array(self.weights), as_array(self.bias)
        if w.ndim != 3:
            raise ShapeError(f"conv1d weights must be (out, in, k), got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv1d bias must be ({w.shape[0]},), got {b.shape}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding not in PADDING_MODES:
            raise ShapeError(f"padding must be one of {PADDING_MODES}, got {self.padding!r}")


@dataclass(frozen=True)
class Conv2DParams:
    """2D convolution parameters: weights (out_ch, in_ch, kh, kw), bias (out_ch)."""

    weights: Tensor
    bias: Tensor
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        w, b = as_array(self.weights), as_array(self.bias)
        if w.ndim != 4:
            raise ShapeError(f"conv2d weights must be (out, in, kh, kw), got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv2d bias must be ({w.shape[0]},), got {b.shape}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding not in PADDING_MODES:
            raise ShapeError(f"padding must be one of {PADDING_MODES}, got {self.padding!r}")


@dataclass(frozen=True)
class BatchNormState:
    """Per-channel batch normalization state.

    ``momentum`` is the retention factor of the running statistics:
    running = momentum * running + (1 - momentum) * batch_statistic.
    Running statistics use the biased batch variance, consistent with the
    normalization itself.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    momentum: float = 0.9
    epsilon: float = 1e-5
    mode: str = "train"
    initialized: bool = False

    def __post_init__(self):
        if not (0.0 < self.momentum < 1.0):
            raise ShapeError(f"momentum must be in (0, 1), got {self.momentum}")
        if self.epsilon <= 0.0:
            raise ShapeError(f"epsilon must be positive, got {self.epsilon}")
        if self.mode not in ("train", "infer"):
            raise ShapeError(f"mode must be 'train' or 'infer', got {self.mode!r}")
        c = as_array(self.gamma).shape
        for field in ("beta", "running_mean", "running_var"):
            if as_array(getattr(self, field)).shape != c:
                raise ShapeError(f"{field} shape must match gamma shape {c}")
        if np.any(as_array(self.running_var) < 0):
            raise ShapeError("running_var entries must be >= 0")


def init_batchnorm_state(channels: int, momentum: float = 0.9, epsilon: float = 1e-5,
                         dtype=np.float32) -> BatchNormState:
    """Fresh BN state: gamma 1, beta 0, running stats unset (mean 0, var 1)."""
    one = np.ones(channels, dtype=dtype)
    zero = np.zeros(channels, dtype=dtype)
    return BatchNormState(
        gamma=Tensor(one), beta=Tensor(zero),
        running_mean=Tensor(zero.copy()), running_var=Tensor(one.copy()),
        momentum=momentum, epsilon=epsilon,
    )


# ---------------------------------------------------------------------------
# shape arithmetic


def conv_out_len(length: int, kernel: int, stride: int, padding: str) -> int:
    """Output length: ceil(L/stride) for same, floor((L-k)/stride)+1 for valid."""
    if padding == "same":
        return -(-length // stride)
    if padding == "valid":
        return (length - kernel) // stride + 1
    raise ShapeError(f"padding must be one of {PADDING_MODES}, got {padding!r}")


def _pad_amounts(length, kernel, stride, padding):
    out = conv_out_len(length, kernel, stride, padding)
    if padding == "valid":
        return 0, 0, out
    total = max((out - 1) * stride + kernel - length, 0)
    left = (total + 1) // 2  # left-biased on odd deficit
    return left, total - left, out


def pool_out_len(length: int, kernel: int, stride: int) -> int:
    """Pooling is unpadded: floor((L-k)/stride)+1."""
    return (length - kernel) // stride + 1


def _batch_chunks(n, per_sample_bytes):
    size = max(1, min(n, _MAX_SCRATCH_BYTES // max(per_sample_bytes, 1)))
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


# ---------------------------------------------------------------------------
# 1D convolution


def _windows1d(xp, kernel, stride, out_len):
    # windows[n, c, tau, t] = xp[n, c, t*stride + tau]
    n, c, _ = xp.shape
    sn, sc, sl = xp.strides
    return as_strided(xp, (n, c, kernel, out_len), (sn, sc, sl, sl * stride))


def _common_float(*arrays):
    dtype = np.result_type(*arrays)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        dtype = np.dtype(np.float32)
    return tuple(np.ascontiguousarray(a, dtype=dtype) for a in arrays)


def conv1d_forward_array(x, w, b, stride, padding):
    n, cin, length = x.shape
    cout, win, k = w.shape
    if win != cin:
        raise ShapeError(f"channel mismatch: input has {cin} channels, weights expect {win}")
    left, _, out = _pad_amounts(length, k, stride, padding)
    if out < 1:
        raise ShapeError(
            f"output length < 1: input length {length} too short for "
            f"kernel {k}, stride {stride}, padding {padding}"
        )
    x, w, b = _common_float(x, w, b)
    xph = _kernels.pack_polyphase(x, stride)
    y = np.empty((n, cout, out), dtype=x.dtype)
    _kernels.conv1d_fwd(xph, w, b, stride, left, length, y)
    return y


def conv1d_backward_array(x, w, stride, padding, grad_out):
    n, cin, length = x.shape
    cout, _, k = w.shape
    left, _, out = _pad_amounts(length, k, stride, padding)
    if grad_out.shape != (n, cout, out):
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output {(n, cout, out)}")
    x, w, grad_out = _common_float(x, w, grad_out)
    xph = _kernels.pack_polyphase(x, stride)
    dxph = np.zeros_like(xph)
    _kernels.conv1d_dx(grad_out, w, stride, left, length, dxph)
    gx = _kernels.unpack_polyphase(dxph, stride, length)
    gw = np.empty_like(w)
    _kernels.conv1d_dw(xph, grad_out, stride, left, length, gw)
    gb = grad_out.sum(axis=(0, 2))
    return gx, gw, gb


# ---------------------------------------------------------------------------
# 2D convolution


def _windows2d(xp, kh, kw, stride, oh, ow):
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    return as_strided(
        xp, (n, c, kh, kw, oh, ow), (sn, sc, sh, sw, sh * stride, sw * stride)
    )


def conv2d_forward_array(x, w, b, stride, padding):
    n, cin, h, wd = x.shape
    cout, win, kh, kw = w.shape
    if win != cin:
        raise ShapeError(f"channel mismatch: input has {cin} channels, weights expect {win}")
    top, _, oh = _pad_amounts(h, kh, stride, padding)
    lft, _, ow = _pad_amounts(wd, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"output size < 1: input {h}x{wd} too small for kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding}"
        )
    x, w, b = _common_float(x, w, b)
    if stride != 1:
        return _conv2d_forward_im2col(x, w, b, stride, padding)
    y = np.empty((n, cout, oh, ow), dtype=x.dtype)
    _kernels.conv2d_fwd_s1(x, w, b, top, lft, y)
    return y


def conv2d_backward_array(x, w, stride, padding, grad_out):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    top, _, oh = _pad_amounts(h, kh, stride, padding)
    lft, _, ow = _pad_amounts(wd, kw, stride, padding)
    if grad_out.shape != (n, cout, oh, ow):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} != forward output {(n, cout, oh, ow)}"
        )
    x, w, grad_out = _common_float(x, w, grad_out)
    if stride != 1:
        return _conv2d_backward_im2col(x, w, stride, padding, grad_out)
    gx = np.empty_like(x)
    _kernels.conv2d_dx_s1(grad_out, w, top, lft, gx)
    gw = np.zeros_like(w)
    _kernels.conv2d_dw_s1(x, grad_out, top, lft, gw)
    gb = grad_out.sum(axis=(0, 2, 3))
    return gx, gw, gb


def _conv2d_forward_im2col(x, w, b, stride, padding):
    # reference path for strides the fused kernels do not cover
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    top, bottom, oh = _pad_amounts(h, kh, stride, padding)
    lft, rgt, ow = _pad_amounts(wd, kw, stride, padding)
    pad = top or bottom or lft or rgt
    xp = np.pad(x, ((0, 0), (0, 0), (top, bottom), (lft, rgt))) if pad else x
    w2 = w.reshape(cout, cin * kh * kw)
    y = np.empty((n, cout, oh, ow), dtype=x.dtype)
    per_sample = cin * kh * kw * oh * ow * x.itemsize
    for sl in _batch_chunks(n, per_sample):
        nc = sl.stop - sl.start
        cols = _windows2d(xp[sl], kh, kw, stride, oh, ow).reshape(nc, cin * kh * kw, oh * ow)
        y[sl] = (w2 @ cols).reshape(nc, cout, oh, ow)
    y += b[None, :, None, None]
    return y


def _conv2d_backward_im2col(x, w, stride, padding, grad_out):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    top, bottom, oh = _pad_amounts(h, kh, stride, padding)
    lft, rgt, ow = _pad_amounts(wd, kw, stride, padding)
    pad = top or bottom or lft or rgt
    xp = np.pad(x, ((0, 0), (0, 0), (top, bottom), (lft, rgt))) if pad else x
    w2 = w.reshape(cout, cin * kh * kw)
    gxp = np.zeros_like(xp)
    gw = np.zeros((cout, cin * kh * kw), dtype=x.dtype)
    gb = grad_out.sum(axis=(0, 2, 3))
    per_sample = cin * kh * kw * oh * ow * x.itemsize
    for sl in _batch_chunks(n, per_sample):
        nc = sl.stop - sl.start
        cols = _windows2d(xp[sl], kh, kw, stride, oh, ow).reshape(nc, cin * kh * kw, oh * ow)
        go = grad_out[sl].reshape(nc, cout, oh * ow)
        gw += np.tensordot(go, cols, axes=([0, 2], [0, 2]))
        gcols = (w2.T @ go).reshape(nc, cin, kh, kw, oh, ow)
        for i in range(kh):
            for j in range(kw):
                gxp[sl, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += \
                    gcols[:, :, i, j, :, :]
    gx = gxp[:, :, top : top + h, lft : lft + wd] if pad else gxp
    return gx, gw.reshape(w.shape), gb


# ---------------------------------------------------------------------------
# ReLU


def relu_forward_array(x):
    x = np.ascontiguousarray(x)
    y = np.empty_like(x)
    _kernels.relu_fwd_flat(x.reshape(-1), y.reshape(-1))
    return y


def relu_backward_array(x, grad_out):
    # derivative at exactly 0 is defined as 0
    x = np.ascontiguousarray(x)
    grad_out = np.ascontiguousarray(grad_out, dtype=x.dtype)
    dx = np.empty_like(x)
    _kernels.relu_bwd_flat(x.reshape(-1), grad_out.reshape(-1), dx.reshape(-1))
    return dx


# ---------------------------------------------------------------------------
# max pooling; argmax offsets are stored as uint8 (window sizes stay < 256)


def maxpool1d_forward_array(x, kernel, stride, return_argmax=False):
    n, c, length = x.shape
    if length < kernel:
        raise ShapeError(f"input length {length} shorter than pooling kernel {kernel}")
    if kernel > 255:
        raise ShapeError(f"pooling kernel {kernel} too large")
    out = pool_out_len(length, kernel, stride)
    x = np.ascontiguousarray(x)
    y = np.empty((n, c, out), dtype=x.dtype)
    arg = np.empty((n, c, out), dtype=np.uint8)
    _kernels.maxpool1d_fwd(x, kernel, stride, y, arg)
    if return_argmax:
        return y, arg
    return y


def maxpool1d_backward_array(x_shape, kernel, stride, argmax, grad_out, dtype):
    dx = np.zeros(x_shape, dtype=dtype)
    _kernels.maxpool1d_bwd(argmax, np.ascontiguousarray(grad_out, dtype=dtype),
                           stride, dx)
    return dx


def maxpool2d_forward_array(x, kernel, stride, return_argmax=False):
    kh, kw = kernel
    n, c, h, w = x.shape
    if h < kh or w < kw:
        raise ShapeError(f"input {h}x{w} smaller than pooling kernel {kh}x{kw}")
    if kh * kw > 255:
        raise ShapeError(f"pooling kernel {kh}x{kw} too large")
    oh = pool_out_len(h, kh, stride)
    ow = pool_out_len(w, kw, stride)
    x = np.ascontiguousarray(x)
    y = np.empty((n, c, oh, ow), dtype=x.dtype)
    arg = np.empty((n, c, oh, ow), dtype=np.uint8)
    _kernels.maxpool2d_fwd(x, kh, kw, stride, y, arg)
    if return_argmax:
        return y, arg
    return y


def maxpool2d_backward_array(x_shape, kernel, stride, argmax, grad_out, dtype):
    dx = np.zeros(x_shape, dtype=dtype)
    _kernels.maxpool2d_bwd(argmax, np.ascontiguousarray(grad_out, dtype=dtype),
                           kernel[1], stride, dx)
    return dx


# ---------------------------------------------------------------------------
# global average pooling


def gap_forward_array(x):
    # (n, c, h, w) -> (n, c): per-channel mean over the spatial grid
    return x.mean(axis=(2, 3))


def gap_backward_array(x_shape, grad_out):
    n, c, h, w = x_shape
    g = grad_out / np.asarray(h * w, dtype=grad_out.dtype)
    return np.broadcast_to(g[:, :, None, None], x_shape).copy()


# ---------------------------------------------------------------------------
# batch normalization


def _bn_axes(ndim):
    return (0,) + tuple(range(2, ndim))


def _bn_expand(v, ndim):
    return v.reshape((1, -1) + (1,) * (ndim - 2))


def batchnorm_train_array(x, gamma, beta, epsilon):
    """Normalize per channel over batch and spatial dims.

    Returns (y, batch_mean, batch_var, cache); variance is biased (ddof=0).
    """
    axes = _bn_axes(x.ndim)
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv = 1.0 / np.sqrt(var + np.asarray(epsilon, dtype=x.dtype))
    xhat = (x - _bn_expand(mean, x.ndim)) * _bn_expand(inv, x.ndim)
    y = _bn_expand(gamma, x.ndim) * xhat + _bn_expand(beta, x.ndim)
    return y, mean, var, (xhat, inv, gamma)


def batchnorm_infer_array(x, gamma, beta, running_mean, running_var, epsilon):
    inv = 1.0 / np.sqrt(running_var + np.asarray(epsilon, dtype=x.dtype))
    scale = _bn_expand(gamma * inv, x.ndim)
    shift = _bn_expand(beta - gamma * running_mean * inv, x.ndim)
    return x * scale + shift


def batchnorm_backward_train_array(cache, grad_out):
    xhat, inv, gamma = cache
    axes = _bn_axes(grad_out.ndim)
    m = float(np.prod([grad_out.shape[a] for a in axes]))
    dbeta = grad_out.sum(axis=axes)
    dgamma = (grad_out * xhat).sum(axis=axes)
    dxhat = grad_out * _bn_expand(gamma, grad_out.ndim)
    # dx = inv/m * (m*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
    dx = (_bn_expand(inv, grad_out.ndim) / m) * (
        m * dxhat
        - _bn_expand(dxhat.sum(axis=axes), grad_out.ndim)
        - xhat * _bn_expand((dxhat * xhat).sum(axis=axes), grad_out.ndim)
    )
    return dx.astype(grad_out.dtype, copy=False), dgamma, dbeta


def batchnorm_backward_infer_array(x, gamma, running_mean, running_var, epsilon, grad_out):
    inv = 1.0 / np.sqrt(running_var + np.asarray(epsilon, dtype=x.dtype))
    xhat = (x - _bn_expand(running_mean, x.ndim)) * _bn_expand(inv, x.ndim)
    axes = _bn_axes(x.ndim)
    dbeta = grad_out.sum(axis=axes)
    dgamma = (grad_out * xhat).sum(axis=axes)
    dx = grad_out * _bn_expand(gamma * inv, x.ndim)
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# softmax cross-entropy


def softmax_array(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_array(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_xent_array(logits, labels):
    """Per-sample cross-entropy losses and logit gradients for a (n, k) batch."""
    n = logits.shape[0]
    logp = log_softmax_array(logits)
    losses = -logp[np.arange(n), labels]
    grads = np.exp(logp)
    grads[np.arange(n), labels] -= 1
    return losses, grads


# ---------------------------------------------------------------------------
# public single/batch wrappers


def _with_batch(x, rank):
    a = as_array(x)
    if a.ndim == rank:
        return a[None], True
    if a.ndim == rank + 1:
        return a, False
    raise ShapeError(f"expected rank {rank} or {rank + 1} input, got rank {a.ndim}")


def _maybe_squeeze(y, squeeze):
    return Tensor(y[0]) if squeeze else Tensor(y)


def conv1d_forward(x, p: Conv1DParams) -> Tensor:
    """Convolve a (in_ch, L) map (or an (n, in_ch, L) batch) with p."""
    a, squeeze = _with_batch(x, 2)
    y = conv1d_forward_array(a, as_array(p.weights), as_array(p.bias), p.stride, p.padding)
    return _maybe_squeeze(y, squeeze)


def conv1d_backward(x, p: Conv1DParams, grad_out):
    """Exact gradients of conv1d_forward wrt input, weights, and bias."""
    a, squeeze = _with_batch(x, 2)
    g, _ = _with_batch(grad_out, 2)
    gx, gw, gb = conv1d_backward_array(a, as_array(p.weights), p.stride, p.padding, g)
    return _maybe_squeeze(gx, squeeze), Tensor(gw), Tensor(gb)


def conv2d_forward(x, p: Conv2DParams) -> Tensor:
    a, squeeze = _with_batch(x, 3)
    y = conv2d_forward_array(a, as_array(p.weights), as_array(p.bias), p.stride, p.padding)
    return _maybe_squeeze(y, squeeze)


def conv2d_backward(x, p: Conv2DParams, grad_out):
    a, squeeze = _with_batch(x, 3)
    g, _ = _with_batch(grad_out, 3)
    gx, gw, gb = conv2d_backward_array(a, as_array(p.weights), p.stride, p.padding, g)
    return _maybe_squeeze(gx, squeeze), Tensor(gw), Tensor(gb)


def relu_forward(x) -> Tensor:
    return Tensor(relu_forward_array(as_array(x)))


def relu_backward(x, grad_out) -> Tensor:
    return Tensor(relu_backward_array(as_array(x), as_array(grad_out)))


def maxpool1d_forward(x, kernel: int, stride: int) -> Tensor:
    a, squeeze = _with_batch(x, 2)
    return _maybe_squeeze(maxpool1d_forward_array(a, kernel, stride), squeeze)


def maxpool1d_backward(x, kernel: int, stride: int, grad_out) -> Tensor:
    a, squeeze = _with_batch(x, 2)
    g, _ = _with_batch(grad_out, 2)
    _, arg = maxpool1d_forward_array(a, kernel, stride, return_argmax=True)
    gx = maxpool1d_backward_array(a.shape, kernel, stride, arg, g, a.dtype)
    return _maybe_squeeze(gx, squeeze)


def maxpool2d_forward(x, kernel, stride: int) -> Tensor:
    a, squeeze = _with_batch(x, 3)
    return _maybe_squeeze(maxpool2d_forward_array(a, tuple(kernel), stride), squeeze)


def maxpool2d_backward(x, kernel, stride: int, grad_out) -> Tensor:
    a, squeeze = _with_batch(x, 3)
    g, _ = _with_batch(grad_out, 3)
    _, arg = maxpool2d_forward_array(a, tuple(kernel), stride, return_argmax=True)
    gx = maxpool2d_backward_array(a.shape, tuple(kernel), stride, arg, g, a.dtype)
    return _maybe_squeeze(gx, squeeze)


def gap_forward(a) -> Tensor:
    """Per-channel spatial mean of a (c, h, w) map (or an (n, c, h, w) batch)."""
    arr, squeeze = _with_batch(a, 3)
    return _maybe_squeeze(gap_forward_array(arr), squeeze)


def gap_backward(a, grad_out) -> Tensor:
    arr, squeeze = _with_batch(a, 3)
    g, _ = _with_batch(grad_out, 1)
    return _maybe_squeeze(gap_backward_array(arr.shape, g), squeeze)


def batchnorm_forward(x, state: BatchNormState):
    """Apply BN; returns (y, updated_state).

    Train mode normalizes with batch statistics over batch and spatial dims
    and folds them into the running statistics. Infer mode applies the frozen
    running statistics and requires them to have been set.
    """
    a = as_array(x)
    if a.ndim < 3:
        raise ShapeError(f"batchnorm expects (batch, channels, spatial...), got rank {a.ndim}")
    gamma, beta = as_array(state.gamma), as_array(state.beta)
    if state.mode == "infer":
        if not state.initialized:
            raise ValueError("uninitialized running statistics")
        y = batchnorm_infer_array(
            a, gamma, beta, as_array(state.running_mean), as_array(state.running_var),
            state.epsilon,
        )
        return Tensor(y), state
    y, mean, var, _ = batchnorm_train_array(a, gamma, beta, state.epsilon)
    mom = np.asarray(state.momentum, dtype=a.dtype)
    new_mean = mom * as_array(state.running_mean) + (1 - mom) * mean
    new_var = mom * as_array(state.running_var) + (1 - mom) * var
    new_state = replace(
        state, running_mean=Tensor(new_mean), running_var=Tensor(new_var), initialized=True
    )
    return Tensor(y), new_state


def batchnorm_backward(x, state: BatchNormState, grad_out):
    """Gradients of batchnorm_forward wrt x, gamma, beta (stats recomputed)."""
    a, g = as_array(x), as_array(grad_out)
    gamma, beta = as_array(state.gamma), as_array(state.beta)
    if state.mode == "infer":
        dx, dgamma, dbeta = batchnorm_backward_infer_array(
            a, gamma, as_array(state.running_mean), as_array(state.running_var),
            state.epsilon, g,
        )
    else:
        _, _, _, cache = batchnorm_train_array(a, gamma, beta, state.epsilon)
        dx, dgamma, dbeta = batchnorm_backward_train_array(cache, g)
    return Tensor(dx), Tensor(dgamma), Tensor(dbeta)


def softmax_xent(logits, label: int):
    """Cross-entropy of softmax(logits) against a class index.

    Returns (loss, grad_logits) with grad = softmax(logits) - onehot(label),
    stabilized by max-subtraction.
    """
    a = as_array(logits)
    if a.ndim != 1:
        raise ShapeError(f"softmax_xent expects a logits vector, got rank {a.ndim}")
    if not (0 <= label < a.shape[0]):
        raise ShapeError(f"label {label} out of range for {a.shape[0]} classes")
    losses, grads = softmax_xent_array(a[None], np.asarray([label]))
    return float(losses[0]), Tensor(grads[0])


def softmax(logits) -> Tensor:
    return Tensor(softmax_array(as_array(logits)))
