"""Differentiable kernels on NCHW tensors.

Convolutions gather sliding windows into a ``B x G x K x HW`` column array
and run one batched matmul, which lands directly in NCHW order. One-dimensional signals are carried as ``B x C x 1 x N``
maps with ``1 x k`` kernels.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractViolation
from .tensor import Tensor

__all__ = [
    "conv2d",
    "conv_output_size",
    "avg_pool2d",
    "global_avg_pool",
    "dense",
    "relu6",
    "hardtanh",
    "hardswish",
    "hardsigmoid",
    "softmax",
    "apply_activation",
    "batchnorm",
    "channel_split",
    "concat",
    "channel_shuffle",
    "shuffle_permutation",
    "pad_channels",
    "cross_entropy",
]


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _scatter_windows(
    gwin: np.ndarray, padded_shape: tuple[int, ...], stride: tuple[int, int]
) -> np.ndarray:
    """Adjoint of window extraction.

    ``gwin`` is ``B x C x kH x kW x Ho x Wo``; each kernel offset is added
    back onto the strided positions it was read from.
    """
    out = np.zeros(padded_shape)
    _, _, kh, kw, ho, wo = gwin.shape
    sh, sw = stride
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw] += gwin[:, :, i, j]
    return out


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride=1,
    padding=0,
    groups: int = 1,
) -> Tensor:
    """Grouped 2D cross-correlation.

    ``x`` is ``B x M x H x W``; ``weight`` is ``N x M/groups x kH x kW``.
    Output extents follow ``floor((H + 2p - k) / s) + 1``.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ContractViolation("conv2d expects 4D input and 4D kernel")
    stride, padding = _pair(stride), _pair(padding)
    if min(stride) < 1 or min(padding) < 0 or groups < 1:
        raise ContractViolation(f"bad conv geometry stride={stride} padding={padding} groups={groups}")
    b, m, h, w = x.shape
    n, cg, kh, kw = weight.shape
    if m % groups or n % groups:
        raise ContractViolation(f"channels {m}->{n} not divisible by groups={groups}")
    if cg != m // groups:
        raise ContractViolation(f"kernel expects {cg * groups} input channels, got {m}")
    if h + 2 * padding[0] < kh or w + 2 * padding[1] < kw:
        raise ContractViolation(f"kernel {kh}x{kw} larger than padded input {h}x{w}")
    if bias is not None and bias.shape != (n,):
        raise ContractViolation(f"bias shape {bias.shape} != ({n},)")

    ph, pw = padding
    sh, sw = stride
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    g, og, k = groups, n // groups, cg * kh * kw
    if kh == kw == 1:
        cols = xp[:, :, ::sh, ::sw].reshape(b, g, k, ho * wo)
    else:
        # B x M x kH x kW x Ho x Wo, then one copy into the column layout
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, g, k, ho * wo)
    wmat = weight.data.reshape(g, og, k)
    out = np.matmul(wmat, cols).reshape(b, n, ho, wo)
    if bias is not None:
        out += bias.data[:, None, None]

    def backward(gout):
        go = gout.reshape(b, g, og, ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            gcols = np.matmul(wmat.transpose(0, 2, 1), go).reshape(b, m, kh, kw, ho, wo)
            gxp = _scatter_windows(gcols, xp.shape, stride)
            gx = gxp[:, :, ph : ph + h, pw : pw + w] if ph or pw else gxp
        if weight.requires_grad:
            gw = np.einsum("bgoh,bgkh->gok", go, cols, optimize=True).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = gout.sum(axis=(0, 2, 3))
        return (gx, gw, gb)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor._result(out, parents, backward, "conv2d")


def avg_pool2d(x: Tensor, kernel, stride=None) -> Tensor:
    """Mean over ``kernel`` windows, no padding."""
    if x.ndim != 4:
        raise ContractViolation("avg_pool2d expects a 4D input")
    kernel = _pair(kernel)
    stride = kernel if stride is None else _pair(stride)
    b, c, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    if h < kh or w < kw:
        raise ContractViolation(f"pool window {kernel} larger than input {h}x{w}")
    area = kh * kw
    ho, wo = (h - kh) // sh + 1, (w - kw) // sw + 1
    shape = x.shape

    if kernel == stride and h % kh == 0 and w % kw == 0:
        # non-overlapping tiles: a reshape exposes them directly
        a = x.data
        out = a[:, :, 0::kh, 0::kw].copy()
        for i in range(kh):
            for j in range(kw):
                if i or j:
                    out += a[:, :, i::kh, j::kw]
        out /= area

        def backward(gout):
            gx = np.empty(shape)
            gx.reshape(b, c, ho, kh, wo, kw)[...] = (gout / area)[:, :, :, None, :, None]
            return (gx,)

        return Tensor._result(out, (x,), backward, "avg_pool2d")

    win = sliding_window_view(x.data, kernel, axis=(2, 3))[:, :, ::sh, ::sw]
    out = win.mean(axis=(4, 5))

    def backward_overlap(gout):
        gwin = np.broadcast_to((gout / area)[:, :, None, None], (b, c, kh, kw, ho, wo))
        return (_scatter_windows(gwin, shape, stride),)

    return Tensor._result(out, (x,), backward_overlap, "avg_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel mean over all spatial positions: ``B x C x H x W -> B x C``."""
    if x.ndim != 4:
        raise ContractViolation("global_avg_pool expects a 4D input")
    return x.mean(axis=(2, 3))


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight + bias`` with ``weight`` shaped ``F x O``."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ContractViolation(f"dense shape mismatch {x.shape} @ {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ContractViolation(f"bias shape {bias.shape} != ({weight.shape[1]},)")
    a, wm = x.data, weight.data
    out = a @ wm
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gb = g.sum(axis=0) if bias is not None else None
        return (g @ wm.T, a.T @ g, gb)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor._result(out, parents, backward, "dense")


# -- activations --------------------------------------------------------


def _pointwise(x: Tensor, value: np.ndarray, slope: np.ndarray, op: str) -> Tensor:
    return Tensor._result(value, (x,), lambda g: (g * slope,), op)


def _inside(a: np.ndarray, lo: float, hi: float) -> np.ndarray:
    mask = a > lo
    mask &= a < hi
    return mask


def _clamp(a: np.ndarray, lo: float, hi: float) -> np.ndarray:
    out = np.maximum(a, lo)
    np.minimum(out, hi, out=out)
    return out


def relu6(x: Tensor) -> Tensor:
    a = x.data
    return _pointwise(x, _clamp(a, 0.0, 6.0), _inside(a, 0.0, 6.0), "relu6")


def hardtanh(x: Tensor) -> Tensor:
    a = x.data
    return _pointwise(x, _clamp(a, -1.0, 1.0), _inside(a, -1.0, 1.0), "hardtanh")


def hardswish(x: Tensor) -> Tensor:
    """``x * ReLU6(x + 3) / 6``."""
    a = x.data
    gate = a + 3.0
    np.maximum(gate, 0.0, out=gate)
    np.minimum(gate, 6.0, out=gate)
    gate /= 6.0
    value = a * gate
    slope = a / 3.0
    slope += 0.5
    np.copyto(slope, 0.0, where=a <= -3.0)
    np.copyto(slope, 1.0, where=a >= 3.0)
    return _pointwise(x, value, slope, "hardswish")


def hardsigmoid(x: Tensor) -> Tensor:
    """``max(0, min(1, (x + 1) / 2))``."""
    a = x.data
    value = _clamp((a + 1.0) / 2.0, 0.0, 1.0)
    slope = _inside(a, -1.0, 1.0) * 0.5
    return _pointwise(x, value, slope, "hardsigmoid")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    a = x.data
    e = np.exp(a - a.max(axis=axis, keepdims=True))
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return Tensor._result(p, (x,), backward, "softmax")


_ACTIVATIONS = {
    "relu6": relu6,
    "ht": hardtanh,
    "hardtanh": hardtanh,
    "hs": hardswish,
    "hardswish": hardswish,
    "hardsigmoid": hardsigmoid,
}


def apply_activation(kind: str, x: Tensor, axis: int | None = None) -> Tensor:
    """Dispatch by name. ``softmax`` needs the class ``axis``."""
    key = kind.lower()
    if key == "softmax":
        if axis is None:
            raise ContractViolation("softmax needs a class axis")
        return softmax(x, axis)
    try:
        return _ACTIVATIONS[key](x)
    except KeyError:
        raise ContractViolation(f"unknown activation {kind!r}") from None


# -- normalization ------------------------------------------------------


def _channel_sum(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Sum over axes (0, 2, 3) of ``a`` (or of ``a * b``) without a temporary."""
    a3 = a.reshape(a.shape[0], a.shape[1], -1)
    if b is None:
        return np.einsum("bcn->c", a3)
    return np.einsum("bcn,bcn->c", a3, b.reshape(a3.shape))


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over axes (0, 2, 3).

    In training mode ``running_mean``/``running_var`` are updated in place
    with an exponential moving average (unbiased batch variance).
    """
    if x.ndim != 4:
        raise ContractViolation("batchnorm expects a 4D input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ContractViolation(f"batchnorm parameters do not match {c} channels")
    a = x.data
    shape = (1, c, 1, 1)
    count = a.shape[0] * a.shape[2] * a.shape[3]
    if training:
        if count < 2:
            raise ContractViolation("training-mode batchnorm needs at least 2 values per channel")
        mean = _channel_sum(a) / count
        xhat = a - mean.reshape(shape)
        var = _channel_sum(xhat, xhat) / count
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * count / (count - 1)
    else:
        mean, var = running_mean, running_var
        xhat = a - mean.reshape(shape)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat *= inv_std.reshape(shape)
    out = xhat * gamma.data.reshape(shape)
    out += beta.data.reshape(shape)
    scale = (gamma.data * inv_std).reshape(shape)

    def backward(g):
        gg = _channel_sum(g, xhat)
        gb = _channel_sum(g)
        if training:
            gx = xhat * (-gg / count).reshape(shape)
            gx += g
            gx -= (gb / count).reshape(shape)
            gx *= scale
        else:
            gx = g * scale
        return (gx, gg, gb)

    return Tensor._result(out, (x, gamma, beta), backward, "batchnorm")


# -- channel structure ---------------------------------------------------


def _channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return Tensor._result(x.data[:, start:stop].copy(), (x,), backward, "channel_slice")


def channel_split(x: Tensor, left: int) -> tuple[Tensor, Tensor]:
    """Split channels into ``[0, left)`` and ``[left, C)``."""
    c = x.shape[1]
    if not 0 < left < c:
        raise ContractViolation(f"split point {left} outside (0, {c})")
    return _channel_slice(x, 0, left), _channel_slice(x, left, c)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    arrays = [t.data for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError as exc:
        raise ContractViolation(str(exc)) from None
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._result(out, tuple(tensors), backward, "concat")


def shuffle_permutation(channels: int, groups: int) -> np.ndarray:
    """``perm[j]`` is the source channel placed at output position ``j``."""
    if groups < 1 or channels % groups:
        raise ContractViolation(f"{channels} channels not divisible into {groups} groups")
    return np.arange(channels).reshape(groups, channels // groups).T.reshape(-1)


def channel_shuffle(x: Tensor, groups: int) -> Tensor:
    """Reshape channels to ``(groups, C/groups)``, transpose, flatten."""
    perm = shuffle_permutation(x.shape[1], groups)
    inverse = np.argsort(perm)
    return Tensor._result(
        x.data[:, perm], (x,), lambda g: (g[:, inverse],), "channel_shuffle"
    )


def pad_channels(x: Tensor, channels: int) -> Tensor:
    """Append zero channels up to ``channels``."""
    c = x.shape[1]
    if channels < c:
        raise ContractViolation(f"cannot pad {c} channels down to {channels}")
    if channels == c:
        return x
    out = np.zeros((x.shape[0], channels) + x.shape[2:])
    out[:, :c] = x.data
    return Tensor._result(out, (x,), lambda g: (g[:, :c],), "pad_channels")


# -- loss ---------------------------------------------------------------


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``probs`` (``B x O``).

    When ``probs`` came straight from :func:`softmax` the loss is computed
    from the logits with a log-sum-exp, and the gradient flows to the logits
    as ``(softmax - onehot) / B``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ContractViolation(f"labels {labels.shape} do not match probabilities {probs.shape}")
    bsz, classes = probs.shape
    if labels.min() < 0 or labels.max() >= classes:
        raise ContractViolation(f"label outside [0, {classes})")
    rows = np.arange(bsz)

    if probs.op == "softmax" and probs._parents:
        logits = probs._parents[0]
        z = logits.data
        shifted = z - z.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        p = probs.data

        def backward(g):
            d = p.copy()
            d[rows, labels] -= 1.0
            return (g * d / bsz,)

        return Tensor._result(np.asarray(-logp[rows, labels].mean()), (logits,), backward, "cross_entropy")

    p = probs.data
    tiny = np.finfo(np.float64).tiny
    picked = np.maximum(p[rows, labels], tiny)

    def backward_probs(g):
        d = np.zeros_like(p)
        d[rows, labels] = -1.0 / (picked * bsz)
        return (g * d,)

    return Tensor._result(np.asarray(-np.log(picked).mean()), (probs,), backward_probs, "cross_entropy")
