"""Stateful layers: convolution, batch norm, dense, and the attention gates."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .errors import ContractViolation
from .tensor import Tensor


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """He-style uniform init, bound ``sqrt(6 / fan_in)``."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Minimal container with ordered parameter and buffer enumeration.

    Parameters are attributes holding a grad-tracking :class:`Tensor`;
    buffers are numpy arrays listed in ``_buffers``; child modules are
    attributes holding a :class:`Module` or a list of them. Enumeration
    follows attribute assignment order, so names are stable.
    """

    _buffers: tuple[str, ...] = ()
    training: bool = True

    def children(self) -> Iterator[tuple[str, Module]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, list) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise ContractViolation(f"state mismatch: missing={missing} unexpected={extra}")
        for name, value in state.items():
            target = params[name].data if name in params else buffers[name]
            if np.shape(value) != target.shape:
                raise ContractViolation(f"{name}: shape {np.shape(value)} != {target.shape}")
        for name, value in state.items():
            if name in params:
                params[name].data = np.array(value, dtype=np.float64)
            else:
                buffers[name][...] = value

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Conv2d(Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel,
        stride=1,
        padding=0,
        groups: int = 1,
        bias: bool = True,
        rng: np.random.Generator | None = None,
    ) -> None:
        if in_ch % groups or out_ch % groups:
            raise ContractViolation(f"channels {in_ch}->{out_ch} not divisible by groups={groups}")
        kh, kw = ops._pair(kernel)
        self.in_ch, self.out_ch, self.groups = in_ch, out_ch, groups
        self.kernel = (kh, kw)
        self.stride = ops._pair(stride)
        self.padding = ops._pair(padding)
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = (in_ch // groups) * kh * kw
        self.weight = parameter(uniform_init(rng, (out_ch, in_ch // groups, kh, kw), fan_in))
        self.bias = parameter(np.zeros(out_ch)) if bias else None

    def output_shape(self, h: int, w: int) -> tuple[int, int]:
        return (
            ops.conv_output_size(h, self.kernel[0], self.stride[0], self.padding[0]),
            ops.conv_output_size(w, self.kernel[1], self.stride[1], self.padding[1]),
        )

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class BatchNorm(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5) -> None:
        if not 0.0 < momentum < 1.0 or eps <= 0.0:
            raise ContractViolation("batchnorm needs momentum in (0, 1) and eps > 0")
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ContractViolation(f"batchnorm for {self.channels} channels got {x.shape}")
        return ops.batchnorm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, bias: bool = True, rng=None) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = parameter(uniform_init(rng, (in_features, out_features), in_features))
        self.bias = parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.dense(x, self.weight, self.bias)


def cam_hidden_width(channels: int, reduction: int) -> int:
    return max(1, channels // reduction)


class ChannelAttention(Module):
    """Squeeze-excitation gate: GAP -> fc1 -> ReLU6 -> fc2 -> hard sigmoid."""

    def __init__(self, channels: int, reduction: int = 4, rng=None) -> None:
        if channels < 1 or reduction < 1:
            raise ContractViolation("channel attention needs positive channels and reduction")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels = channels
        self.reduction = reduction
        hidden = cam_hidden_width(channels, reduction)
        self.fc1 = parameter(uniform_init(rng, (channels, hidden), channels))
        self.fc2 = parameter(uniform_init(rng, (hidden, channels), hidden))

    @property
    def hidden(self) -> int:
        return self.fc1.shape[1]

    def scores(self, x: Tensor) -> Tensor:
        z = ops.relu6(ops.dense(ops.global_avg_pool(x), self.fc1))
        return ops.hardsigmoid(ops.dense(z, self.fc2))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ContractViolation(f"channel attention for {self.channels} channels got {x.shape}")
        s = self.scores(x)
        return x * s.reshape(s.shape[0], self.channels, 1, 1)


class SpatialAttention(Module):
    """Spatial gate: channel mean -> 1->1 conv -> hard sigmoid."""

    def __init__(self, kernel: int = 3, rng=None) -> None:
        if kernel < 1 or kernel % 2 == 0:
            raise ContractViolation("spatial attention kernel must be odd")
        self.conv = Conv2d(1, 1, kernel, stride=1, padding=kernel // 2, rng=rng)

    def scores(self, x: Tensor) -> Tensor:
        return ops.hardsigmoid(self.conv(x.mean(axis=1, keepdims=True)))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ContractViolation(f"spatial attention expects 4D input, got {x.shape}")
        return x * self.scores(x)
