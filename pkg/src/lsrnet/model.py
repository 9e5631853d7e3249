"""LSR-Net: denoising front end, activation ensemble, and CES feature blocks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, ContractViolation
from .layers import BatchNorm, ChannelAttention, Conv2d, Dense, Module, SpatialAttention, cam_hidden_width
from .tensor import Tensor


@dataclass(frozen=True)
class CDBlockConfig:
    kernel: int
    stride: int
    in_ch: int
    out_ch: int


@dataclass(frozen=True)
class DMConfig:
    blocks: tuple[CDBlockConfig, ...] = (
        CDBlockConfig(3, 2, 1, 8),
        CDBlockConfig(3, 2, 8, 16),
        CDBlockConfig(3, 4, 16, 32),
    )

    @property
    def total_stride(self) -> int:
        return int(np.prod([b.stride for b in self.blocks]))

    @property
    def out_ch(self) -> int:
        return self.blocks[-1].out_ch


@dataclass(frozen=True)
class CESConfig:
    in_ch: int
    out_ch: int
    stride: tuple[int, int]
    left: int | None = None

    @property
    def left_ch(self) -> int:
        return self.in_ch // 2 if self.left is None else self.left

    @property
    def right_ch(self) -> int:
        return self.in_ch - self.left_ch

    @property
    def groups(self) -> int:
        # two input channels per group: C/4 of the block input at a 5:5 split
        return max(1, self.right_ch // 2)

    @property
    def right_out(self) -> int:
        return self.out_ch - self.left_ch

    def validate(self, name: str) -> None:
        if self.left is None and self.in_ch % 4:
            raise ConfigError(name, f"input channels {self.in_ch} must be divisible by 4 for an even split")
        if not 0 < self.left_ch < self.in_ch:
            raise ConfigError(name, f"split point {self.left_ch} outside (0, {self.in_ch})")
        if self.right_ch % self.groups or self.right_out <= 0 or self.right_out % self.groups:
            raise ConfigError(
                name, f"branch widths {self.right_ch}->{self.right_out} not divisible by {self.groups} groups"
            )
        if self.out_ch % 2:
            raise ConfigError(name, "output channels must be even for a 2-group shuffle")


DEFAULT_CES = (
    CESConfig(16, 32, (2, 2)),
    CESConfig(32, 64, (2, 2)),
    CESConfig(64, 64, (1, 2)),
)


@dataclass(frozen=True)
class LSRNetConfig:
    input_length: int = 4096
    classes: int = 3
    dm: DMConfig = field(default_factory=DMConfig)
    stem_out: int = 16
    ces: tuple[CESConfig, ...] = DEFAULT_CES
    cam_reduction: int = 4
    sam_kernel: int = 3


@dataclass(frozen=True)
class TraceEntry:
    name: str
    shape: tuple[int, ...]
    params: int


def _bn_params(c: int) -> int:
    return 2 * c


def _divide(name: str, extent: int, stride: int) -> int:
    if extent % stride:
        raise ConfigError(name, f"extent {extent} not divisible by stride {stride}")
    return extent // stride


def shape_trace(cfg: LSRNetConfig) -> list[TraceEntry]:
    """Per-layer output shape (batch omitted) and parameter count.

    Computed from the configuration alone, without building tensors; raises
    :class:`ConfigError` naming the first layer whose stride does not divide
    its input extent.
    """
    if cfg.classes < 1:
        raise ConfigError("fc", "need at least one class")
    entries: list[TraceEntry] = []
    length, ch = cfg.input_length, 1
    for i, blk in enumerate(cfg.dm.blocks, start=1):
        name = f"cd{i}"
        if blk.in_ch != ch:
            raise ConfigError(name, f"expects {blk.in_ch} input channels, got {ch}")
        if blk.kernel % 2 == 0:
            raise ConfigError(name, "kernel must be odd")
        length = _divide(name, length, blk.stride)
        ch = blk.out_ch
        entries.append(TraceEntry(name, (ch, length), blk.kernel * blk.in_ch * blk.out_ch + _bn_params(ch)))

    h, w = ch, length
    entries.append(TraceEntry("fem", (3, h, w), 0))

    h, w = _divide("stem", h, 2), _divide("stem", w, 2)
    entries.append(TraceEntry("stem", (cfg.stem_out, h, w), 9 * 3 * cfg.stem_out + _bn_params(cfg.stem_out)))
    h, w = _divide("ap", h, 2), _divide("ap", w, 2)
    ch = cfg.stem_out
    entries.append(TraceEntry("ap", (ch, h, w), 0))

    sam = cfg.sam_kernel**2 + 1
    for i, ces in enumerate(cfg.ces, start=1):
        name = f"ces{i}"
        if ces.in_ch != ch:
            raise ConfigError(name, f"expects {ces.in_ch} input channels, got {ch}")
        ces.validate(name)
        sh, sw = ces.stride
        h, w = _divide(name, h, sh), _divide(name, w, sw)
        r, ro, lc, g = ces.right_ch, ces.right_out, ces.left_ch, ces.groups
        n = (
            9 * (r // g) * r            # grouped 3x3 conv
            + _bn_params(r)
            + sam                       # right spatial gate
            + (r // g) * ro             # grouped pointwise conv
            + _bn_params(ro)
            + 2 * ro * cam_hidden_width(ro, cfg.cam_reduction)
            + sam                       # left spatial gate
            + 2 * lc * cam_hidden_width(lc, cfg.cam_reduction)
        )
        ch = ces.out_ch
        entries.append(TraceEntry(name, (ch, h, w), n))

    entries.append(TraceEntry("gap", (ch,), 0))
    entries.append(TraceEntry("fc", (cfg.classes,), ch * cfg.classes + cfg.classes))
    return entries


class CDBlock(Module):
    """Conv1D (as a 1 x k kernel) -> BN -> ReLU6."""

    def __init__(self, spec: CDBlockConfig, rng: np.random.Generator) -> None:
        self.spec = spec
        self.conv = Conv2d(
            spec.in_ch, spec.out_ch, (1, spec.kernel), stride=(1, spec.stride),
            padding=(0, spec.kernel // 2), bias=False, rng=rng,
        )
        self.bn = BatchNorm(spec.out_ch)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu6(self.bn(self.conv(x)))


class DenoisingModule(Module):
    def __init__(self, cfg: DMConfig, rng: np.random.Generator) -> None:
        self.cfg = cfg
        self.blocks = [CDBlock(b, rng) for b in cfg.blocks]

    def forward(self, x: Tensor) -> Tensor:
        """``B x 1 x N`` -> ``B x C x N/stride``."""
        if x.ndim != 3 or x.shape[1] != self.cfg.blocks[0].in_ch:
            raise ContractViolation(f"denoising module expects B x 1 x N, got {x.shape}")
        n = x.shape[2]
        if n % self.cfg.total_stride:
            raise ContractViolation(f"signal length {n} not divisible by {self.cfg.total_stride}")
        h = x.reshape(x.shape[0], x.shape[1], 1, n)
        for block in self.blocks:
            h = block(h)
        return h.reshape(h.shape[0], h.shape[1], h.shape[3])


def fem_forward(h: Tensor) -> Tensor:
    """Expand ``B x C x T`` to one ``C x T`` plane and stack ReLU6, HT, HS of it."""
    if h.ndim != 3:
        raise ContractViolation(f"feature enhancement expects B x C x T, got {h.shape}")
    plane = h.reshape(h.shape[0], 1, h.shape[1], h.shape[2])
    return ops.concat([ops.relu6(plane), ops.hardtanh(plane), ops.hardswish(plane)], axis=1)


class CESBlock(Module):
    """Channel split, gated grouped convs on the right half, gated identity on the left, shuffle."""

    def __init__(self, cfg: CESConfig, rng: np.random.Generator, reduction: int = 4, sam_kernel: int = 3) -> None:
        cfg.validate("ces")
        self.cfg = cfg
        r, ro, g = cfg.right_ch, cfg.right_out, cfg.groups
        self.gconv = Conv2d(r, r, 3, stride=cfg.stride, padding=1, groups=g, bias=False, rng=rng)
        self.bn1 = BatchNorm(r)
        self.sam_right = SpatialAttention(sam_kernel, rng=rng)
        self.gpconv = Conv2d(r, ro, 1, groups=g, bias=False, rng=rng)
        self.bn2 = BatchNorm(ro)
        self.cam_right = ChannelAttention(ro, reduction, rng=rng)
        self.sam_left = SpatialAttention(sam_kernel, rng=rng)
        self.cam_left = ChannelAttention(cfg.left_ch, reduction, rng=rng)

    @property
    def strided(self) -> bool:
        return self.cfg.stride != (1, 1)

    def branches(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Right and left branch outputs before concatenation."""
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_ch:
            raise ContractViolation(f"CES block for {cfg.in_ch} channels got {x.shape}")
        left, right = ops.channel_split(x, cfg.left_ch)

        r = self.sam_right(ops.hardswish(self.bn1(self.gconv(right))))
        r = self.cam_right(self.bn2(self.gpconv(r)))
        skip = ops.avg_pool2d(right, cfg.stride) if self.strided else right
        if skip.shape[2:] != r.shape[2:]:
            raise ContractViolation(f"stride {cfg.stride} does not divide input {x.shape[2:]}")
        r = r + ops.pad_channels(skip, cfg.right_out)

        l = self.cam_left(self.sam_left(left))
        if self.strided:
            l = ops.avg_pool2d(l, cfg.stride)
        return r, l

    def forward(self, x: Tensor) -> Tensor:
        r, l = self.branches(x)
        return ops.channel_shuffle(ops.concat([r, l], axis=1), 2)


class LSRNet(Module):
    def __init__(self, cfg: LSRNetConfig | None = None, seed: int = 0) -> None:
        cfg = cfg or LSRNetConfig()
        self.trace = shape_trace(cfg)
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.dm = DenoisingModule(cfg.dm, rng)
        self.stem = Conv2d(3, cfg.stem_out, 3, stride=2, padding=1, bias=False, rng=rng)
        self.stem_bn = BatchNorm(cfg.stem_out)
        self.ces = [CESBlock(c, rng, cfg.cam_reduction, cfg.sam_kernel) for c in cfg.ces]
        self.fc = Dense(cfg.ces[-1].out_ch, cfg.classes, rng=rng)

    def features(self, x0: Tensor) -> list[tuple[str, Tensor]]:
        """Run the network, returning every stage output in execution order."""
        if x0.ndim != 3 or x0.shape[1:] != (1, self.cfg.input_length):
            raise ContractViolation(f"expected B x 1 x {self.cfg.input_length}, got {x0.shape}")
        stages = []
        h = self.dm(x0)
        stages.append(("dm", h))
        f = fem_forward(h)
        stages.append(("fem", f))
        f = ops.relu6(self.stem_bn(self.stem(f)))
        stages.append(("stem", f))
        f = ops.avg_pool2d(f, 2, 2)
        stages.append(("ap", f))
        for i, block in enumerate(self.ces, start=1):
            f = block(f)
            stages.append((f"ces{i}", f))
        v = ops.global_avg_pool(f)
        stages.append(("gap", v))
        logits = self.fc(v)
        stages.append(("fc", logits))
        stages.append(("softmax", ops.softmax(logits, axis=1)))
        return stages

    def forward(self, x0: Tensor) -> Tensor:
        """Class probabilities, ``B x O``."""
        return self.features(x0)[-1][1]

    @property
    def cd1_kernel(self) -> Tensor:
        return self.dm.blocks[0].conv.weight


def dm_forward(model: LSRNet, x0: Tensor) -> Tensor:
    return model.dm(x0)


def ces_forward(block: CESBlock, x: Tensor) -> Tensor:
    return block(x)


def lsrnet_forward(model: LSRNet, x0: Tensor, mode: str = "eval") -> Tensor:
    if mode not in ("train", "eval"):
        raise ContractViolation(f"mode must be 'train' or 'eval', got {mode!r}")
    model.train(mode == "train")
    return model(x0)
