"""Static FLOPs / MAC / parameter accounting.

Conventions: one multiply-accumulate is one FLOP. Convolution FLOPs are
``kH*kW * (M/g) * N * Ho*Wo`` and MAC is ``kH*kW * Ho*Wo * (M + N) + M*N/g``,
the square-map forms generalised with ``D_F^2 -> Ho*Wo``. Batch norm costs
2 FLOPs per element; dense and attention FC layers count their
multiply-accumulates; pooling, activations, and elementwise gating are not
counted. For non-convolution rows MAC is input elements + output elements
+ parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .checkpoint import save_checkpoint
from .errors import ContractViolation
from .layers import BatchNorm, ChannelAttention, Conv2d, Dense, Module, SpatialAttention
from .model import LSRNet, LSRNetConfig

CONVENTIONS = (
    "FLOPs: 1 multiply-accumulate = 1; conv kH*kW*(M/g)*N*Ho*Wo; BN 2/element; "
    "pooling, activations and gating excluded. "
    "MAC: conv kH*kW*Ho*Wo*(M+N) + M*N/g; other layers in + out + params."
)


@dataclass(frozen=True)
class ConvCostSpec:
    """Square-map convolution: kernel ``d_k``, output map ``d_f x d_f``."""

    d_k: int
    d_f: int
    m: int
    n: int
    g: int = 1

    def __post_init__(self) -> None:
        if min(self.d_k, self.d_f, self.m, self.n, self.g) < 1:
            raise ContractViolation("cost spec fields must be positive")
        if self.m % self.g or self.n % self.g:
            raise ContractViolation(f"M={self.m} and N={self.n} must be divisible by g={self.g}")


def conv_flops(kh: int, kw: int, ho: int, wo: int, m: int, n: int, g: int) -> int:
    return kh * kw * (m // g) * n * ho * wo


def conv_mac(kh: int, kw: int, ho: int, wo: int, m: int, n: int, g: int) -> int:
    return kh * kw * ho * wo * (m + n) + m * n // g


def flops_conv(s: ConvCostSpec) -> int:
    return conv_flops(s.d_k, s.d_k, s.d_f, s.d_f, s.m, s.n, s.g)


def mac_conv(s: ConvCostSpec) -> int:
    return conv_mac(s.d_k, s.d_k, s.d_f, s.d_f, s.m, s.n, s.g)


def mac_flops_ratio(s: ConvCostSpec) -> float:
    return mac_conv(s) / flops_conv(s)


def ratio_dsconv_conv(d_k: int, n: int) -> Fraction:
    """Depthwise-separable over standard conv cost: ``1/N + 1/D_K^2``."""
    if d_k < 1 or n < 1:
        raise ContractViolation("D_K and N must be positive")
    return Fraction(1, n) + Fraction(1, d_k * d_k)


def dsconv_flops(d_k: int, d_f: int, m: int, n: int) -> int:
    depthwise = flops_conv(ConvCostSpec(d_k, d_f, m, m, m))
    pointwise = flops_conv(ConvCostSpec(1, d_f, m, n, 1))
    return depthwise + pointwise


def ratio_gsconv_dsconv(s: ConvCostSpec) -> Fraction:
    """Grouped 3x3 (M->M) plus grouped pointwise (M->N) over depthwise-separable FLOPs."""
    d_k2, d_f2 = s.d_k * s.d_k, s.d_f * s.d_f
    grouped = Fraction(d_k2 * s.m * s.m * d_f2, s.g) + Fraction(s.m * s.n * d_f2, s.g)
    return grouped / (d_k2 * s.m * d_f2 + s.m * s.n * d_f2)


@dataclass(frozen=True)
class CostRow:
    name: str
    flops: int
    mac: int
    params: int


@dataclass
class ComplexityReport:
    rows: list[CostRow]
    model_size_bytes: int

    @property
    def total_flops(self) -> int:
        return sum(r.flops for r in self.rows)

    @property
    def total_mac(self) -> int:
        return sum(r.mac for r in self.rows)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    def to_table(self) -> str:
        width = max(len(r.name) for r in self.rows + [CostRow("total", 0, 0, 0)])
        lines = [f"# {CONVENTIONS}", f"{'layer':<{width}}  {'FLOPs':>12}  {'MAC':>12}  {'params':>8}"]
        for r in self.rows:
            lines.append(f"{r.name:<{width}}  {r.flops:>12,}  {r.mac:>12,}  {r.params:>8,}")
        lines.append(f"{'total':<{width}}  {self.total_flops:>12,}  {self.total_mac:>12,}  {self.total_params:>8,}")
        lines.append(f"model size: {self.model_size_bytes:,} bytes ({self.model_size_bytes / 1024:.2f} KiB)")
        return "\n".join(lines)

    def to_tsv(self) -> str:
        rows = [f"{r.name}\t{r.flops}\t{r.mac}\t{r.params}" for r in self.rows]
        rows.append(f"total\t{self.total_flops}\t{self.total_mac}\t{self.total_params}")
        return "\n".join(rows)


def _nparams(module: Module) -> int:
    return sum(p.size for p in module.parameters())


def _conv_row(name: str, conv: Conv2d, shape: tuple[int, int, int]) -> tuple[CostRow, tuple[int, int, int]]:
    c, h, w = shape
    if c != conv.in_ch:
        raise ContractViolation(f"{name}: expects {conv.in_ch} channels, got {c}")
    ho, wo = conv.output_shape(h, w)
    kh, kw = conv.kernel
    flops = conv_flops(kh, kw, ho, wo, conv.in_ch, conv.out_ch, conv.groups)
    mac = conv_mac(kh, kw, ho, wo, conv.in_ch, conv.out_ch, conv.groups)
    return CostRow(name, flops, mac, _nparams(conv)), (conv.out_ch, ho, wo)


def _bn_row(name: str, bn: BatchNorm, shape: tuple[int, int, int]) -> CostRow:
    elems = shape[0] * shape[1] * shape[2]
    n = _nparams(bn)
    return CostRow(name, 2 * elems, 2 * elems + n, n)


def _cam_row(name: str, cam: ChannelAttention, shape: tuple[int, int, int]) -> CostRow:
    c, hid = cam.channels, cam.hidden
    n = _nparams(cam)
    return CostRow(name, 2 * c * hid, c + hid + c + n, n)


def _sam_row(name: str, sam: SpatialAttention, shape: tuple[int, int, int]) -> CostRow:
    _, h, w = shape
    row, _ = _conv_row(name, sam.conv, (1, h, w))
    return row


def _dense_row(name: str, fc: Dense) -> CostRow:
    f, o = fc.weight.shape
    n = _nparams(fc)
    return CostRow(name, f * o, f + o + n, n)


def model_rows(model: LSRNet) -> list[CostRow]:
    """Per-layer costs in execution order, tracking shapes layer by layer."""
    rows: list[CostRow] = []
    shape = (1, 1, model.cfg.input_length)
    for i, block in enumerate(model.dm.blocks, start=1):
        row, shape = _conv_row(f"cd{i}.conv", block.conv, shape)
        rows += [row, _bn_row(f"cd{i}.bn", block.bn, shape)]
    c, _, t = shape
    shape = (3, c, t)
    row, shape = _conv_row("stem.conv", model.stem, shape)
    rows += [row, _bn_row("stem.bn", model.stem_bn, shape)]
    shape = (shape[0], shape[1] // 2, shape[2] // 2)
    for i, block in enumerate(model.ces, start=1):
        p = f"ces{i}"
        cfg = block.cfg
        _, h, w = shape
        right = (cfg.right_ch, h, w)
        left = (cfg.left_ch, h, w)
        row, right = _conv_row(f"{p}.gconv", block.gconv, right)
        rows += [row, _bn_row(f"{p}.bn1", block.bn1, right), _sam_row(f"{p}.sam_right", block.sam_right, right)]
        row, right = _conv_row(f"{p}.gpconv", block.gpconv, right)
        rows += [row, _bn_row(f"{p}.bn2", block.bn2, right), _cam_row(f"{p}.cam_right", block.cam_right, right)]
        rows += [_sam_row(f"{p}.sam_left", block.sam_left, left), _cam_row(f"{p}.cam_left", block.cam_left, left)]
        shape = (cfg.out_ch, right[1], right[2])
    rows.append(_dense_row("fc", model.fc))
    return rows


def analyze_model(target: LSRNet | LSRNetConfig | None = None) -> ComplexityReport:
    model = target if isinstance(target, LSRNet) else LSRNet(target)
    return ComplexityReport(model_rows(model), len(save_checkpoint(model)))


def analyze_layers(layers: list[tuple[str, Conv2d, tuple[int, int, int]]]) -> ComplexityReport:
    """Report for a bare list of ``(name, conv, input CHW)`` layers; size counts parameters only."""
    rows = [_conv_row(name, conv, shape)[0] for name, conv, shape in layers]
    return ComplexityReport(rows, 4 * sum(r.params for r in rows))
