"""Binary model checkpoints.

Layout (all integers little-endian)::

    b"LSRW"  version:u8=1  record_count:u32
    record*: name_len:u16  name:utf8  rank:u8  dims:u32*rank  values:f32*prod(dims)
    crc32:u32  (over every preceding byte)

The first record, ``__config__``, holds the architecture as a flat float
vector so a checkpoint can rebuild its own model. The remaining records are
the model's parameters followed by its batch-norm running statistics, in
enumeration order.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import FormatError
from .model import CDBlockConfig, CESConfig, DMConfig, LSRNet, LSRNetConfig

MAGIC = b"LSRW"
VERSION = 1
CONFIG_RECORD = "__config__"
_CONFIG_REV = 1


def encode_config(cfg: LSRNetConfig) -> np.ndarray:
    values = [_CONFIG_REV, cfg.input_length, cfg.classes, cfg.stem_out, cfg.cam_reduction, cfg.sam_kernel]
    values.append(len(cfg.dm.blocks))
    for b in cfg.dm.blocks:
        values += [b.kernel, b.stride, b.in_ch, b.out_ch]
    values.append(len(cfg.ces))
    for c in cfg.ces:
        values += [c.in_ch, c.out_ch, c.stride[0], c.stride[1], c.left or 0]  # 0 = even split
    return np.array(values, dtype=np.float32)


def decode_config(values: np.ndarray) -> LSRNetConfig:
    v = [int(x) for x in values]
    try:
        if v[0] != _CONFIG_REV:
            raise FormatError(f"unknown config revision {v[0]}")
        n, classes, stem_out, reduction, sam_kernel = v[1:6]
        pos = 6
        blocks = []
        for _ in range(v[pos]):
            blocks.append(CDBlockConfig(*v[pos + 1 : pos + 5]))
            pos += 4
        pos += 1
        ces = []
        for _ in range(v[pos]):
            cin, cout, sh, sw, left = v[pos + 1 : pos + 6]
            ces.append(CESConfig(cin, cout, (sh, sw), left or None))
            pos += 5
        if pos + 1 != len(v):
            raise FormatError("config record has trailing values")
    except (IndexError, TypeError):
        raise FormatError("config record too short") from None
    return LSRNetConfig(
        input_length=n, classes=classes, dm=DMConfig(tuple(blocks)), stem_out=stem_out,
        ces=tuple(ces), cam_reduction=reduction, sam_kernel=sam_kernel,
    )


def _pack_record(name: str, values: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    arr = np.ascontiguousarray(values, dtype="<f4")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def save_checkpoint(model: LSRNet) -> bytes:
    records = [(CONFIG_RECORD, encode_config(model.cfg))]
    records += list(model.state_dict().items())
    body = MAGIC + struct.pack("<BI", VERSION, len(records))
    body += b"".join(_pack_record(name, arr) for name, arr in records)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("unexpected end of stream", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_records(data: bytes) -> list[tuple[str, np.ndarray]]:
    """Parse and CRC-check a checkpoint into ``(name, float32 array)`` records."""
    if len(data) < 13:
        raise FormatError("stream shorter than header and checksum", len(data))
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", 0)
    if data[4] != VERSION:
        raise FormatError(f"unsupported version {data[4]}", 4)
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch", len(data) - 4)
    r = _Reader(body)
    r.pos = 5
    (count,) = r.unpack("<I")
    records = []
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("record name is not UTF-8", r.pos) from None
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        n = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
        records.append((name, values))
    if r.pos != len(body):
        raise FormatError("trailing bytes after last record", r.pos)
    return records


def load_checkpoint(data: bytes) -> LSRNet:
    """Rebuild a model from :func:`save_checkpoint` output."""
    records = read_records(data)
    if not records or records[0][0] != CONFIG_RECORD:
        raise FormatError("first record must be the configuration")
    try:
        cfg = decode_config(records[0][1])
        model = LSRNet(cfg)
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"embedded configuration is invalid: {exc}") from None
    state = dict(records[1:])
    if len(state) != len(records) - 1:
        raise FormatError("duplicate record names")
    expected = model.state_dict()
    if list(state) != list(expected):
        raise FormatError("record names do not match the embedded configuration")
    for name, arr in state.items():
        if arr.shape != expected[name].shape:
            raise FormatError(f"{name}: shape {arr.shape} does not match configuration {expected[name].shape}")
    model.load_state_dict({k: v.astype(np.float64) for k, v in state.items()})
    return model


def is_buffer_record(name: str) -> bool:
    return name.endswith(("running_mean", "running_var"))


def checkpoint_parameter_count(data: bytes) -> int:
    """Trainable parameter count summed from record sizes."""
    return sum(
        arr.size for name, arr in read_records(data)
        if name != CONFIG_RECORD and not is_buffer_record(name)
    )
