import struct
import zlib

import numpy as np
import pytest

from lsrnet.checkpoint import (
    CONFIG_RECORD, _pack_record, decode_config, encode_config, load_checkpoint, read_records, save_checkpoint,
)
from lsrnet.errors import FormatError
from lsrnet.model import CESConfig, LSRNet, LSRNetConfig
from lsrnet.tensor import Tensor


@pytest.fixture(scope="module")
def blob():
    return save_checkpoint(LSRNet(seed=5))


def test_round_trip_bytes_and_values(blob):
    model = load_checkpoint(blob)
    assert save_checkpoint(model) == blob
    original = LSRNet(seed=5)
    for (name, a), (_, b) in zip(original.state_dict().items(), model.state_dict().items()):
        np.testing.assert_array_equal(a.astype(np.float32), b.astype(np.float32), err_msg=name)


def test_loaded_model_reproduces_float32_weights(blob):
    ref = LSRNet(seed=5)
    for p in ref.parameters():
        p.data = p.data.astype(np.float32).astype(np.float64)
    x = Tensor(np.random.default_rng(0).standard_normal((1, 1, 4096)))
    assert np.array_equal(load_checkpoint(blob).eval()(x).data, ref.eval()(x).data)


def test_layout(blob):
    assert blob[:4] == b"LSRW" and blob[4] == 1
    (count,) = struct.unpack_from("<I", blob, 5)
    records = read_records(blob)
    assert count == len(records)
    assert records[0][0] == CONFIG_RECORD
    assert struct.unpack("<I", blob[-4:])[0] == zlib.crc32(blob[:-4])
    # first record header: u16 name length, name, u8 rank
    (name_len,) = struct.unpack_from("<H", blob, 9)
    assert blob[11 : 11 + name_len] == CONFIG_RECORD.encode()


def test_config_round_trip():
    cfg = LSRNetConfig(input_length=1024, classes=5, ces=(CESConfig(16, 32, (2, 2)), CESConfig(32, 32, (1, 2), 8)))
    assert decode_config(encode_config(cfg)) == cfg
    m = LSRNet(cfg, seed=2)
    assert load_checkpoint(save_checkpoint(m)).cfg == cfg


def test_truncation_is_format_error(blob):
    for cut in (0, 3, 12, len(blob) // 2, len(blob) - 1):
        with pytest.raises(FormatError):
            load_checkpoint(blob[:cut])


def test_bad_magic_and_version(blob):
    with pytest.raises(FormatError, match="offset 0"):
        load_checkpoint(b"XSRW" + blob[4:])
    with pytest.raises(FormatError, match="offset 4"):
        load_checkpoint(blob[:4] + b"\x02" + blob[5:])


def test_every_single_byte_corruption_detected():
    blob = save_checkpoint(LSRNet(LSRNetConfig(input_length=512, ces=(CESConfig(16, 16, (2, 2)),)), seed=0))
    for i in range(len(blob) - 4):
        bad = bytearray(blob)
        bad[i] ^= 0xFF
        with pytest.raises(FormatError):
            read_records(bytes(bad))


def test_shape_mismatch_against_config(blob):
    records = read_records(blob)
    name = records[-1][0]
    # same values, different dims
    parts = [_pack_record(n, a if n != name else a.reshape(1, -1)) for n, a in records]
    body = b"LSRW" + struct.pack("<BI", 1, len(parts)) + b"".join(parts)
    with pytest.raises(FormatError):
        load_checkpoint(body + struct.pack("<I", zlib.crc32(body)))
