"""Checkpoint format: round trips, integrity, layout verification."""
import struct

import numpy as np
import numpy.testing as npt
import pytest

from tscnet import checkpoint as ckpt
from tscnet.autodiff import Tensor
from tscnet.config import micro_network_config
from tscnet.errors import DataError
from tscnet.network import build_network


def test_roundtrip_is_byte_identical(tmp_path):
    net = build_network(micro_network_config(), seed=0)
    params = net.parameters()
    p1 = str(tmp_path / "a.ckpt")
    p2 = str(tmp_path / "b.ckpt")
    ckpt.save(p1, params)
    other = build_network(micro_network_config(), seed=99)
    ckpt.load_into(p1, other.parameters())
    ckpt.save(p2, other.parameters())
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_scalar_parameters_roundtrip(tmp_path):
    net = build_network(micro_network_config(), seed=1)
    params = net.parameters()
    beta = params["tscm.2.tru.beta"]
    beta.data = np.asarray(0.625, dtype=np.float32)  # exactly representable
    path = str(tmp_path / "s.ckpt")
    ckpt.save(path, params)
    stored = ckpt.load(path)
    assert stored["tscm.2.tru.beta"].shape == ()
    assert float(stored["tscm.2.tru.beta"]) == 0.625


def test_magic_and_crc_guard(tmp_path):
    net = build_network(micro_network_config(), seed=2)
    path = str(tmp_path / "c.ckpt")
    ckpt.save(path, net.parameters())
    blob = bytearray(open(path, "rb").read())
    assert bytes(blob[:8]) == b"TSCN0001"

    corrupted = bytearray(blob)
    corrupted[100] ^= 0xFF
    (tmp_path / "bad_crc.ckpt").write_bytes(bytes(corrupted))
    with pytest.raises(DataError, match="CRC32"):
        ckpt.load(str(tmp_path / "bad_crc.ckpt"))

    wrong_magic = b"XXXX0001" + bytes(blob[8:])
    (tmp_path / "bad_magic.ckpt").write_bytes(wrong_magic)
    with pytest.raises(DataError, match="magic"):
        ckpt.load(str(tmp_path / "bad_magic.ckpt"))

    with pytest.raises(DataError):
        ckpt.parse(b"TSCN0001")


def test_layout_mismatch_reports_diff(tmp_path):
    net = build_network(micro_network_config(), seed=3)
    path = str(tmp_path / "m.ckpt")
    ckpt.save(path, net.parameters())
    other = build_network(micro_network_config(use_tru=False), seed=3)
    with pytest.raises(DataError) as err:
        ckpt.load_into(path, other.parameters())
    message = str(err.value)
    assert "unexpected tensor 'tscm.2.tru.proj_q.weight'" in message

    bigger = build_network(micro_network_config(feature_channels=8, vit_heads=2), seed=3)
    with pytest.raises(DataError) as err:
        ckpt.load_into(path, bigger.parameters())
    assert "shape mismatch" in str(err.value)


def test_load_into_applies_values(tmp_path):
    net = build_network(micro_network_config(), seed=4)
    params = net.parameters()
    path = str(tmp_path / "v.ckpt")
    ckpt.save(path, params)
    target = build_network(micro_network_config(), seed=77)
    ckpt.load_into(path, target.parameters())
    for name, p in target.parameters().items():
        npt.assert_array_equal(p.data, params[name].data)


def test_record_encoding_is_little_endian(tmp_path):
    params = {"w": Tensor(np.array([[1.0, 2.0]], dtype=np.float32), requires_grad=True)}
    blob = ckpt.serialize(params)
    offset = 8
    (name_len,) = struct.unpack_from("<I", blob, offset)
    assert name_len == 1
    assert blob[offset + 4:offset + 5] == b"w"
    (rank,) = struct.unpack_from("<I", blob, offset + 5)
    assert rank == 2
    dims = struct.unpack_from("<2I", blob, offset + 9)
    assert dims == (1, 2)
    values = np.frombuffer(blob, dtype="<f4", count=2, offset=offset + 17)
    npt.assert_array_equal(values, [1.0, 2.0])
