"""Round trips and corruption handling for the binary checkpoint format."""

import json
import struct

import numpy as np
import pytest

from vmfml.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from vmfml.directional import normalize
from vmfml.errors import BadMagic, DataError, TruncatedFile
from vmfml.network import NetworkConfig, forward, init_network
from vmfml.objective import PrototypeSet


@pytest.fixture
def model(tmp_path):
    net = init_network(NetworkConfig((7, 5, 3), "tanh", seed=12))
    net.biases[0][:] = np.linspace(-1, 1, 5)
    protos = PrototypeSet(normalize(np.random.default_rng(0).standard_normal((4, 3))), 15.0)
    path = tmp_path / "m.vmf"
    save_checkpoint(path, net, protos, {"iteration": 3})
    return net, protos, path


def test_round_trip(model):
    net, protos, path = model
    net2, protos2, header = load_checkpoint(path)
    assert net2.config == net.config
    assert all(np.array_equal(a, b) for a, b in zip(net.parameters(), net2.parameters()))
    assert np.array_equal(protos.mus, protos2.mus)
    assert protos2.kappa == 15.0
    assert header["extra"] == {"iteration": 3}
    x = np.random.default_rng(1).standard_normal((3, 7))
    assert np.array_equal(forward(net, x)[0], forward(net2, x)[0])


def test_byte_layout(model):
    """Independent decoding of the documented layout."""
    net, protos, path = model
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    assert version == 1
    header = json.loads(raw[20 : 20 + hlen])
    assert [t["name"] for t in header["tensors"]] == ["W0", "b0", "W1", "b1", "prototypes"]
    payload = np.frombuffer(raw[20 + hlen :], dtype="<f8")
    expected = np.concatenate([p.ravel() for p in net.parameters()] + [protos.mus.ravel()])
    assert np.array_equal(payload, expected)


def test_save_is_deterministic(model, tmp_path):
    net, protos, path = model
    again = tmp_path / "again.vmf"
    save_checkpoint(again, net, protos, {"iteration": 3})
    assert again.read_bytes() == path.read_bytes()


def test_bad_magic(model):
    _, _, path = model
    raw = bytearray(path.read_bytes())
    raw[0:8] = b"NOTACKPT"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagic):
        load_checkpoint(path)


def test_truncated(model):
    _, _, path = model
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(TruncatedFile):
        load_checkpoint(path)
    path.write_bytes(raw[:10])
    with pytest.raises(TruncatedFile):
        load_checkpoint(path)


def test_trailing_bytes(model):
    _, _, path = model
    path.write_bytes(path.read_bytes() + b"\x00" * 8)
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_unknown_version(model):
    _, _, path = model
    raw = bytearray(path.read_bytes())
    struct.pack_into("<I", raw, 8, 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_malformed_header(model):
    _, _, path = model
    raw = path.read_bytes()
    hlen = struct.unpack_from("<Q", raw, 12)[0]
    garbage = b"{" + b" " * (hlen - 1)
    path.write_bytes(raw[:20] + garbage + raw[20 + hlen :])
    with pytest.raises(DataError):
        load_checkpoint(path)
