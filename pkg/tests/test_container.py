import json
import struct
import zlib

import numpy as np
import pytest

from sdp.channel import NoiseConfig, SamplingGrid, scene_preset, synth_csi
from sdp.container import (FORMAT_VERSION, MAGIC, deserialize, deserialize_blocks,
                           deserialize_recording, pack, read_header, serialize, serialize_blocks,
                           serialize_recording, unpack)
from sdp.errors import (BadMagicError, ChecksumError, ConfigError, ContainerError, SizeMismatchError,
                        TruncatedError, VersionMismatchError)
from sdp.schema import SessionStats, WindowConfig, normalize, window


def _recording(n=100):
    g = SamplingGrid.uniform(n_rx=2, n_subcarriers=8, n_packets=n)
    scene = scene_preset("breathing", {"rate_hz": 0.25, "duration": n}, seed=1)
    return synth_csi(scene, g, NoiseConfig(1e-3, rng_seed=1), session_id="s1", user_id="u1")


def _blocks():
    return window(_recording(), WindowConfig(32, 16, pad_last=True))


def test_layout_of_the_preamble():
    data = pack({"kind": "x"}, [np.arange(3.0)], "<f4")
    assert data[:4] == MAGIC
    version, hlen = struct.unpack_from("<BI", data, 4)
    assert version == FORMAT_VERSION
    header = json.loads(data[9:9 + hlen])
    assert header["payload_bytes"] == 12 and header["arrays"] == [[3]]
    payload = data[9 + hlen:-4]
    assert np.array_equal(np.frombuffer(payload, "<f4"), [0.0, 1.0, 2.0])
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(payload)
    # keys are written sorted
    assert list(header) == sorted(header)


def test_blocks_round_trip_bit_exact_and_fixed_point():
    blocks = _blocks()
    data = serialize_blocks(blocks)
    back = deserialize_blocks(data)
    assert len(back) == len(blocks)
    for a, b in zip(blocks, back):
        assert np.array_equal(a.tensor.astype(np.complex64), b.tensor)
        assert np.array_equal(a.mask, b.mask)
        assert np.array_equal(a.timestamps, b.timestamps, equal_nan=True)
        assert a.labels["vitals"] == b.labels["vitals"]
        assert a.labels["presence"] is True and b.labels["presence"] is True
        assert (a.session_id, a.user_id, a.start_frame) == (b.session_id, b.user_id, b.start_frame)
    assert serialize_blocks(back) == data


def test_norm_stats_travel_with_blocks():
    blocks = _blocks()
    out = normalize(blocks, SessionStats.from_blocks(blocks))
    back = deserialize_blocks(serialize_blocks(out))
    assert back[0].meta["norm_stats"] == out[0].meta["norm_stats"]


def test_empty_block_list_is_valid():
    data = serialize_blocks([])
    assert deserialize_blocks(data) == []
    assert read_header(data)[0]["records"] == []


def test_recording_round_trip():
    rec = _recording()
    data = serialize_recording(rec)
    back = deserialize_recording(data)
    assert np.array_equal(back.csi, rec.csi.astype(np.complex64))
    assert np.array_equal(back.timestamps, rec.timestamps)
    assert np.array_equal(back.labels["vitals"], rec.labels["vitals"])
    assert back.labels["presence"].dtype == bool
    assert back.pairs == rec.pairs and np.array_equal(back.freqs, rec.freqs)
    assert serialize_recording(back) == data
    assert isinstance(deserialize(data), type(rec))
    assert isinstance(deserialize(serialize(_blocks())), list)


def test_payload_byte_flip_is_a_checksum_error():
    data = bytearray(serialize_blocks(_blocks()))
    hlen = struct.unpack_from("<I", data, 5)[0]
    data[9 + hlen + 10] ^= 0xFF
    with pytest.raises(ChecksumError) as err:
        deserialize_blocks(bytes(data))
    assert err.value.code == "checksum-mismatch"


@pytest.mark.parametrize("mutate, exc, code", [
    (lambda d: b"NOPE" + d[4:], BadMagicError, "bad-magic"),
    (lambda d: d[:4] + bytes([FORMAT_VERSION + 1]) + d[5:], VersionMismatchError, "version-mismatch"),
    (lambda d: d[:2], TruncatedError, "truncated"),
    (lambda d: d[:7], TruncatedError, "truncated"),
    (lambda d: d[:20], TruncatedError, "truncated"),
    (lambda d: d[:-1], TruncatedError, "truncated"),
    (lambda d: d + b"\x00", SizeMismatchError, "size-mismatch"),
])
def test_corruption_classes(mutate, exc, code):
    data = serialize_blocks(_blocks())
    with pytest.raises(exc) as err:
        unpack(mutate(data))
    assert err.value.code == code
    assert isinstance(err.value, ContainerError)


def test_declared_size_disagreeing_with_arrays():
    data = pack({"kind": "x"}, [np.zeros(4)], "<f4")
    hlen = struct.unpack_from("<I", data, 5)[0]
    header = data[9:9 + hlen].replace(b'"payload_bytes":16', b'"payload_bytes":15')
    with pytest.raises(SizeMismatchError):
        unpack(data[:9] + header + data[9 + hlen:])


def test_unknown_dtype_and_kind():
    with pytest.raises(ConfigError):
        pack({}, [np.zeros(1)], "<i4")
    with pytest.raises(ConfigError):
        deserialize_blocks(serialize_recording(_recording()))
    with pytest.raises(ConfigError):
        deserialize_recording(serialize_blocks(_blocks()))


def test_float64_payload_round_trip():
    x = np.random.default_rng(0).standard_normal((3, 4))
    _, (y,) = unpack(pack({"kind": "t"}, [x], "<f8"))
    assert np.array_equal(x, y)
