"""
SDPB container: a JSON header followed by a little-endian float payload.

Layout::

    b"SDPB" | version (u8) | header length (u32 LE) | header (UTF-8 JSON)
    | payload (IEEE-754 LE, arrays concatenated row-major) | CRC32(payload) (u32 LE)

Header keys are written sorted, so identical content gives identical bytes.
Blocks are stored as (A, K, T, 2) real-imag float32 arrays.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .channel import CsiRecording
from .errors import (BadMagicError, ChecksumError, ConfigError, SizeMismatchError,
                     TruncatedError, VersionMismatchError)
from .schema import SCHEMA_VERSION, DataBlock

MAGIC = b"SDPB"
FORMAT_VERSION = 1
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def _dumps(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":"),
                      allow_nan=False).encode("utf-8")


def pack(header: dict, arrays: Sequence[np.ndarray], dtype: str = "<f4") -> bytes:
    if dtype not in _DTYPES:
        raise ConfigError(f"unsupported payload dtype {dtype!r}")
    dt = _DTYPES[dtype]
    chunks = [np.ascontiguousarray(a, dtype=dt).tobytes() for a in arrays]
    payload = b"".join(chunks)
    header = dict(header)
    header.setdefault("schema_version", SCHEMA_VERSION)
    header["dtype"] = dtype
    header["arrays"] = [list(np.shape(a)) for a in arrays]
    header["payload_bytes"] = len(payload)
    hb = _dumps(header)
    return (MAGIC + struct.pack("<BI", FORMAT_VERSION, len(hb)) + hb + payload
            + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def read_header(data: bytes) -> Tuple[dict, int]:
    """Parse and validate the header; returns it with the payload offset."""
    if len(data) < 4:
        raise TruncatedError("file shorter than the magic number")
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    if len(data) < 9:
        raise TruncatedError("file shorter than the fixed preamble")
    version, hlen = struct.unpack_from("<BI", data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"container version {version}, expected {FORMAT_VERSION}")
    if len(data) < 9 + hlen:
        raise TruncatedError("header runs past end of file")
    try:
        header = json.loads(data[9:9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SizeMismatchError(f"header is not valid JSON: {exc}") from None
    return header, 9 + hlen


def unpack(data: bytes) -> Tuple[dict, List[np.ndarray]]:
    header, off = read_header(data)
    dt = _DTYPES.get(header.get("dtype"))
    if dt is None:
        raise SizeMismatchError(f"unknown payload dtype {header.get('dtype')!r}")
    shapes = [tuple(int(s) for s in shp) for shp in header.get("arrays", [])]
    expected = sum(math.prod(s) for s in shapes) * dt.itemsize
    declared = header.get("payload_bytes")
    if declared != expected:
        raise SizeMismatchError(f"header declares {declared} payload bytes, arrays need {expected}")
    end = off + expected
    if len(data) < end + 4:
        raise TruncatedError(f"payload truncated: {len(data) - off} bytes after header, need {expected + 4}")
    if len(data) > end + 4:
        raise SizeMismatchError(f"{len(data) - end - 4} trailing bytes after checksum")
    payload = data[off:end]
    (crc,) = struct.unpack_from("<I", data, end)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumError("payload checksum mismatch")
    arrays, pos = [], 0
    for shp in shapes:
        n = math.prod(shp) * dt.itemsize
        arrays.append(np.frombuffer(payload, dtype=dt, count=math.prod(shp), offset=pos).reshape(shp).copy())
        pos += n
    return header, arrays


# --------------------------------------------------------------------------
# blocks and recordings
# --------------------------------------------------------------------------

def _json_float(x):
    x = float(x)
    return None if math.isnan(x) else x


def _label_json(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return _json_float(v)


def _label_back(v):
    return float("nan") if v is None else v


def _block_record(b: DataBlock) -> dict:
    rec = {"shape": list(b.tensor.shape), "mask": [bool(m) for m in b.mask],
           "timestamps": [_json_float(t) for t in b.timestamps],
           "center_timestamp": float(b.center_timestamp),
           "labels": {k: _label_json(v) for k, v in b.labels.items()},
           "session_id": b.session_id, "user_id": b.user_id,
           "start_frame": int(b.start_frame),
           "pairs": [list(p) for p in b.pairs],
           "subcarriers": [] if b.subcarriers is None else [int(s) for s in b.subcarriers]}
    if "norm_stats" in b.meta:
        rec["norm_stats"] = b.meta["norm_stats"]
    return rec


def serialize_blocks(blocks: Sequence[DataBlock], extra: dict = None) -> bytes:
    arrays = [np.stack([b.tensor.real, b.tensor.imag], axis=-1) for b in blocks]
    header = {"kind": "blocks", "axes": ["A", "K", "T", "C"],
              "parameterization": "real-imag", "pair_order": "adapter",
              "records": [_block_record(b) for b in blocks]}
    if extra:
        header["extra"] = extra
    return pack(header, arrays, "<f4")


def deserialize_blocks(data: bytes) -> List[DataBlock]:
    header, arrays = unpack(data)
    if header.get("kind") != "blocks":
        raise ConfigError(f"expected a blocks container, found {header.get('kind')!r}")
    out = []
    for rec, arr in zip(header["records"], arrays):
        tensor = (arr[..., 0] + 1j * arr[..., 1]).astype(np.complex64)
        meta = {}
        if "norm_stats" in rec:
            meta["norm_stats"] = rec["norm_stats"]
        out.append(DataBlock(
            tensor=tensor, mask=np.array(rec["mask"], dtype=bool),
            timestamps=np.array([_label_back(t) for t in rec["timestamps"]], dtype=float),
            center_timestamp=rec["center_timestamp"],
            labels={k: _label_back(v) for k, v in rec["labels"].items()},
            session_id=rec["session_id"], user_id=rec["user_id"],
            pairs=[tuple(p) for p in rec["pairs"]],
            subcarriers=np.array(rec["subcarriers"], dtype=np.int64),
            start_frame=rec["start_frame"], meta=meta))
    return out


def serialize_recording(rec: CsiRecording) -> bytes:
    arr = np.stack([rec.csi.real, rec.csi.imag], axis=-1).transpose(1, 2, 0, 3)  # (A, K, N, 2)
    header = {"kind": "recording", "axes": ["A", "K", "T", "C"],
              "parameterization": "real-imag",
              "timestamps": [float(t) for t in rec.timestamps],
              "pairs": [list(p) for p in rec.pairs],
              "subcarriers": [int(s) for s in rec.subcarriers],
              "freqs": None if rec.freqs is None else [float(f) for f in rec.freqs],
              "labels": {k: [_label_json(x) for x in v] for k, v in rec.labels.items()},
              "session_id": rec.session_id, "user_id": rec.user_id,
              "meta": {k: v for k, v in rec.meta.items() if isinstance(v, (str, int, float, bool))}}
    return pack(header, [arr], "<f4")


def deserialize_recording(data: bytes) -> CsiRecording:
    header, arrays = unpack(data)
    if header.get("kind") != "recording":
        raise ConfigError(f"expected a recording container, found {header.get('kind')!r}")
    (arr,) = arrays
    csi = (arr[..., 0] + 1j * arr[..., 1]).astype(np.complex64).transpose(2, 0, 1)
    labels = {}
    for k, v in header["labels"].items():
        if k == "presence":
            labels[k] = np.array(v, dtype=bool)
        elif k == "activity":
            labels[k] = np.array(v, dtype=np.int64)
        else:
            labels[k] = np.array([_label_back(x) for x in v], dtype=float)
    return CsiRecording(timestamps=np.array(header["timestamps"]), csi=csi,
                        pairs=[tuple(p) for p in header["pairs"]],
                        subcarriers=np.array(header["subcarriers"]), labels=labels,
                        session_id=header["session_id"], user_id=header["user_id"],
                        freqs=None if header["freqs"] is None else np.array(header["freqs"]),
                        meta=dict(header.get("meta", {})))


def serialize(obj: Union[DataBlock, Sequence[DataBlock], CsiRecording]) -> bytes:
    if isinstance(obj, CsiRecording):
        return serialize_recording(obj)
    if isinstance(obj, DataBlock):
        obj = [obj]
    return serialize_blocks(list(obj))


def deserialize(data: bytes):
    """Decode either a recording or a list of blocks, by header kind."""
    header, _ = read_header(data)
    if header.get("kind") == "recording":
        return deserialize_recording(data)
    return deserialize_blocks(data)
