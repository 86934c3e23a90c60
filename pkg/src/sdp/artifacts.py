"""
SDPB-variant files for the later pipeline stages.

``decompositions``  per-block CP factors (A, B, C, weights), float64
``descriptors``     the pooled descriptor table, one row per block, float64
``model``           a trained multi-task checkpoint, float64

All three reuse the container framing (magic, version, JSON header, payload,
CRC32); the header ``kind`` says which one a file holds.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .container import pack, unpack
from .cpals import CpDecomposition
from .errors import ConfigError
from .mtl import MultiTaskModel
from .pooling import LAYOUT_VERSION, field_names
from .schema import DataBlock


def _label_json(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return None if math.isnan(v) else v


def block_record(b: DataBlock, block_id: str) -> dict:
    return {"block_id": block_id, "session_id": b.session_id, "user_id": b.user_id,
            "start_frame": int(b.start_frame),
            "labels": {k: _label_json(v) for k, v in b.labels.items()}}


def block_id(b: DataBlock) -> str:
    return f"{b.session_id}@{int(b.start_frame)}"


def _expect(header: dict, kind: str):
    if header.get("kind") != kind:
        raise ConfigError(f"expected a {kind} container, found {header.get('kind')!r}")


# --------------------------------------------------------------------------
# decompositions
# --------------------------------------------------------------------------

def pack_decompositions(items: Sequence[Tuple[dict, CpDecomposition, float, float]],
                        view: str) -> bytes:
    """``items`` holds (record, decomposition, amp_mean, amp_std) per block."""
    records, arrays = [], []
    for rec, d, amp_mean, amp_std in items:
        records.append({**rec, "fit": float(d.fit), "sweeps_used": int(d.sweeps_used),
                        "amp_mean": float(amp_mean), "amp_std": float(amp_std),
                        "rank": int(d.rank)})
        arrays.extend([d.A, d.B, d.C, d.weights])
    return pack({"kind": "decompositions", "view": view, "records": records}, arrays, "<f8")


def unpack_decompositions(data: bytes) -> Tuple[dict, List[Tuple[dict, CpDecomposition]]]:
    header, arrays = unpack(data)
    _expect(header, "decompositions")
    out = []
    for i, rec in enumerate(header["records"]):
        A, B, C, w = arrays[4 * i:4 * i + 4]
        out.append((rec, CpDecomposition(A=A, B=B, C=C, weights=w, fit=rec["fit"],
                                         sweeps_used=rec["sweeps_used"])))
    return header, out


# --------------------------------------------------------------------------
# descriptor tables
# --------------------------------------------------------------------------

def pack_descriptors(records: Sequence[dict], H: np.ndarray, rank: Optional[int],
                     extra: Optional[dict] = None) -> bytes:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != len(records):
        raise ConfigError("descriptor matrix must have one row per record")
    header = {"kind": "descriptors", "layout": LAYOUT_VERSION if rank else "raw",
              "rank": rank, "fields": field_names(rank) if rank else
              [f"raw_{j}" for j in range(H.shape[1])], "records": list(records)}
    if extra:
        header["extra"] = extra
    return pack(header, [H], "<f8")


def unpack_descriptors(data: bytes) -> Tuple[dict, np.ndarray]:
    header, arrays = unpack(data)
    _expect(header, "descriptors")
    return header, arrays[0]


def descriptor_dataset(header: dict, H: np.ndarray) -> dict:
    """Training/eval dict (``h`` plus task labels) from a descriptor table."""
    recs = header["records"]

    def lab(r, key, default):
        v = r["labels"].get(key)
        return default if v is None else v

    return {"h": np.asarray(H, dtype=float),
            "detection": np.array([int(bool(lab(r, "presence", False))) for r in recs], dtype=np.int64),
            "recognition": np.array([int(lab(r, "activity", -1)) for r in recs], dtype=np.int64),
            "vitals": np.array([float(lab(r, "vitals", float("nan"))) for r in recs], dtype=float),
            "user": np.array([r["user_id"] for r in recs]),
            "session": np.array([r["session_id"] for r in recs]),
            "start": np.array([r["start_frame"] for r in recs], dtype=np.int64)}


# --------------------------------------------------------------------------
# model checkpoints
# --------------------------------------------------------------------------

def pack_model(model: MultiTaskModel, extra: Optional[dict] = None) -> bytes:
    names = sorted(model.params)
    header = {"kind": "model", "tasks": list(model.tasks), "n_classes": int(model.n_classes),
              "in_dim": int(model.in_dim), "hidden": int(model.hidden),
              "param_names": names, "extra": extra or {}}
    arrays = [model.input_mean, model.input_std] + [model.params[k] for k in names]
    return pack(header, arrays, "<f8")


def unpack_model(data: bytes) -> Tuple[dict, MultiTaskModel]:
    header, arrays = unpack(data)
    _expect(header, "model")
    names = header["param_names"]
    if len(arrays) != len(names) + 2:
        raise ConfigError("model container does not hold the declared parameters")
    params: Dict[str, np.ndarray] = dict(zip(names, arrays[2:]))
    model = MultiTaskModel(params=params, tasks=tuple(header["tasks"]),
                           n_classes=int(header["n_classes"]),
                           input_mean=arrays[0], input_std=arrays[1])
    return header, model
