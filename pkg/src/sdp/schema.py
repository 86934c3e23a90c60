"""
Canonical (A, K, T) data blocks.

Recordings are first reordered by a declarative adapter, then cut into
sliding windows. Blocks keep their complex tensor; real views
(real-imag or amp-phase stacking, adjacent-subcarrier phase differences,
session-normalized dB amplitudes) are computed on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import CsiRecording
from .errors import ConfigError

SCHEMA_VERSION = 1
AMP_EPS = 1e-12
STD_FLOOR = 1e-8
PHASE_QUANTUM = 2.0 ** -20  # rad; grid for phase differences
_PI_STEPS = int(np.rint(np.pi / PHASE_QUANTUM))


@dataclass(frozen=True)
class AdapterDescriptor:
    """Maps a source recording onto the canonical axes.

    ``antenna_pairs`` lists the (rx, tx) pairs, in canonical A order, to take
    from the source; ``subcarrier_map[k]`` is the source subcarrier id placed
    at canonical position ``k``.
    """

    name: str
    version: str
    antenna_pairs: Tuple[Tuple[int, int], ...]
    subcarrier_map: Tuple[int, ...]
    units: str = "linear"

    def __post_init__(self):
        pairs = tuple((int(r), int(t)) for r, t in self.antenna_pairs)
        smap = tuple(int(k) for k in self.subcarrier_map)
        if len(pairs) == 0 or len(smap) == 0:
            raise ConfigError("adapter needs at least one pair and one subcarrier")
        if len(set(pairs)) != len(pairs):
            raise ConfigError("adapter antenna_pairs contains duplicates")
        if len(set(smap)) != len(smap):
            raise ConfigError("adapter subcarrier_map contains duplicates")
        if self.units not in ("linear", "already-dB"):
            raise ConfigError("units must be 'linear' or 'already-dB'")
        object.__setattr__(self, "antenna_pairs", pairs)
        object.__setattr__(self, "subcarrier_map", smap)

    @classmethod
    def identity(cls, rec: CsiRecording, name: str = "identity") -> "AdapterDescriptor":
        return cls(name=name, version="1", antenna_pairs=tuple(rec.pairs),
                   subcarrier_map=tuple(int(k) for k in rec.subcarriers))

    def to_dict(self) -> dict:
        return {"name": self.name, "version": self.version,
                "antenna_pairs": [list(p) for p in self.antenna_pairs],
                "subcarrier_map": list(self.subcarrier_map), "units": self.units}

    @classmethod
    def from_dict(cls, d: dict) -> "AdapterDescriptor":
        if not isinstance(d, dict):
            raise ConfigError("adapter descriptor must be a JSON object")
        unknown = set(d) - {"name", "version", "antenna_pairs", "subcarrier_map", "units"}
        if unknown:
            raise ConfigError(f"unknown adapter keys: {sorted(unknown)}")
        missing = {"name", "version", "antenna_pairs", "subcarrier_map"} - set(d)
        if missing:
            raise ConfigError(f"adapter descriptor is missing {sorted(missing)}")
        return cls(name=d["name"], version=str(d["version"]),
                   antenna_pairs=tuple(tuple(p) for p in d["antenna_pairs"]),
                   subcarrier_map=tuple(d["subcarrier_map"]), units=d.get("units", "linear"))

    @classmethod
    def from_json(cls, text: str) -> "AdapterDescriptor":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"adapter descriptor is not valid JSON: {exc}") from None


def ingest(rec: CsiRecording, adapter: AdapterDescriptor) -> CsiRecording:
    """Permute/select antenna pairs and subcarriers into canonical order.

    The output numbers its subcarriers 0..K-1 in canonical order, so an
    adapter that permutes positions is an involution when it is its own
    inverse; ``meta["source_subcarriers"]`` records the source ids taken.
    """
    pair_index = {p: i for i, p in enumerate(rec.pairs)}
    sc_index = {int(s): i for i, s in enumerate(rec.subcarriers)}
    try:
        rows = [pair_index[p] for p in adapter.antenna_pairs]
    except KeyError as exc:
        raise ConfigError(f"adapter references absent antenna pair {exc.args[0]}") from None
    try:
        cols = [sc_index[s] for s in adapter.subcarrier_map]
    except KeyError as exc:
        raise ConfigError(f"adapter references absent subcarrier {exc.args[0]}") from None
    csi = rec.csi[:, rows][:, :, cols]
    if adapter.units == "already-dB":
        # stored as dB magnitude with phase; bring back to linear amplitude
        csi = 10.0 ** (np.abs(csi) / 20.0) * np.exp(1j * np.angle(csi))
    meta = dict(rec.meta)
    meta["adapter"] = f"{adapter.name}@{adapter.version}"
    # canonical subcarrier ids are positions; the source ids are kept in meta
    meta["source_subcarriers"] = ",".join(str(k) for k in adapter.subcarrier_map)
    return CsiRecording(timestamps=rec.timestamps.copy(), csi=csi,
                        pairs=list(adapter.antenna_pairs),
                        subcarriers=np.arange(len(cols)),
                        labels={k: v.copy() for k, v in rec.labels.items()},
                        session_id=rec.session_id, user_id=rec.user_id,
                        freqs=None if rec.freqs is None else rec.freqs[cols],
                        meta=meta)


@dataclass(frozen=True)
class WindowConfig:
    length: int = 64
    stride: int = 16
    pad_last: bool = False

    def __post_init__(self):
        if int(self.length) < 1 or int(self.stride) < 1:
            raise ConfigError("window length and stride must be >= 1")


@dataclass
class DataBlock:
    """One canonical window: complex ``tensor`` of shape (A, K, T)."""

    tensor: np.ndarray
    mask: np.ndarray
    timestamps: np.ndarray           # NaN at padded positions
    center_timestamp: float
    labels: Dict[str, float]
    session_id: str = ""
    user_id: str = ""
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    subcarriers: Optional[np.ndarray] = None
    start_frame: int = 0
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.tensor.shape)


def _label_value(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    return float(v)


def window(rec: CsiRecording, cfg: WindowConfig) -> List[DataBlock]:
    """Cut ``rec`` into blocks starting at frames 0, S, 2S, ...

    With ``pad_last`` one extra zero-padded block holds the frames after the
    last full window; it starts at the last stride multiple not past the
    first uncovered frame. Labels and the center timestamp come from frame ``start + W // 2``; for a
    padded block that frame may be missing, in which case the last valid frame
    is used.
    """
    n, W, S = rec.n_frames, int(cfg.length), int(cfg.stride)
    blocks: List[DataBlock] = []
    starts = list(range(0, n - W + 1, S)) if n >= W else []
    if cfg.pad_last:
        # trailing block: last stride multiple at or before the first
        # uncovered frame (one stride further if that is the last full start)
        covered = starts[-1] + W if starts else 0
        nxt = (covered // S) * S
        if starts and nxt <= starts[-1]:
            nxt += S
        if covered < n and nxt < n:
            starts.append(nxt)
    A, K = rec.csi.shape[1:]
    for s in starts:
        valid = min(W, n - s)
        tensor = np.zeros((A, K, W), dtype=rec.csi.dtype)
        tensor[:, :, :valid] = np.transpose(rec.csi[s:s + valid], (1, 2, 0))
        mask = np.zeros(W, dtype=bool)
        mask[:valid] = True
        ts = np.full(W, np.nan)
        ts[:valid] = rec.timestamps[s:s + valid]
        center = s + min(W // 2, valid - 1)
        blocks.append(DataBlock(
            tensor=tensor, mask=mask, timestamps=ts,
            center_timestamp=float(rec.timestamps[center]),
            labels={k: _label_value(v[center]) for k, v in sorted(rec.labels.items())},
            session_id=rec.session_id, user_id=rec.user_id,
            pairs=list(rec.pairs), subcarriers=rec.subcarriers.copy(),
            start_frame=s, meta={}))
    return blocks


def parameterize(block: DataBlock, mode: str = "real-imag") -> np.ndarray:
    """Real (A, K, T, 2) view: (Re, Im) or (|x|, angle(x))."""
    x = block.tensor if isinstance(block, DataBlock) else np.asarray(block)
    if mode == "real-imag":
        return np.stack([x.real, x.imag], axis=-1)
    if mode == "amp-phase":
        return np.stack([np.abs(x), wrap_phase(np.angle(x))], axis=-1)
    raise ConfigError(f"unknown parameterization {mode!r}")


def recombine(real_view: np.ndarray, mode: str = "real-imag") -> np.ndarray:
    if mode == "real-imag":
        return real_view[..., 0] + 1j * real_view[..., 1]
    if mode == "amp-phase":
        return real_view[..., 0] * np.exp(1j * real_view[..., 1])
    raise ConfigError(f"unknown parameterization {mode!r}")


def wrap_phase(phi: np.ndarray) -> np.ndarray:
    """Map angles into (-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    out = np.angle(np.exp(1j * phi))
    return np.where(out == -np.pi, np.pi, out)


def phase_diff(block) -> np.ndarray:
    """Principal phase of ``x[:, k+1, t] * conj(x[:, k, t])``, shape (A, K-1, T).

    Values lie on a ``PHASE_QUANTUM`` grid; the grid point nearest +-pi is
    reported with a positive sign.
    """
    x = block.tensor if isinstance(block, DataBlock) else np.asarray(block)
    if x.shape[1] < 2:
        raise ConfigError("phase_diff needs at least two subcarriers")
    prod = x[:, 1:, :] * np.conj(x[:, :-1, :])
    # Snap to a fixed grid: a common per-frame rotation then changes the
    # product only by rounding noise (~1e-16 rad), which cannot move a value
    # across a grid boundary except with negligible probability.
    steps = np.rint(np.arctan2(prod.imag, prod.real) / PHASE_QUANTUM)
    steps = np.where(steps == -_PI_STEPS, _PI_STEPS, steps)
    return steps * PHASE_QUANTUM


def amplitude_db(x: np.ndarray) -> np.ndarray:
    return 20.0 * np.log10(np.abs(x) + AMP_EPS)


@dataclass(frozen=True)
class SessionStats:
    mean: float
    std: float
    eps: float = STD_FLOOR

    @property
    def scale(self) -> float:
        return max(self.std, self.eps)

    @classmethod
    def from_blocks(cls, blocks: Sequence[DataBlock], eps: float = STD_FLOOR) -> "SessionStats":
        vals = [amplitude_db(b.tensor[:, :, b.mask]).ravel() for b in blocks]
        vals = [v for v in vals if v.size]
        if not vals:
            raise ConfigError("cannot compute session statistics from an empty session")
        return cls.from_amplitudes_db(np.concatenate(vals), eps)

    @classmethod
    def from_recording(cls, rec: CsiRecording, eps: float = STD_FLOOR) -> "SessionStats":
        if rec.n_frames == 0:
            raise ConfigError("cannot compute session statistics from an empty session")
        return cls.from_amplitudes_db(amplitude_db(rec.csi).ravel(), eps)

    @classmethod
    def from_amplitudes_db(cls, values: np.ndarray, eps: float = STD_FLOOR) -> "SessionStats":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise ConfigError("cannot compute session statistics from an empty session")
        return cls(mean=float(values.mean()), std=float(values.std()), eps=eps)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "eps": self.eps}


def normalize(blocks: Sequence[DataBlock], stats: SessionStats) -> List[DataBlock]:
    """Z-score dB amplitudes with session statistics; phase is kept as is.

    The returned blocks carry an ``amp-phase`` real view in
    ``meta['features']`` (channel 0 = normalized dB amplitude, channel 1 =
    wrapped phase) and the statistics in ``meta['norm_stats']``. Padded
    frames stay exactly zero.
    """
    if len(blocks) == 0:
        raise ConfigError("normalize needs a non-empty session")
    out = []
    for b in blocks:
        feats = np.zeros(b.tensor.shape + (2,))
        x = b.tensor[:, :, b.mask]
        feats[:, :, b.mask, 0] = (amplitude_db(x) - stats.mean) / stats.scale
        feats[:, :, b.mask, 1] = wrap_phase(np.angle(x))
        meta = dict(b.meta)
        meta["features"] = feats
        meta["norm_stats"] = stats.to_dict()
        out.append(replace(b, meta=meta))
    return out


def normalize_values(values_db: np.ndarray, stats: SessionStats) -> np.ndarray:
    return (values_db - stats.mean) / stats.scale


def denormalize_amplitude(z: np.ndarray, stats: SessionStats) -> np.ndarray:
    """Inverse of the amplitude map: back to linear magnitude."""
    return 10.0 ** ((z * stats.scale + stats.mean) / 20.0) - AMP_EPS
