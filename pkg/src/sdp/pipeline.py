"""
End-to-end glue: synthetic datasets, block views and pooled descriptors.

A *view* is the real tensor handed to CP-ALS:

``amplitude``       session-normalized dB amplitude, (A, K, T)
``amp+phase-diff``  amplitude stacked with adjacent-subcarrier phase
                    differences along the subcarrier axis, (A, 2K-1, T)
``amp+phase``       amplitude stacked with raw wrapped phase, (A, 2K, T);
                    the no-phase-calibration ablation
``real-imag``       real and imaginary parts interleaved in time, (A, K, 2T)
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import CsiRecording, NoiseConfig, SamplingGrid, scene_preset, synth_csi
from .cpals import CpConfig, CpDecomposition, cp_als
from .errors import ConfigError
from .pooling import pool
from .schema import (DataBlock, SessionStats, WindowConfig, amplitude_db, phase_diff,
                     window, wrap_phase)
from .seeding import derive_seed

VIEWS = ("amplitude", "amp+phase-diff", "amp+phase", "real-imag")
LABEL_KEYS = {"detection": "presence", "recognition": "activity", "vitals": "vitals"}


@dataclass
class FeatureConfig:
    view: str = "amp+phase-diff"
    window: WindowConfig = field(default_factory=lambda: WindowConfig(64, 32))
    cp: CpConfig = field(default_factory=lambda: CpConfig(rank=8, max_sweeps=15, rel_tol=1e-6,
                                                          init="hosvd"))
    use_cpals: bool = True

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ConfigError(f"view must be one of {VIEWS}")


def block_view(block: DataBlock, view: str, stats: SessionStats) -> np.ndarray:
    x = np.asarray(block.tensor)
    amp = (amplitude_db(x) - stats.mean) / stats.scale
    amp[:, :, ~block.mask] = 0.0
    if view == "amplitude":
        return amp
    if view == "amp+phase-diff":
        pd = phase_diff(x)
        pd[:, :, ~block.mask] = 0.0
        return np.concatenate([amp, pd], axis=1)
    if view == "amp+phase":
        ph = wrap_phase(np.angle(x))
        ph[:, :, ~block.mask] = 0.0
        return np.concatenate([amp, ph], axis=1)
    if view == "real-imag":
        out = np.empty(x.shape[:2] + (2 * x.shape[2],))
        out[:, :, 0::2] = x.real
        out[:, :, 1::2] = x.imag
        return out
    raise ConfigError(f"unknown view {view!r}")


def raw_features(tensor: np.ndarray) -> np.ndarray:
    """Flattened per-(a, k) time mean and std: the no-CP-ALS ablation input."""
    return np.concatenate([tensor.mean(axis=2).ravel(), tensor.std(axis=2).ravel()])


def describe(block: DataBlock, stats: SessionStats, cfg: FeatureConfig,
             timings: Optional[dict] = None) -> Tuple[np.ndarray, Optional[CpDecomposition]]:
    """Descriptor vector for one block (and its decomposition when used)."""
    t0 = time.perf_counter()
    tensor = block_view(block, cfg.view, stats)
    t1 = time.perf_counter()
    if not cfg.use_cpals:
        h = raw_features(tensor)
        if timings is not None:
            timings["preprocess"] = t1 - t0
            timings["cp_als"] = 0.0
            timings["pool"] = time.perf_counter() - t1
        return h, None
    d = cp_als(tensor, cfg.cp)
    t2 = time.perf_counter()
    h = pool(d, float(tensor.mean()), float(tensor.std())).h
    if timings is not None:
        timings["preprocess"] = t1 - t0
        timings["cp_als"] = t2 - t1
        timings["pool"] = time.perf_counter() - t2
    return h, d


# --------------------------------------------------------------------------
# synthetic datasets
# --------------------------------------------------------------------------

@dataclass
class DatasetSpec:
    """Which scenes to record, for how many users, and for how long."""

    task: str = "gesture"            # presence | gesture | breathing | gait
    n_users: int = 16
    n_classes: int = 4
    sessions_per_class: int = 6
    duration: float = 20.0
    packet_rate: float = 20.0
    n_rx: int = 3
    n_tx: int = 1
    n_subcarriers: int = 30
    sigma2: float = 1e-3
    cpe_std: float = 0.3
    breathing_range: Tuple[float, float] = (0.2, 0.5)

    def __post_init__(self):
        if self.task not in ("presence", "gesture", "breathing", "gait"):
            raise ConfigError(f"unknown dataset task {self.task!r}")
        if self.n_users < 1 or self.sessions_per_class < 1:
            raise ConfigError("need at least one user and one session per class")


def _scenes_for(spec: DatasetSpec, user: int, rng_seed: int):
    """Yield (kind, params) for one user's sessions."""
    base = {"user": user, "duration": spec.duration, "cpe_std": spec.cpe_std}
    out = []
    for s in range(spec.sessions_per_class):
        if spec.task == "presence":
            out.append(("static-empty", dict(base)))
            out.append(("presence", dict(base)))
        elif spec.task == "gesture":
            for c in range(spec.n_classes):
                out.append(("gesture", {**base, "class_id": c, "n_classes": spec.n_classes}))
        elif spec.task == "gait":
            for c in range(spec.n_classes):
                out.append(("gait", {**base, "user_id": c, "n_users": spec.n_classes}))
        else:
            lo, hi = spec.breathing_range
            rng = np.random.default_rng(derive_seed(rng_seed, user, s, 5))
            for rate in rng.uniform(lo, hi, spec.n_classes):
                out.append(("breathing", {**base, "rate_hz": float(round(rate, 4))}))
    return out


def generate_recordings(spec: DatasetSpec, seed: int) -> List[CsiRecording]:
    """One recording per (user, session, class); seeds derive from ``seed``."""
    grid = SamplingGrid.uniform(n_rx=spec.n_rx, n_tx=spec.n_tx, n_subcarriers=spec.n_subcarriers,
                                packet_rate=spec.packet_rate,
                                n_packets=int(round(spec.duration * spec.packet_rate)))
    recs = []
    for user in range(spec.n_users):
        for i, (kind, params) in enumerate(_scenes_for(spec, user, seed)):
            rec_seed = derive_seed(seed, user, i)
            scene = scene_preset(kind, params, rec_seed)
            recs.append(synth_csi(scene, grid, NoiseConfig(spec.sigma2, rec_seed),
                                  session_id=f"u{user}-s{i}", user_id=f"u{user}"))
    return recs


def featurize(recordings: Sequence[CsiRecording], cfg: FeatureConfig) -> dict:
    """Window every recording and pool each block into a descriptor row.

    Session statistics are computed per recording from its own frames; no
    statistic is shared between recordings.
    """
    rows, labels = [], {k: [] for k in LABEL_KEYS}
    users, sessions, starts = [], [], []
    for rec in recordings:
        stats = SessionStats.from_recording(rec)
        for b in window(rec, cfg.window):
            h, _ = describe(b, stats, cfg)
            rows.append(h)
            labels["detection"].append(int(bool(b.labels["presence"])))
            labels["recognition"].append(int(b.labels["activity"]))
            labels["vitals"].append(float(b.labels["vitals"]))
            users.append(rec.user_id)
            sessions.append(rec.session_id)
            starts.append(b.start_frame)
    if not rows:
        raise ConfigError("no blocks produced; recordings shorter than the window?")
    return {"h": np.vstack(rows),
            "detection": np.array(labels["detection"], dtype=np.int64),
            "recognition": np.array(labels["recognition"], dtype=np.int64),
            "vitals": np.array(labels["vitals"], dtype=float),
            "user": np.array(users), "session": np.array(sessions),
            "start": np.array(starts, dtype=np.int64)}


def subset(data: dict, idx) -> dict:
    return {k: np.asarray(v)[idx] for k, v in data.items()}
