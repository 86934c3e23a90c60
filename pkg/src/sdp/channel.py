"""
Parametric multipath CSI synthesis.

Each path contributes ``alpha * exp(-j 2 pi f tau(t)) * exp(-j phi(t))`` to
every antenna pair, optionally steered by a uniform-linear-array phase at
the receiver. Static reflectors keep a constant delay; people and hands
modulate it over time. AWGN is added per tensor entry after summation.

All delays are in seconds, frequencies in Hz, phases in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError
from .seeding import derive_seed, rng_for

SPEED_OF_LIGHT = 299_792_458.0

# stream indices under NoiseConfig.rng_seed
PHASE_STREAM = 1
NOISE_STREAM = 2
TIMING_STREAM = 3


# --------------------------------------------------------------------------
# delay modulation and phase processes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantDelay:
    kind = "constant"

    def offset(self, t: np.ndarray) -> np.ndarray:
        return np.zeros_like(t, dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class SinusoidalDelay:
    """``delta * sin(2 pi freq t + phase)`` added to the base delay."""

    amplitude: float
    frequency: float
    phase: float = 0.0
    kind = "sinusoidal"

    def __post_init__(self):
        if not (math.isfinite(self.amplitude) and math.isfinite(self.frequency)
                and math.isfinite(self.phase)):
            raise ConfigError("sinusoidal delay parameters must be finite")
        if self.frequency <= 0:
            raise ConfigError("sinusoidal delay frequency must be > 0")

    def offset(self, t: np.ndarray) -> np.ndarray:
        return self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "amplitude": self.amplitude,
                "frequency": self.frequency, "phase": self.phase}


@dataclass(frozen=True)
class PiecewiseLinearDelay:
    """Delay offset interpolated between ``(time, offset)`` breakpoints.

    Held constant before the first and after the last breakpoint.
    """

    times: Tuple[float, ...]
    offsets: Tuple[float, ...]
    kind = "piecewise-linear"

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        offsets = tuple(float(x) for x in self.offsets)
        if len(times) == 0 or len(times) != len(offsets):
            raise ConfigError("piecewise-linear delay needs matching, non-empty breakpoints")
        if not all(math.isfinite(x) for x in times + offsets):
            raise ConfigError("piecewise-linear breakpoints must be finite")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("piecewise-linear breakpoint times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "offsets", offsets)

    def offset(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.times, self.offsets)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "times": list(self.times), "offsets": list(self.offsets)}


DelayModulation = Union[ConstantDelay, SinusoidalDelay, PiecewiseLinearDelay]


@dataclass(frozen=True)
class ZeroPhase:
    kind = "zero"

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class ConstantPhase:
    value: float
    kind = "constant"

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ConfigError("constant phase must be finite")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class RandomWalkPhase:
    """Gaussian-increment phase walk over the packet grid.

    Increments are drawn from one shared standard-normal stream and scaled
    by ``step_std``, so paths with equal ``step_std`` rotate together: a
    common phase error.
    """

    step_std: float
    kind = "random-walk"

    def __post_init__(self):
        if not math.isfinite(self.step_std) or self.step_std < 0:
            raise ConfigError("random-walk step_std must be finite and >= 0")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "step_std": self.step_std}


PhaseProcess = Union[ZeroPhase, ConstantPhase, RandomWalkPhase]


def phase_walk_increments(seed: int, n: int) -> np.ndarray:
    """Standard-normal walk with value 0 at the first packet."""
    steps = rng_for(seed, PHASE_STREAM).standard_normal(n)
    steps[0] = 0.0
    return np.cumsum(steps)


@dataclass(frozen=True)
class PathComponent:
    alpha: complex
    tau0: float
    delay: DelayModulation = ConstantDelay()
    phase: PhaseProcess = ZeroPhase()
    aoa: float = 0.0  # receive angle of arrival (rad), half-wavelength ULA

    def __post_init__(self):
        alpha = complex(self.alpha)
        if not (math.isfinite(alpha.real) and math.isfinite(alpha.imag)):
            raise ConfigError("path alpha must be finite")
        if not math.isfinite(self.tau0) or self.tau0 < 0:
            raise ConfigError("path tau0 must be finite and >= 0")
        if not math.isfinite(self.aoa):
            raise ConfigError("path aoa must be finite")
        object.__setattr__(self, "alpha", alpha)

    def delay_at(self, t: np.ndarray) -> np.ndarray:
        return self.tau0 + self.delay.offset(t)

    def phase_at(self, t: np.ndarray, seed: int = 0) -> np.ndarray:
        if isinstance(self.phase, ZeroPhase):
            return np.zeros_like(t, dtype=float)
        if isinstance(self.phase, ConstantPhase):
            return np.full_like(t, self.phase.value, dtype=float)
        return self.phase.step_std * phase_walk_increments(seed, t.size)

    def steering(self, n_rx: int) -> np.ndarray:
        return np.exp(-1j * np.pi * np.arange(n_rx) * np.sin(self.aoa))

    def to_dict(self) -> dict:
        return {"alpha": [self.alpha.real, self.alpha.imag], "tau0": self.tau0,
                "delay": self.delay.to_dict(), "phase": self.phase.to_dict(),
                "aoa": self.aoa}

    @classmethod
    def from_dict(cls, d: dict) -> "PathComponent":
        delay = dict(d.get("delay", {"kind": "constant"}))
        kind = delay.pop("kind")
        if kind == "constant":
            mod = ConstantDelay()
        elif kind == "sinusoidal":
            mod = SinusoidalDelay(**delay)
        elif kind == "piecewise-linear":
            mod = PiecewiseLinearDelay(tuple(delay["times"]), tuple(delay["offsets"]))
        else:
            raise ConfigError(f"unknown delay modulation {kind!r}")
        phase = dict(d.get("phase", {"kind": "zero"}))
        pkind = phase.pop("kind")
        if pkind == "zero":
            ph = ZeroPhase()
        elif pkind == "constant":
            ph = ConstantPhase(**phase)
        elif pkind == "random-walk":
            ph = RandomWalkPhase(**phase)
        else:
            raise ConfigError(f"unknown phase process {pkind!r}")
        alpha = d["alpha"]
        if isinstance(alpha, (list, tuple)):
            alpha = complex(alpha[0], alpha[1])
        return cls(alpha=alpha, tau0=float(d["tau0"]), delay=mod, phase=ph,
                   aoa=float(d.get("aoa", 0.0)))


def path_response(path: PathComponent, f, t, seed: int = 0):
    """Complex gain of one path at subcarrier frequency ``f`` and time ``t``.

    ``f`` and ``t`` may be scalars or 1-D arrays; with arrays the result has
    shape ``(len(t), len(f))``. A random-walk phase is indexed over the
    supplied time grid, starting from zero at ``t[0]``.
    """
    scalar = np.ndim(f) == 0 and np.ndim(t) == 0
    f = np.atleast_1d(np.asarray(f, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
        raise ConfigError("path_response requires finite frequencies and times")
    if np.any(f <= 0):
        raise ConfigError("subcarrier frequencies must be > 0")
    tau = path.delay_at(t)
    phi = path.phase_at(t, seed)
    out = path.alpha * np.exp(-2j * np.pi * np.outer(tau, f)) * np.exp(-1j * phi)[:, None]
    if scalar:
        return complex(out[0, 0])
    return out


# --------------------------------------------------------------------------
# scene, grid, noise, recording
# --------------------------------------------------------------------------

@dataclass
class SamplingGrid:
    n_rx: int
    n_tx: int
    subcarrier_freqs: np.ndarray
    packet_times: np.ndarray
    pair_gains: Optional[np.ndarray] = None  # (n_rx, n_tx) complex, default ones

    def __post_init__(self):
        self.subcarrier_freqs = np.asarray(self.subcarrier_freqs, dtype=float)
        self.packet_times = np.asarray(self.packet_times, dtype=float)
        if self.n_rx < 1 or self.n_tx < 1:
            raise ConfigError("antenna counts must be >= 1")
        if self.subcarrier_freqs.ndim != 1 or self.subcarrier_freqs.size < 2:
            raise ConfigError("need at least two subcarriers")
        if self.packet_times.ndim != 1 or self.packet_times.size < 1:
            raise ConfigError("need at least one packet")
        if np.any(np.diff(self.subcarrier_freqs) <= 0):
            raise ConfigError("subcarrier frequencies must be strictly increasing")
        if np.any(np.diff(self.packet_times) <= 0):
            raise ConfigError("packet times must be strictly increasing")
        if self.pair_gains is None:
            self.pair_gains = np.ones((self.n_rx, self.n_tx), dtype=complex)
        self.pair_gains = np.asarray(self.pair_gains, dtype=complex)
        if self.pair_gains.shape != (self.n_rx, self.n_tx):
            raise ConfigError("pair_gains must have shape (n_rx, n_tx)")

    @classmethod
    def uniform(cls, n_rx=3, n_tx=1, n_subcarriers=30, center_freq=5.32e9,
                spacing=1.25e6, packet_rate=10.0, n_packets=256, t0=0.0):
        k = np.arange(n_subcarriers) - (n_subcarriers - 1) / 2
        return cls(n_rx=n_rx, n_tx=n_tx,
                   subcarrier_freqs=center_freq + spacing * k,
                   packet_times=t0 + np.arange(n_packets) / packet_rate)

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        """Antenna-pair order of the A axis: rx-major, ``a = rx * n_tx + tx``."""
        return [(r, t) for r in range(self.n_rx) for t in range(self.n_tx)]

    def to_dict(self) -> dict:
        return {"n_rx": self.n_rx, "n_tx": self.n_tx,
                "subcarrier_freqs": self.subcarrier_freqs.tolist(),
                "packet_times": self.packet_times.tolist(),
                "pair_gains": [[[g.real, g.imag] for g in row] for row in self.pair_gains]}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingGrid":
        if "packet_times" not in d:
            return cls.uniform(**d)
        gains = d.get("pair_gains")
        if gains is not None:
            gains = np.array([[complex(*g) for g in row] for row in gains])
        return cls(n_rx=int(d["n_rx"]), n_tx=int(d["n_tx"]),
                   subcarrier_freqs=d["subcarrier_freqs"],
                   packet_times=d["packet_times"], pair_gains=gains)


@dataclass(frozen=True)
class NoiseConfig:
    sigma2: float = 0.0
    rng_seed: int = 0
    timing_offset_std: float = 0.0  # per-packet timing jitter (s); uncalibrated

    def __post_init__(self):
        if not math.isfinite(self.sigma2) or self.sigma2 < 0:
            raise ConfigError("sigma2 must be finite and >= 0")
        if not math.isfinite(self.timing_offset_std) or self.timing_offset_std < 0:
            raise ConfigError("timing_offset_std must be finite and >= 0")


@dataclass(frozen=True)
class LabelInterval:
    start: float
    end: float
    presence: bool = False
    activity: int = -1
    vitals: float = float("nan")


LABEL_TASKS = ("presence", "activity", "vitals")


@dataclass
class MultipathScene:
    paths: List[PathComponent]
    kind: str = "static"
    schedule: List[LabelInterval] = field(
        default_factory=lambda: [LabelInterval(0.0, math.inf)])
    params: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.paths) == 0:
            raise ConfigError("scene needs at least one path")
        ivs = sorted(self.schedule, key=lambda iv: iv.start)
        for a, b in zip(ivs, ivs[1:]):
            if b.start < a.end:
                raise ConfigError("label intervals overlap")
            if b.start > a.end:
                raise ConfigError("label intervals leave a gap")
        self.schedule = ivs

    def labels_at(self, times: np.ndarray) -> Dict[str, np.ndarray]:
        out = {"presence": np.zeros(times.size, dtype=bool),
               "activity": np.full(times.size, -1, dtype=np.int64),
               "vitals": np.full(times.size, np.nan)}
        covered = np.zeros(times.size, dtype=bool)
        for iv in self.schedule:
            sel = (times >= iv.start) & (times < iv.end)
            out["presence"][sel] = iv.presence
            out["activity"][sel] = iv.activity
            out["vitals"][sel] = iv.vitals
            covered |= sel
        if not covered.all():
            raise ConfigError("label schedule does not cover every packet time")
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params,
                "paths": [p.to_dict() for p in self.paths],
                "schedule": [{"start": iv.start, "end": iv.end if math.isfinite(iv.end) else None,
                              "presence": iv.presence, "activity": iv.activity,
                              "vitals": None if math.isnan(iv.vitals) else iv.vitals}
                             for iv in self.schedule]}

    @classmethod
    def from_dict(cls, d: dict) -> "MultipathScene":
        sched = [LabelInterval(start=float(s["start"]),
                               end=math.inf if s.get("end") is None else float(s["end"]),
                               presence=bool(s.get("presence", False)),
                               activity=int(s.get("activity", -1)),
                               vitals=float("nan") if s.get("vitals") is None else float(s["vitals"]))
                 for s in d.get("schedule", [{"start": 0.0, "end": None}])]
        return cls(paths=[PathComponent.from_dict(p) for p in d["paths"]],
                   kind=d.get("kind", "static"), schedule=sched,
                   params=dict(d.get("params", {})))


@dataclass
class CsiRecording:
    """Time-ordered CSI frames in (N, A, K) layout.

    ``pairs[a]`` is the (rx, tx) pair of row ``a``; ``subcarriers[k]`` is the
    source subcarrier id of column ``k``.
    """

    timestamps: np.ndarray
    csi: np.ndarray
    pairs: List[Tuple[int, int]]
    subcarriers: np.ndarray
    labels: Dict[str, np.ndarray]
    session_id: str = ""
    user_id: str = ""
    freqs: Optional[np.ndarray] = None
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.csi = np.asarray(self.csi)
        self.subcarriers = np.asarray(self.subcarriers, dtype=np.int64)
        self.pairs = [tuple(int(v) for v in p) for p in self.pairs]
        if self.csi.ndim != 3 or self.csi.shape[0] != self.timestamps.size:
            raise ConfigError("csi must have shape (N, A, K) matching timestamps")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ConfigError("frames must be strictly time-ordered")
        if len(self.pairs) != self.csi.shape[1] or self.subcarriers.size != self.csi.shape[2]:
            raise ConfigError("pair/subcarrier tables disagree with csi shape")

    @property
    def n_frames(self) -> int:
        return self.timestamps.size


def synth_csi(scene: MultipathScene, grid: SamplingGrid, noise: NoiseConfig,
              session_id: str = "", user_id: str = "") -> CsiRecording:
    """Sum path responses over the grid and add complex AWGN."""
    t = grid.packet_times
    f = grid.subcarrier_freqs
    labels = scene.labels_at(t)
    steer_gains = grid.pair_gains.reshape(-1)
    h = np.zeros((t.size, grid.n_rx * grid.n_tx, f.size), dtype=complex)
    for path in scene.paths:
        resp = path_response(path, f, t, seed=noise.rng_seed)            # (N, K)
        spatial = np.repeat(path.steering(grid.n_rx), grid.n_tx) * steer_gains  # (A,)
        h += resp[:, None, :] * spatial[None, :, None]
    if noise.timing_offset_std > 0:
        jitter = rng_for(noise.rng_seed, TIMING_STREAM).normal(0.0, noise.timing_offset_std, t.size)
        h *= np.exp(-2j * np.pi * np.outer(jitter, f))[:, None, :]
    if noise.sigma2 > 0:
        rng = rng_for(noise.rng_seed, NOISE_STREAM)
        scale = math.sqrt(noise.sigma2 / 2)
        h = h + scale * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
    return CsiRecording(timestamps=t.copy(), csi=h, pairs=grid.pairs,
                        subcarriers=np.arange(f.size), labels=labels,
                        session_id=session_id, user_id=user_id, freqs=f.copy(),
                        meta={"scene_kind": scene.kind, "seed": noise.rng_seed})


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

NS = 1e-9
CARRIER = 5.32e9
USER_SALT = 0x5D9  # body parameters depend on the user index only
ROOM_SALT = 0x2A7  # static geometry depends on the room index only

PRESET_KINDS = ("static-empty", "presence", "gesture", "gait", "breathing")


def _room(room: int, phase: PhaseProcess) -> List[PathComponent]:
    rng = np.random.default_rng(derive_seed(ROOM_SALT, room))
    paths = [PathComponent(alpha=1.0, tau0=rng.uniform(10, 20) * NS,
                           phase=phase, aoa=rng.uniform(-0.3, 0.3))]
    for _ in range(2):
        paths.append(PathComponent(
            alpha=rng.uniform(0.3, 0.5) * np.exp(1j * rng.uniform(0, 2 * np.pi)),
            tau0=rng.uniform(30, 70) * NS, phase=phase,
            aoa=rng.uniform(-1.2, 1.2)))
    return paths


def _body(user: int) -> dict:
    rng = np.random.default_rng(derive_seed(USER_SALT, user))
    return {"reflectivity": rng.uniform(0.28, 0.36),
            "tau0": rng.uniform(28, 32) * NS,
            "aoa": rng.uniform(-0.3, 0.3),
            "speed_scale": rng.uniform(0.9, 1.1)}


def gesture_family(class_id: int, n_classes: int) -> dict:
    """Class-defining parameters of a repeated push-pull motion.

    Class ``c`` moves ``c + 1`` body parts (finger, hand, forearm, ...); each
    part follows its own piecewise-linear delay schedule, with a delay slope
    (speed) and a stroke/dwell rhythm that depend on the part index. Parts
    beyond the first reflect progressively more energy.
    """
    n_parts = 1 + class_id % 4 if n_classes <= 4 else 1 + (class_id * 4) // n_classes
    frac = class_id / max(n_classes - 1, 1)
    parts = []
    for p in range(n_parts):
        doppler = 0.4 * (1.7 ** p) * (1.0 + 0.15 * frac)
        parts.append({"slope": doppler / CARRIER,
                      "stroke": 1.2 + 0.5 * p,
                      "dwell": 0.3 + 0.2 * p,
                      "gain": 0.6 + 0.4 * p,
                      "tau_offset": (3.0 + 4.0 * p + 0.5 * class_id) * NS})
    return {"parts": parts}


def _stroke_breakpoints(slope: float, stroke: float, dwell: float,
                        duration: float, start: float) -> PiecewiseLinearDelay:
    times, offsets = [start], [0.0]
    t, sign = start, 1.0
    excursion = slope * stroke
    while t < start + duration:
        t += stroke
        times.append(t)
        offsets.append(excursion if sign > 0 else 0.0)
        t += dwell
        times.append(t)
        offsets.append(offsets[-1])
        sign = -sign
    return PiecewiseLinearDelay(tuple(times), tuple(offsets))


def scene_preset(kind: str, params: Optional[dict] = None, seed: int = 0) -> MultipathScene:
    """Desk-scale stand-in scenes for the detection, recognition and vital tasks.

    ``params`` keys: ``user`` (body index, default 0), ``room`` (static
    geometry index, default 0), ``duration`` (s, default
    120), ``cpe_std`` (common phase walk std per packet, rad, default 0.3),
    plus ``class_id``/``n_classes`` for gesture, ``user_id``/``n_users`` for
    gait and ``rate_hz`` for breathing.
    """
    params = dict(params or {})
    if kind not in PRESET_KINDS:
        raise ConfigError(f"unknown scene kind {kind!r}; expected one of {PRESET_KINDS}")
    rng = rng_for(seed, 11)
    cpe = float(params.get("cpe_std", 0.3))
    phase: PhaseProcess = RandomWalkPhase(cpe) if cpe > 0 else ZeroPhase()
    duration = float(params.get("duration", 120.0))
    body = _body(int(params.get("user", 0)))
    paths = _room(int(params.get("room", 0)), phase)
    body_alpha = body["reflectivity"] * np.exp(1j * rng.uniform(0, 2 * np.pi))
    start_phase = rng.uniform(0, 2 * np.pi)

    if kind == "static-empty":
        label = LabelInterval(0.0, math.inf, presence=False)
    elif kind == "presence":
        freq = rng.uniform(0.15, 0.6) * body["speed_scale"]
        amp = rng.uniform(0.5, 1.5) * NS
        paths.append(PathComponent(alpha=body_alpha, tau0=body["tau0"],
                                   delay=SinusoidalDelay(amp, freq, start_phase),
                                   phase=phase, aoa=body["aoa"]))
        label = LabelInterval(0.0, math.inf, presence=True)
    elif kind == "gesture":
        class_id = int(params["class_id"])
        n_classes = int(params.get("n_classes", 6))
        if not 0 <= class_id < n_classes:
            raise ConfigError("class_id must lie in [0, n_classes)")
        fam = gesture_family(class_id, n_classes)
        for i, part in enumerate(fam["parts"]):
            period = part["stroke"] + part["dwell"]
            delay = _stroke_breakpoints(part["slope"] * body["speed_scale"] * rng.uniform(0.95, 1.05),
                                        part["stroke"], part["dwell"], duration + 10.0,
                                        -rng.uniform(0, period))
            alpha = part["gain"] * body["reflectivity"] * np.exp(1j * rng.uniform(0, 2 * np.pi))
            paths.append(PathComponent(alpha=alpha, tau0=body["tau0"] + part["tau_offset"],
                                       delay=delay, phase=phase, aoa=body["aoa"] + 0.15 * (i + 1)))
        label = LabelInterval(0.0, math.inf, presence=True, activity=class_id)
    elif kind == "gait":
        user_id = int(params["user_id"])
        n_users = int(params.get("n_users", 6))
        if not 0 <= user_id < n_users:
            raise ConfigError("user_id must lie in [0, n_users)")
        frac = user_id / max(n_users - 1, 1)
        cadence = 0.6 + 0.8 * frac
        amp = (0.4 + 0.8 * (1 - frac)) * NS
        paths.append(PathComponent(alpha=body_alpha, tau0=body["tau0"],
                                   delay=SinusoidalDelay(amp, cadence, start_phase),
                                   phase=phase, aoa=body["aoa"]))
        label = LabelInterval(0.0, math.inf, presence=True, activity=user_id)
    else:  # breathing
        rate = float(params["rate_hz"])
        if not rate > 0:
            raise ConfigError("breathing rate must be > 0")
        chest = rng.uniform(4e-3, 6e-3)               # chest displacement (m)
        amp = 2 * chest / SPEED_OF_LIGHT
        paths.append(PathComponent(alpha=body_alpha, tau0=body["tau0"],
                                   delay=SinusoidalDelay(amp, rate, start_phase),
                                   phase=phase, aoa=body["aoa"]))
        label = LabelInterval(0.0, math.inf, presence=True, vitals=rate)
    return MultipathScene(paths=paths, kind=kind, schedule=[label],
                          params={"kind": kind, **params, "seed": int(seed)})
