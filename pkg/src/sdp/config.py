"""
Strict JSON pipeline configuration.

One document carries every stage setting plus the master seed::

    {"version": 1, "seed": 992, "output_dir": "out",
     "scene": {"kind": "presence", "params": {"user": 0}},
     "grid": {...}, "noise": {...}, "adapter": null,
     "window": {...}, "features": {...}, "cp": {...}, "pooling": {...},
     "train": {...}, "bench": {...}}

Every section is optional and falls back to the library defaults, but
unknown keys anywhere are errors.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .bench import BenchConfig
from .channel import PRESET_KINDS
from .cpals import CpConfig
from .errors import ConfigError
from .mtl import TrainConfig
from .pipeline import DatasetSpec, FeatureConfig
from .pooling import LAYOUT_VERSION
from .schema import AdapterDescriptor, WindowConfig

CONFIG_VERSION = 1


def _default_of(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
        return f.default_factory()  # type: ignore[misc]
    return dataclasses.MISSING


def build_strict(cls, data: Any, where: str, skip=()):
    """Construct dataclass ``cls`` from a mapping, rejecting unknown keys.

    List values land in tuple-typed fields as tuples (judged by the field
    default), so that ``to_dict``/``build_strict`` round-trips compare equal.
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        default = _default_of(fields[name])
        if isinstance(default, tuple) and isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    return obj


@dataclass(frozen=True)
class SceneSection:
    kind: str = "presence"
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PRESET_KINDS:
            raise ConfigError(f"scene.kind must be one of {PRESET_KINDS}")


@dataclass(frozen=True)
class GridSection:
    n_rx: int = 3
    n_tx: int = 1
    n_subcarriers: int = 30
    center_freq: float = 5.32e9
    spacing: float = 1.25e6
    packet_rate: float = 20.0
    n_packets: int = 400
    t0: float = 0.0


@dataclass(frozen=True)
class NoiseSection:
    sigma2: float = 1e-3
    timing_offset_std: float = 0.0


@dataclass(frozen=True)
class FeatureSection:
    view: str = "amp+phase-diff"
    use_cpals: bool = True


@dataclass(frozen=True)
class PoolingSection:
    layout_version: str = LAYOUT_VERSION

    def __post_init__(self):
        if self.layout_version != LAYOUT_VERSION:
            raise ConfigError(f"pooling layout {self.layout_version!r} is not supported "
                              f"(this build writes {LAYOUT_VERSION!r})")


@dataclass(frozen=True)
class BenchSection:
    task: str = "gesture"
    seeds: tuple = (992, 863, 702, 443, 542)
    repeats: int = 10
    variants: tuple = ("full", "no-cpals", "no-phase")
    test_users: int = 3
    val_fraction: float = 0.2
    label_fractions: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)
    efficiency_repeats: int = 1
    latency_windows: int = 24
    warmup: int = 3
    dataset: Dict[str, Any] = field(default_factory=dict)


def _window_from(d) -> WindowConfig:
    return build_strict(WindowConfig, {"length": 64, "stride": 32, **(d or {})}, "window")


def _cp_from(d) -> CpConfig:
    base = {"rank": 8, "max_sweeps": 15, "rel_tol": 1e-6, "init": "hosvd"}
    return build_strict(CpConfig, {**base, **(d or {})}, "cp")


@dataclass
class PipelineConfig:
    version: int = CONFIG_VERSION
    seed: Optional[int] = None
    output_dir: str = "sdp-out"
    scene: SceneSection = field(default_factory=SceneSection)
    grid: GridSection = field(default_factory=GridSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    adapter: Optional[AdapterDescriptor] = None
    window: WindowConfig = field(default_factory=lambda: _window_from(None))
    features: FeatureSection = field(default_factory=FeatureSection)
    cp: CpConfig = field(default_factory=lambda: _cp_from(None))
    pooling: PoolingSection = field(default_factory=PoolingSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    bench: BenchSection = field(default_factory=BenchSection)

    # ---- derived stage configs -------------------------------------------------

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(view=self.features.view, window=self.window, cp=self.cp,
                             use_cpals=self.features.use_cpals)

    def dataset_spec(self) -> DatasetSpec:
        return build_strict(DatasetSpec, {"task": self.bench.task, **self.bench.dataset},
                            "bench.dataset")

    def bench_config(self) -> BenchConfig:
        b = self.bench
        return BenchConfig(task=b.task, seeds=b.seeds, repeats=b.repeats, variants=b.variants,
                           dataset=self.dataset_spec(), features=self.feature_config(),
                           train=self.train, test_users=b.test_users,
                           val_fraction=b.val_fraction, label_fractions=b.label_fractions,
                           efficiency_repeats=b.efficiency_repeats,
                           latency_windows=b.latency_windows, warmup=b.warmup)

    # ---- (de)serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        out = {f.name: _plain(getattr(self, f.name)) for f in dataclasses.fields(self)}
        out["adapter"] = None if self.adapter is None else self.adapter.to_dict()
        out["train"] = self.train.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown top-level keys {unknown}")
        if "version" not in d:
            raise ConfigError("config is missing the 'version' field")
        if d["version"] != CONFIG_VERSION:
            raise ConfigError(f"config version {d['version']!r} is not supported "
                              f"(expected {CONFIG_VERSION})")
        seed = d.get("seed")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
            raise ConfigError("seed must be a non-negative integer or null")
        out = cls(version=CONFIG_VERSION, seed=seed,
                  output_dir=str(d.get("output_dir", "sdp-out")),
                  scene=build_strict(SceneSection, d.get("scene"), "scene"),
                  grid=build_strict(GridSection, d.get("grid"), "grid"),
                  noise=build_strict(NoiseSection, d.get("noise"), "noise"),
                  adapter=None if d.get("adapter") is None else AdapterDescriptor.from_dict(d["adapter"]),
                  window=_window_from(d.get("window")),
                  features=build_strict(FeatureSection, d.get("features"), "features"),
                  cp=_cp_from(d.get("cp")),
                  pooling=build_strict(PoolingSection, d.get("pooling"), "pooling"),
                  train=build_strict(TrainConfig, d.get("train"), "train"),
                  bench=build_strict(BenchSection, d.get("bench"), "bench"))
        out.feature_config()  # validates the view name
        return out

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: Optional[str]) -> "PipelineConfig":
        if path is None:
            return cls()
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
