"""
Evaluation harness: cross-user splits, metrics, repeated seeded runs and the
report files built from them.

Reports split into a deterministic part (``records.csv``, ``summary.json``,
``confusion_mean.csv``, ``confusion_std.csv``, ``label_efficiency.csv``) and
wall-clock measurements (``latency.csv``, ``timings.csv``), so that two runs
with the same configuration agree byte for byte on the former.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, SdpError
from .mtl import MultiTaskModel, TrainConfig, forward, predict, train
from .pipeline import DatasetSpec, FeatureConfig, describe, featurize, generate_recordings, subset
from .schema import SessionStats, window
from .seeding import derive_seed, rng_for
from .stats import aggregate_stats, brown_forsythe, paired_t_test, var_drop

BENCH_SEEDS = (992, 863, 702, 443, 542)
VARIANTS = ("full", "no-cpals", "no-phase")
LABEL_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
TASK_OF = {"presence": "detection", "gesture": "recognition", "gait": "recognition",
           "breathing": "vitals"}
LATENCY_STAGES = ("preprocess", "cp_als", "pool", "encode+head", "end_to_end")

# derived-seed stream indices
_VAL_STREAM = 41
_SHUFFLE_STREAM = 202
_SUBSAMPLE_STREAM = 303


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    """Hold out ``holdout`` users for test; a seeded share of the rest validates."""

    holdout: Tuple[str, ...]
    val_fraction: float = 0.2
    seed: int = 0
    unit: str = "user"

    def __post_init__(self):
        if self.unit != "user":
            raise ConfigError("only user-level splits are supported")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if not self.holdout:
            raise ConfigError("at least one holdout user is required")


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    manifest: Dict[str, str]

    def manifest_json(self) -> str:
        return json.dumps(self.manifest, sort_keys=True)


def _unique_in_order(values) -> List[str]:
    seen: Dict[str, None] = {}
    for v in values:
        seen.setdefault(str(v), None)
    return list(seen)


def split_cross_user(users, plan: SplitPlan) -> Split:
    """Partition block indices by user id.

    ``users`` is the per-block user id array (or a dataset dict carrying
    one under ``"user"``). Validation users are drawn from the non-holdout
    users with a generator seeded by ``plan.seed``; at least one user is
    always left for training.
    """
    if isinstance(users, dict):
        users = users["user"]
    users = np.asarray([str(u) for u in users])
    distinct = _unique_in_order(users)
    if len(distinct) < 3:
        raise ConfigError(f"cross-user splits need >= 3 distinct users, got {len(distinct)}")
    missing = [u for u in plan.holdout if u not in distinct]
    if missing:
        raise ConfigError(f"holdout users not present: {missing}")
    rest = [u for u in distinct if u not in plan.holdout]
    n_val = int(round(plan.val_fraction * len(rest)))
    if plan.val_fraction > 0:
        n_val = max(n_val, 1)
    if len(rest) - n_val < 1:
        raise ConfigError("not enough users left for training after the holdout and validation splits")
    perm = rng_for(plan.seed, _VAL_STREAM).permutation(len(rest))
    val_users = {rest[i] for i in perm[:n_val]}
    manifest = {}
    for u in distinct:
        manifest[u] = "test" if u in plan.holdout else ("val" if u in val_users else "train")
    role = np.array([manifest[u] for u in users])
    return Split(train=np.flatnonzero(role == "train"), val=np.flatnonzero(role == "val"),
                 test=np.flatnonzero(role == "test"), manifest=manifest)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def _pair(preds, labels):
    p, y = np.asarray(preds), np.asarray(labels)
    if p.shape != y.shape:
        raise ConfigError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    if p.size == 0:
        raise ConfigError("metrics need at least one sample")
    return p, y


def top1(preds, labels) -> float:
    p, y = _pair(preds, labels)
    return float(np.mean(p == y))


def macro_f1(preds, labels, n_classes: int) -> float:
    """Mean per-class F1; classes absent from both predictions and labels are skipped."""
    p, y = _pair(preds, labels)
    scores = []
    for c in range(n_classes):
        tp = int(np.sum((p == c) & (y == c)))
        fp = int(np.sum((p == c) & (y != c)))
        fn = int(np.sum((p != c) & (y == c)))
        if tp + fp + fn == 0:
            continue
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores)) if scores else 0.0


def mae(preds, labels) -> float:
    p, y = _pair(preds, labels)
    return float(np.mean(np.abs(p.astype(float) - y.astype(float))))


def mse(preds, labels) -> float:
    p, y = _pair(preds, labels)
    return float(np.mean((p.astype(float) - y.astype(float)) ** 2))


class Confusion(NamedTuple):
    matrix: np.ndarray
    empty_rows: np.ndarray


def confusion(preds, labels, n_classes: int) -> Confusion:
    """Row-normalized confusion matrix; rows without support stay zero and are flagged."""
    if n_classes < 2:
        raise ConfigError("confusion needs at least two classes")
    p, y = _pair(preds, labels)
    if np.any(y < 0) or np.any(y >= n_classes) or np.any(p < 0) or np.any(p >= n_classes):
        raise ConfigError(f"class index outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes))
    np.add.at(counts, (y.astype(int), p.astype(int)), 1.0)
    support = counts.sum(axis=1)
    empty = support == 0
    out = np.zeros_like(counts)
    out[~empty] = counts[~empty] / support[~empty, None]
    return Confusion(out, empty)


def confusion_std(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise (population) std across runs."""
    stack = np.asarray([np.asarray(m, dtype=float) for m in matrices])
    if stack.ndim != 3 or stack.shape[0] == 0:
        raise ConfigError("confusion_std needs a non-empty list of square matrices")
    return stack.std(axis=0)


def clip_aggregate(preds, clip_ids) -> Dict[str, int]:
    """Majority vote per clip; ties go to the lowest class index."""
    preds = np.asarray(preds)
    clip_ids = np.asarray([str(c) for c in clip_ids])
    if preds.shape != clip_ids.shape:
        raise ConfigError("every window prediction needs a clip id")
    out = {}
    for clip in _unique_in_order(clip_ids):
        votes = preds[clip_ids == clip].astype(int)
        if votes.size == 0:
            raise ConfigError(f"clip {clip!r} has no windows")
        if np.any(votes < 0):
            raise ConfigError("clip votes must be class indices")
        out[clip] = int(np.argmax(np.bincount(votes)))
    return out


def task_metrics(task: str, preds, labels, n_classes: int) -> Dict[str, float]:
    if task == "vitals":
        return {"mae": mae(preds, labels), "mse": mse(preds, labels)}
    C = n_classes if task == "recognition" else 2
    return {"top1": top1(preds, labels), "macro_f1": macro_f1(preds, labels, C)}


def primary_metric(task: str) -> str:
    return "mae" if task == "vitals" else "top1"


# --------------------------------------------------------------------------
# label efficiency
# --------------------------------------------------------------------------

def stratified_subsample(labels, fraction: float, seed: int, stratify: bool = True) -> np.ndarray:
    """Sorted positions of a seeded per-class subsample of ``labels``.

    Each class keeps ``round(fraction * count)`` members (half up); the full
    fraction returns every position in order.
    """
    if not 0 < fraction <= 1:
        raise ConfigError("training fractions must lie in (0, 1]")
    labels = np.asarray(labels)
    if fraction == 1:
        return np.arange(labels.size)
    rng = rng_for(seed, _SUBSAMPLE_STREAM)
    groups = [np.arange(labels.size)] if not stratify else \
        [np.flatnonzero(labels == c) for c in np.unique(labels)]
    keep = []
    for g in groups:
        k = int(math.floor(fraction * g.size + 0.5))
        if k == 0:
            raise ConfigError(f"fraction {fraction} leaves a class with no training samples")
        keep.append(np.sort(rng.choice(g, size=k, replace=False)))
    return np.sort(np.concatenate(keep))


@dataclass
class EfficiencyPoint:
    fraction: float
    n_train: int
    values: List[float]

    def row(self) -> dict:
        s = aggregate_stats(self.values) if len(self.values) >= 2 else None
        mean = float(np.mean(self.values))
        return {"fraction": self.fraction, "n_train": self.n_train, "n_runs": len(self.values),
                "mean": mean, "std": s.std if s else 0.0,
                "ci95_low": s.ci95[0] if s else mean, "ci95_high": s.ci95[1] if s else mean}


def _fit_and_score(data: dict, split: Split, train_idx: np.ndarray, cfg: TrainConfig,
                   task: str) -> Tuple[MultiTaskModel, np.ndarray]:
    res = train(subset(data, train_idx), cfg,
                subset(data, split.val) if split.val.size else None)
    return res.model, predict(res.model, data["h"][split.test])[task]


def label_efficiency(data: dict, split: Split, cfg: TrainConfig, task: str,
                     fractions: Sequence[float] = LABEL_FRACTIONS,
                     seeds: Sequence[int] = (0,)) -> List[EfficiencyPoint]:
    """Retrain on seeded stratified subsets of the training split, nothing else changed."""
    fractions = sorted(float(f) for f in fractions)
    metric = primary_metric(task)
    points = []
    for frac in fractions:
        values, sizes = [], []
        for s in seeds:
            idx = split.train[stratified_subsample(data[task][split.train], frac, s,
                                                   stratify=task != "vitals")]
            _, pred = _fit_and_score(data, split, idx, cfg, task)
            values.append(task_metrics(task, pred, data[task][split.test], cfg.n_classes)[metric])
            sizes.append(idx.size)
        points.append(EfficiencyPoint(frac, int(round(np.mean(sizes))), values))
    return points


def efficiency_is_monotone(rows: Sequence[dict], higher_is_better: bool = True) -> bool:
    """Each step's mean must not fall past the previous point's CI95 bound."""
    for prev, cur in zip(rows, rows[1:]):
        if higher_is_better and cur["mean"] < prev["ci95_low"]:
            return False
        if not higher_is_better and cur["mean"] > prev["ci95_high"]:
            return False
    return True


# --------------------------------------------------------------------------
# latency
# --------------------------------------------------------------------------

def nearest_rank(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ``ceil(q/100 * n)``-th smallest value."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ConfigError("percentile of an empty sample")
    if not 0 < q <= 100:
        raise ConfigError("percentile level must lie in (0, 100]")
    return float(x[max(int(math.ceil(q / 100.0 * x.size)), 1) - 1])


def latency_profile(blocks, stats: SessionStats, features: FeatureConfig,
                    model: MultiTaskModel, warmup: int = 3, min_samples: int = 20,
                    clock: Callable[[], float] = time.perf_counter) -> Dict[str, dict]:
    """Per-stage p50/p90 (ms) over single-window runs after ``warmup`` discarded ones."""
    if warmup < 3:
        raise ConfigError("at least three warm-up iterations are required")
    blocks = list(blocks)
    if len(blocks) - warmup < min_samples:
        raise ConfigError(f"latency profiling needs >= {min_samples} timed windows after warm-up")
    samples = {s: [] for s in LATENCY_STAGES}
    for i, b in enumerate(blocks):
        stages: dict = {}
        t0 = clock()
        h, _ = describe(b, stats, features, stages)
        t1 = clock()
        forward(model, h[None, :])
        t2 = clock()
        if i < warmup:
            continue
        for s in ("preprocess", "cp_als", "pool"):
            samples[s].append(stages[s] * 1e3)
        samples["encode+head"].append((t2 - t1) * 1e3)
        samples["end_to_end"].append((t2 - t0) * 1e3)
    return {s: {"p50_ms": nearest_rank(v, 50), "p90_ms": nearest_rank(v, 90),
                "max_ms": float(max(v)), "n": len(v)} for s, v in samples.items()}


# --------------------------------------------------------------------------
# benchmark runs
# --------------------------------------------------------------------------

def variant_features(base: FeatureConfig, variant: str) -> FeatureConfig:
    """Feature settings for an ablation variant of ``base``."""
    if variant == "full":
        return base
    if variant == "no-cpals":
        return replace(base, use_cpals=False)
    if variant == "no-phase":
        return replace(base, view="amp+phase")
    raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


@dataclass
class BenchConfig:
    task: str = "gesture"
    seeds: Tuple[int, ...] = BENCH_SEEDS
    repeats: int = 10
    variants: Tuple[str, ...] = VARIANTS
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    test_users: int = 3
    val_fraction: float = 0.2
    label_fractions: Tuple[float, ...] = LABEL_FRACTIONS
    efficiency_repeats: int = 1
    latency_windows: int = 24
    warmup: int = 3
    baseline_pairs: Tuple[Tuple[str, str], ...] = (("full", "no-phase"), ("full", "no-cpals"))

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.variants = tuple(self.variants)
        self.label_fractions = tuple(float(f) for f in self.label_fractions)
        self.baseline_pairs = tuple(tuple(p) for p in self.baseline_pairs)
        if self.task not in TASK_OF:
            raise ConfigError(f"unknown task {self.task!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.repeats < 1 or self.efficiency_repeats < 0:
            raise ConfigError("repeats must be >= 1")
        if not self.variants:
            raise ConfigError("at least one variant is required")
        for v in self.variants:
            variant_features(self.features, v)
        if self.dataset.task != self.task:
            self.dataset = replace(self.dataset, task=self.task)
        if not 1 <= self.test_users <= self.dataset.n_users - 2:
            raise ConfigError(f"test_users must lie in [1, n_users - 2]; got {self.test_users} "
                              f"with {self.dataset.n_users} users")
        head = TASK_OF[self.task]
        if tuple(self.train.tasks) != (head,):
            self.train = replace(self.train, tasks=(head,))
        if head == "recognition" and self.train.n_classes != self.dataset.n_classes:
            self.train = replace(self.train, n_classes=self.dataset.n_classes)

    @property
    def head(self) -> str:
        return TASK_OF[self.task]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        for k in ("seeds", "variants", "label_fractions"):
            d[k] = list(d[k])
        d["baseline_pairs"] = [list(p) for p in self.baseline_pairs]
        return d


@dataclass
class BenchResult:
    config: BenchConfig
    records: List[dict]
    confusions: Dict[str, List[np.ndarray]]
    efficiency: List[dict]
    latency: Dict[str, dict]
    failures: List[dict]
    manifests: Dict[int, Dict[str, str]]
    wall_times: List[dict]

    def values(self, variant: str, metric: Optional[str] = None) -> List[float]:
        metric = metric or primary_metric(self.config.head)
        return [r["value"] for r in self.records if r["variant"] == variant and r["metric"] == metric]

    def summary(self) -> dict:
        cfg = self.config
        metric = primary_metric(cfg.head)
        variants = {}
        for v in cfg.variants:
            per_metric = {}
            for m in sorted({r["metric"] for r in self.records if r["variant"] == v}):
                vals = self.values(v, m)
                if len(vals) >= 2:
                    per_metric[m] = aggregate_stats(vals).to_dict()
                elif vals:
                    per_metric[m] = {"n": 1, "mean": vals[0], "std": 0.0}
            variants[v] = per_metric
        comparisons = {}
        for a, b in cfg.baseline_pairs:
            va, vb = self.values(a), self.values(b)
            if len(va) < 2 or len(vb) < 2:
                continue
            sa, sb = float(np.std(va, ddof=1)), float(np.std(vb, ddof=1))
            entry = {"metric": metric, "std_sdp": sa, "std_base": sb,
                     "var_drop": var_drop(sa, sb) if sb > 0 else None,
                     "brown_forsythe": brown_forsythe([va, vb]).to_dict()}
            keys_a = {(r["seed"], r["repeat"]): r["value"] for r in self.records
                      if r["variant"] == a and r["metric"] == metric}
            keys_b = {(r["seed"], r["repeat"]): r["value"] for r in self.records
                      if r["variant"] == b and r["metric"] == metric}
            common = sorted(set(keys_a) & set(keys_b))
            if len(common) >= 2:
                entry["paired_t"] = paired_t_test([keys_a[k] for k in common],
                                                  [keys_b[k] for k in common]).to_dict()
            comparisons[f"{a}_vs_{b}"] = entry
        return {"task": cfg.task, "head": cfg.head, "primary_metric": metric,
                "seeds": list(cfg.seeds), "repeats": cfg.repeats,
                "variants": variants, "comparisons": comparisons,
                "label_efficiency": self.efficiency,
                "label_efficiency_monotone": efficiency_is_monotone(
                    self.efficiency, higher_is_better=metric != "mae") if self.efficiency else None,
                "manifests": {str(k): v for k, v in self.manifests.items()},
                "failures": self.failures, "config": cfg.to_dict()}


def _holdout_for(users, n_test: int) -> Tuple[str, ...]:
    distinct = _unique_in_order(users)
    if n_test >= len(distinct) - 1:
        raise ConfigError(f"{n_test} test users leave too few of {len(distinct)} users for training")
    return tuple(distinct[-n_test:])


def run_benchmark(cfg: BenchConfig, log: Optional[Callable[[str], None]] = None) -> BenchResult:
    """Run every (seed, variant, repeat) in a fixed order.

    The seed fixes the synthetic dataset, the validation users and the model
    initialization; repeats change only the mini-batch shuffling stream. A
    failing variant or run is recorded and skipped.
    """
    say = log or (lambda msg: None)
    head = cfg.head
    records, failures, wall = [], [], []
    confusions: Dict[str, List[np.ndarray]] = {v: [] for v in cfg.variants}
    efficiency_acc: Dict[float, List[float]] = {f: [] for f in cfg.label_fractions}
    efficiency_n: Dict[float, List[int]] = {f: [] for f in cfg.label_fractions}
    manifests: Dict[int, Dict[str, str]] = {}
    latency: Dict[str, dict] = {}
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        recordings = generate_recordings(cfg.dataset, seed)
        wall.append({"seed": seed, "variant": "", "repeat": -1, "stage": "generate",
                     "seconds": time.perf_counter() - t0})
        for variant in cfg.variants:
            fcfg = variant_features(cfg.features, variant)
            try:
                t0 = time.perf_counter()
                data = featurize(recordings, fcfg)
                wall.append({"seed": seed, "variant": variant, "repeat": -1, "stage": "featurize",
                             "seconds": time.perf_counter() - t0})
                plan = SplitPlan(holdout=_holdout_for(data["user"], cfg.test_users),
                                 val_fraction=cfg.val_fraction, seed=seed)
                split = split_cross_user(data["user"], plan)
            except (SdpError, ArithmeticError) as exc:
                failures.append({"seed": seed, "repeat": None, "variant": variant,
                                 "error": f"{type(exc).__name__}: {exc}"})
                continue
            manifests[seed] = split.manifest
            y_test = data[head][split.test]
            for repeat in range(cfg.repeats):
                tcfg = replace(cfg.train, seed=seed,
                               shuffle_seed=derive_seed(seed, _SHUFFLE_STREAM, repeat))
                try:
                    t0 = time.perf_counter()
                    model, pred = _fit_and_score(data, split, split.train, tcfg, head)
                    wall.append({"seed": seed, "variant": variant, "repeat": repeat,
                                 "stage": "train+eval", "seconds": time.perf_counter() - t0})
                except (SdpError, ArithmeticError) as exc:
                    failures.append({"seed": seed, "repeat": repeat, "variant": variant,
                                     "error": f"{type(exc).__name__}: {exc}"})
                    continue
                metrics = task_metrics(head, pred, y_test, cfg.train.n_classes)
                if head != "vitals":
                    clips = clip_aggregate(pred, data["session"][split.test])
                    truth = clip_aggregate(y_test, data["session"][split.test])
                    metrics["clip_top1"] = top1(np.array([clips[c] for c in truth]),
                                                np.array(list(truth.values())))
                    C = cfg.train.n_classes if head == "recognition" else 2
                    confusions[variant].append(confusion(pred, y_test, C).matrix)
                for name in sorted(metrics):
                    records.append({"seed": seed, "repeat": repeat, "variant": variant,
                                    "task": head, "metric": name, "value": float(metrics[name])})
                say(f"seed={seed} variant={variant} repeat={repeat} "
                    + " ".join(f"{k}={v:.4f}" for k, v in sorted(metrics.items())))
                if variant == cfg.variants[0] and repeat < cfg.efficiency_repeats:
                    for frac in cfg.label_fractions:
                        idx = split.train[stratified_subsample(
                            data[head][split.train], frac, derive_seed(seed, repeat),
                            stratify=head != "vitals")]
                        if frac == 1.0:
                            p = pred
                        else:
                            _, p = _fit_and_score(data, split, idx, tcfg, head)
                        efficiency_acc[frac].append(
                            task_metrics(head, p, y_test, cfg.train.n_classes)[primary_metric(head)])
                        efficiency_n[frac].append(int(idx.size))
                if not latency and variant == cfg.variants[0] and repeat == 0:
                    latency = _profile_latency(recordings, data, split, fcfg, model, cfg)
    efficiency = [EfficiencyPoint(f, int(round(np.mean(efficiency_n[f]))), efficiency_acc[f]).row()
                  for f in cfg.label_fractions if efficiency_acc[f]]
    return BenchResult(cfg, records, confusions, efficiency, latency, failures, manifests, wall)


def _profile_latency(recordings, data, split, fcfg, model, cfg) -> Dict[str, dict]:
    test_users = {u for u, role in split.manifest.items() if role == "test"}
    blocks, stats = [], None
    for rec in recordings:
        if rec.user_id not in test_users:
            continue
        stats = SessionStats.from_recording(rec)
        blocks = window(rec, fcfg.window)
        if len(blocks) >= cfg.latency_windows + cfg.warmup:
            break
    need = cfg.latency_windows + cfg.warmup
    if stats is None or not blocks:
        return {}
    while len(blocks) < need:
        blocks = blocks + blocks
    return latency_profile(blocks[:need], stats, fcfg, model, warmup=cfg.warmup,
                           min_samples=cfg.latency_windows)


# --------------------------------------------------------------------------
# report files
# --------------------------------------------------------------------------

REPORT_FILES = ("records.csv", "summary.json", "confusion_mean.csv", "confusion_std.csv",
                "latency.csv", "label_efficiency.csv")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_reports(result: BenchResult, out_dir: str) -> Dict[str, str]:
    """Write the six report files; returns name -> path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in REPORT_FILES + ("timings.csv",)}
    _write_csv(paths["records.csv"], ("seed", "repeat", "variant", "task", "metric", "value"),
               [(r["seed"], r["repeat"], r["variant"], r["task"], r["metric"], r["value"])
                for r in result.records])
    with open(paths["summary.json"], "w") as fh:
        json.dump(_jsonable(result.summary()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    mean_rows, std_rows = [], []
    for v in result.config.variants:
        mats = result.confusions.get(v) or []
        if not mats:
            continue
        m, s = np.mean(mats, axis=0), confusion_std(mats)
        for i in range(m.shape[0]):
            for j in range(m.shape[1]):
                mean_rows.append((v, i, j, float(m[i, j])))
                std_rows.append((v, i, j, float(s[i, j])))
    _write_csv(paths["confusion_mean.csv"], ("variant", "true_class", "pred_class", "value"), mean_rows)
    _write_csv(paths["confusion_std.csv"], ("variant", "true_class", "pred_class", "value"), std_rows)
    _write_csv(paths["latency.csv"], ("stage", "p50_ms", "p90_ms", "max_ms", "n"),
               [(s, v["p50_ms"], v["p90_ms"], v["max_ms"], v["n"]) for s, v in result.latency.items()])
    _write_csv(paths["timings.csv"], ("seed", "variant", "repeat", "stage", "seconds"),
               [(w["seed"], w["variant"], w["repeat"], w["stage"], w["seconds"])
                for w in result.wall_times])
    eff_cols = ("fraction", "n_train", "n_runs", "mean", "std", "ci95_low", "ci95_high")
    _write_csv(paths["label_efficiency.csv"], eff_cols,
               [tuple(r[c] for c in eff_cols) for r in result.efficiency])
    return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj
