"""
Shared encoder, task heads and uncertainty-weighted multi-task training.

The encoder is two affine layers with layer normalization and GELU, acting
on the standardized pooled descriptor. Each task has a single affine head.
The objective is

    sum_t w_t * l_t / (2 sigma_t^2) + sum_t log sigma_t
        + lambda_align * MMD^2(z_src, z_tgt) + lambda_reg * sum_t ||W_t||^2

with ``sigma_t = exp(log_sigma_t)``. Gradients are computed by hand so the
whole model runs on numpy and stays bit-deterministic.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from .errors import ConfigError, NumericalError
from .seeding import rng_for

TASKS = ("detection", "recognition", "vitals")
LN_EPS = 1e-5
_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass
class TrainConfig:
    tasks: Tuple[str, ...] = TASKS
    n_classes: int = 4
    task_weights: Dict[str, float] = field(default_factory=dict)
    lambda_reg: float = 1e-4
    lambda_align: float = 0.0
    mmd_bandwidth: Optional[float] = None
    lr: float = 3e-3
    lr_floor: float = 1e-4
    epochs: int = 60
    batch_size: int = 32
    patience: int = 15
    hidden: int = 128
    seed: int = 0
    shuffle_seed: Optional[int] = None

    def __post_init__(self):
        self.tasks = tuple(self.tasks)
        unknown = set(self.tasks) - set(TASKS)
        if unknown or not self.tasks:
            raise ConfigError(f"tasks must be a non-empty subset of {TASKS}")
        if any(w < 0 for w in self.task_weights.values()):
            raise ConfigError("task weights must be >= 0")
        if self.lambda_reg < 0 or self.lambda_align < 0:
            raise ConfigError("regularization weights must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.hidden < 1:
            raise ConfigError("epochs, batch_size and hidden must be >= 1")
        if "recognition" in self.tasks and self.n_classes < 2:
            raise ConfigError("recognition needs n_classes >= 2")

    def weight(self, task: str) -> float:
        return float(self.task_weights.get(task, 1.0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tasks"] = list(self.tasks)
        return d


def head_width(task: str, n_classes: int) -> int:
    return {"detection": 2, "recognition": n_classes, "vitals": 1}[task]


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------

@dataclass
class MultiTaskModel:
    params: Dict[str, np.ndarray]
    tasks: Tuple[str, ...]
    n_classes: int
    input_mean: np.ndarray
    input_std: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.params["enc.W1"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["enc.W1"].shape[1]

    def sigma(self, task: str) -> float:
        return float(np.exp(self.params[f"logsigma.{task}"][0]))

    def copy(self) -> "MultiTaskModel":
        return copy.deepcopy(self)


def init_model(in_dim: int, tasks: Sequence[str], n_classes: int = 4, hidden: int = 128,
               seed: int = 0, input_mean=None, input_std=None) -> MultiTaskModel:
    rng = rng_for(seed, 31)
    p = {
        "enc.W1": rng.standard_normal((in_dim, hidden)) * math.sqrt(2.0 / in_dim),
        "enc.b1": np.zeros(hidden), "enc.g1": np.ones(hidden), "enc.beta1": np.zeros(hidden),
        "enc.W2": rng.standard_normal((hidden, hidden)) * math.sqrt(2.0 / hidden),
        "enc.b2": np.zeros(hidden), "enc.g2": np.ones(hidden), "enc.beta2": np.zeros(hidden),
    }
    for task in tasks:
        out = head_width(task, n_classes)
        p[f"{task}.W"] = rng.standard_normal((hidden, out)) * math.sqrt(1.0 / hidden)
        p[f"{task}.b"] = np.zeros(out)
        p[f"logsigma.{task}"] = np.zeros(1)
    mean = np.zeros(in_dim) if input_mean is None else np.asarray(input_mean, dtype=float)
    std = np.ones(in_dim) if input_std is None else np.asarray(input_std, dtype=float)
    return MultiTaskModel(params=p, tasks=tuple(tasks), n_classes=n_classes,
                          input_mean=mean, input_std=std)


def _gelu(x):
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return x * cdf, cdf


def _layer_norm(u, g, beta):
    mu = u.mean(axis=-1, keepdims=True)
    var = u.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (u - mu) * inv
    return xhat * g + beta, (xhat, inv)


def _layer_norm_back(dout, g, cache):
    xhat, inv = cache
    dxhat = dout * g
    du = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return du, (dout * xhat).sum(axis=0), dout.sum(axis=0)


def _encode(model: MultiTaskModel, h: np.ndarray):
    p = model.params
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[None, :]
    if h.shape[1] != model.in_dim:
        raise ConfigError(f"descriptor width {h.shape[1]} does not match encoder input {model.in_dim}")
    x = (h - model.input_mean) / model.input_std
    u1 = x @ p["enc.W1"] + p["enc.b1"]
    n1, ln1 = _layer_norm(u1, p["enc.g1"], p["enc.beta1"])
    a1, cdf1 = _gelu(n1)
    u2 = a1 @ p["enc.W2"] + p["enc.b2"]
    n2, ln2 = _layer_norm(u2, p["enc.g2"], p["enc.beta2"])
    z, cdf2 = _gelu(n2)
    cache = dict(x=x, n1=n1, ln1=ln1, cdf1=cdf1, a1=a1, n2=n2, ln2=ln2, cdf2=cdf2)
    return z, cache


def forward(model: MultiTaskModel, h: np.ndarray) -> Dict[str, np.ndarray]:
    """Return ``{"z": (B, hidden), task: head output}``; vitals are shape (B,)."""
    z, _ = _encode(model, h)
    out = {"z": z}
    for task in model.tasks:
        y = z @ model.params[f"{task}.W"] + model.params[f"{task}.b"]
        out[task] = y[:, 0] if task == "vitals" else y
    return out


def predict(model: MultiTaskModel, h: np.ndarray) -> Dict[str, np.ndarray]:
    """Class index per row (argmax, ties to the lowest index) or rate in Hz."""
    out = forward(model, h)
    return {t: (out[t] if t == "vitals" else np.argmax(out[t], axis=1)) for t in model.tasks}


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def _log_softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    s = logits - m
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def label_mask(task: str, y: np.ndarray) -> np.ndarray:
    """Rows that carry a label: class >= 0, or a finite rate."""
    y = np.asarray(y)
    if task == "vitals":
        return np.isfinite(y.astype(float))
    return y.astype(np.int64) >= 0


def task_loss(task: str, yhat: np.ndarray, y: np.ndarray) -> float:
    """Softmax cross-entropy (classification) or MSE in Hz^2 (vitals), batch mean."""
    return _task_loss_grad(task, np.asarray(yhat, dtype=float), np.asarray(y))[0]


def _task_loss_grad(task, yhat, y):
    if task == "vitals":
        diff = yhat.reshape(-1) - y.astype(float)
        n = diff.size
        return float(diff @ diff / n), (2.0 / n) * diff
    y = y.astype(np.int64)
    if np.any(y < 0) or np.any(y >= yhat.shape[1]):
        raise ConfigError(f"{task} label out of class range [0, {yhat.shape[1]})")
    logp = _log_softmax(yhat)
    n = y.size
    loss = -float(logp[np.arange(n), y].sum() / n)
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    return loss, grad / n


def median_bandwidth(zs: np.ndarray) -> float:
    d = _pairwise_dist(zs)
    iu = np.triu_indices(zs.shape[0], k=1)
    if iu[0].size == 0:
        return 0.0
    return float(np.median(d[iu]))


def _pairwise_dist(Z):
    sq = (Z * Z).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * Z @ Z.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def mmd(z_source: np.ndarray, z_target: np.ndarray, bandwidth: Optional[float] = None) -> float:
    """Biased squared MMD with a Gaussian kernel (median-heuristic bandwidth)."""
    return _mmd_grad(np.asarray(z_source, float), np.asarray(z_target, float), bandwidth, False)[0]


def _mmd_grad(X, Y, bandwidth, want_grad=True):
    m, n = X.shape[0], Y.shape[0]
    if m == 0 or n == 0:
        raise ConfigError("mmd needs non-empty batches")
    Z = np.vstack([X, Y])
    diff = Z[:, None, :] - Z[None, :, :]
    D2 = (diff * diff).sum(axis=-1)
    iu = np.triu_indices(m + n, k=1)
    heuristic = bandwidth is None
    if heuristic:
        dist = np.sqrt(D2[iu])
        bw = float(np.median(dist)) if dist.size else 0.0
    else:
        bw = float(bandwidth)
    if not bw > 0:
        return 0.0, np.zeros_like(Z)
    K = np.exp(-D2 / (2.0 * bw * bw))
    c = np.empty((m + n, m + n))
    c[:m, :m] = 1.0 / (m * m)
    c[m:, m:] = 1.0 / (n * n)
    c[:m, m:] = c[m:, :m] = -1.0 / (m * n)
    value = float((c * K).sum())
    if not want_grad:
        return value, None
    CK = c * K
    grad = -2.0 / (bw * bw) * (CK.sum(axis=1)[:, None] * Z - CK @ Z)
    if heuristic:
        dval_dbw = float((CK * D2).sum()) / bw ** 3
        # median of pair distances: gradient flows through the middle pair(s)
        order = np.argsort(dist, kind="stable")
        cnt = dist.size
        mids = [order[cnt // 2]] if cnt % 2 else [order[cnt // 2 - 1], order[cnt // 2]]
        for idx in mids:
            i, j = iu[0][idx], iu[1][idx]
            if dist[idx] > 0:
                g = (Z[i] - Z[j]) / dist[idx] / len(mids) * dval_dbw
                grad[i] += g
                grad[j] -= g
    return value, grad


def _zero_like(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def loss_and_grads(model: MultiTaskModel, batch: dict, cfg: TrainConfig,
                   want_grad: bool = True) -> Tuple[float, Dict[str, np.ndarray], dict]:
    """Total loss, gradients for every parameter, and per-task diagnostics.

    ``batch`` holds ``"h"`` (B, D), one label array per enabled task and,
    when alignment is on, ``"domain"`` (0 = source, 1 = target). Rows whose
    label is missing (class -1 or NaN rate) are skipped for that task.
    """
    p = model.params
    z, cache = _encode(model, batch["h"])
    grads = _zero_like(p) if want_grad else None
    dz = np.zeros_like(z)
    total = 0.0
    parts = {}
    for task in cfg.tasks:
        if task not in model.tasks:
            raise ConfigError(f"model has no head for task {task!r}")
        if task not in batch:
            raise ConfigError(f"batch is missing labels for enabled task {task!r}")
        y = np.asarray(batch[task])
        rows = label_mask(task, y)
        if not rows.any():
            continue
        W, b = p[f"{task}.W"], p[f"{task}.b"]
        zr = z[rows]
        yhat = zr @ W + b
        loss, dyhat = _task_loss_grad(task, yhat if task != "vitals" else yhat[:, 0], y[rows])
        if task == "vitals":
            dyhat = dyhat[:, None]
        s = float(p[f"logsigma.{task}"][0])
        coef = cfg.weight(task) * 0.5 * math.exp(-2.0 * s)
        total += coef * loss + s
        parts[task] = loss
        if want_grad:
            g = coef * dyhat
            grads[f"{task}.W"] += zr.T @ g
            grads[f"{task}.b"] += g.sum(axis=0)
            dz[rows] += g @ W.T
            grads[f"logsigma.{task}"] += -2.0 * coef * loss + 1.0
    if cfg.lambda_align > 0 and "domain" in batch:
        dom = np.asarray(batch["domain"])
        src, tgt = dom == 0, dom == 1
        if src.any() and tgt.any():
            val, g = _mmd_grad(z[src], z[tgt], cfg.mmd_bandwidth, want_grad)
            total += cfg.lambda_align * val
            parts["align"] = val
            if want_grad:
                dz[src] += cfg.lambda_align * g[:src.sum()]
                dz[tgt] += cfg.lambda_align * g[src.sum():]
    for task in cfg.tasks:
        W = p[f"{task}.W"]
        total += cfg.lambda_reg * float((W * W).sum())
        if want_grad:
            grads[f"{task}.W"] += 2.0 * cfg.lambda_reg * W
    if want_grad:
        _encoder_back(model, cache, dz, grads)
    return total, grads, parts


def _encoder_back(model, c, dz, grads):
    p = model.params
    dn2 = dz * (c["cdf2"] + c["n2"] * _INV_SQRT2PI * np.exp(-0.5 * c["n2"] ** 2))
    du2, grads["enc.g2"], grads["enc.beta2"] = _layer_norm_back(dn2, p["enc.g2"], c["ln2"])
    grads["enc.W2"] = c["a1"].T @ du2
    grads["enc.b2"] = du2.sum(axis=0)
    da1 = du2 @ p["enc.W2"].T
    dn1 = da1 * (c["cdf1"] + c["n1"] * _INV_SQRT2PI * np.exp(-0.5 * c["n1"] ** 2))
    du1, grads["enc.g1"], grads["enc.beta1"] = _layer_norm_back(dn1, p["enc.g1"], c["ln1"])
    grads["enc.W1"] = c["x"].T @ du1
    grads["enc.b1"] = du1.sum(axis=0)


def total_loss(model: MultiTaskModel, batch: dict, cfg: TrainConfig) -> float:
    return loss_and_grads(model, batch, cfg, want_grad=False)[0]


def combine_losses(losses: Dict[str, float], log_sigmas: Dict[str, float],
                   task_weights: Optional[Dict[str, float]] = None,
                   align: float = 0.0, lambda_align: float = 0.0,
                   decay: float = 0.0) -> float:
    """The scalar objective from precomputed pieces (``decay`` = ``lambda_reg * sum ||W||^2``)."""
    task_weights = task_weights or {}
    out = 0.0
    for task, loss in losses.items():
        s = log_sigmas.get(task, 0.0)
        out += task_weights.get(task, 1.0) * loss * 0.5 * math.exp(-2.0 * s) + s
    return out + lambda_align * align + decay


# --------------------------------------------------------------------------
# optimizer and schedule
# --------------------------------------------------------------------------

DECAYED = ("enc.W1", "enc.W2")


class AdamW:
    """Adam moments with decoupled weight decay on ``decayed`` parameters."""

    def __init__(self, params: Dict[str, np.ndarray], weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8, decayed: Sequence[str] = DECAYED):
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.decayed = set(decayed)
        self.m = _zero_like(params)
        self.v = _zero_like(params)
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m = self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            v = self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            if k in self.decayed and self.weight_decay:
                params[k] *= 1.0 - lr * self.weight_decay
            params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def cosine_lr(epoch: int, epochs: int, base: float, floor: float) -> float:
    """Learning rate for 0-based ``epoch``: ``base`` at 0, approaching ``floor``."""
    if epochs <= 1:
        return base
    return floor + 0.5 * (base - floor) * (1.0 + math.cos(math.pi * epoch / (epochs - 1)))


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: MultiTaskModel
    history: List[dict]
    best_epoch: int


def _take(data: dict, idx) -> dict:
    return {k: np.asarray(v)[idx] for k, v in data.items()}


def _check_data(data: dict, cfg: TrainConfig, what: str):
    if "h" not in data or len(data["h"]) == 0:
        raise ConfigError(f"{what} set is empty")
    for task in cfg.tasks:
        if task not in data:
            raise ConfigError(f"{what} set has no labels for task {task!r}")


def train(train_data: dict, cfg: TrainConfig, val_data: Optional[dict] = None) -> TrainResult:
    """Mini-batch AdamW with cosine LR and early stopping on validation loss.

    ``train_data``/``val_data`` are dicts with ``"h"`` (N, D) and per-task
    label arrays. The model snapshot with the lowest validation total loss
    is returned.
    """
    _check_data(train_data, cfg, "training")
    if val_data is not None:
        _check_data(val_data, cfg, "validation")
    H = np.asarray(train_data["h"], dtype=float)
    mean = H.mean(axis=0)
    std = H.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    model = init_model(H.shape[1], cfg.tasks, cfg.n_classes, cfg.hidden, cfg.seed, mean, std)
    opt = AdamW(model.params, weight_decay=cfg.lambda_reg)
    shuffle_seed = cfg.seed if cfg.shuffle_seed is None else cfg.shuffle_seed
    n = H.shape[0]
    monitor = val_data if val_data is not None else train_data
    best, best_epoch, best_params, stale = math.inf, -1, None, 0
    history = []
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.lr_floor)
        order = rng_for(shuffle_seed, 101, epoch).permutation(n)
        running, batches = 0.0, 0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            batch = _take(train_data, order[start:start + cfg.batch_size])
            loss, grads, _ = loss_and_grads(model, batch, cfg)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {bi}")
            opt.step(model.params, grads, lr)
            running += loss
            batches += 1
        val_loss = total_loss(model, monitor, cfg)
        if not math.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        history.append({"epoch": epoch, "lr": lr, "train_loss": running / batches,
                        "val_loss": val_loss,
                        **{f"sigma_{t}": model.sigma(t) for t in cfg.tasks}})
        if val_loss < best:
            best, best_epoch, stale = val_loss, epoch, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            stale += 1
            if stale > cfg.patience:
                break
    model.params = best_params
    return TrainResult(model=model, history=history, best_epoch=best_epoch)
