import math

import numpy as np
import pytest

from gradcheck import max_relative_error, random_problem
from sdp.errors import ConfigError, NumericalError
from sdp.mtl import (DECAYED, AdamW, TrainConfig, combine_losses, cosine_lr, forward, init_model,
                     loss_and_grads, mmd, predict, task_loss, total_loss, train)
from sdp.pipeline import DatasetSpec, FeatureConfig, featurize, generate_recordings, subset


# --------------------------------------------------------------------------
# forward / predict
# --------------------------------------------------------------------------

def test_zero_weights_output_biases():
    m = init_model(4, ("detection", "recognition", "vitals"), n_classes=3, hidden=8)
    for k in m.params:
        m.params[k] = np.zeros_like(m.params[k])
    m.params["detection.b"] = np.array([0.5, -1.0])
    m.params["recognition.b"] = np.array([1.0, 2.0, 3.0])
    m.params["vitals.b"] = np.array([0.3])
    out = forward(m, np.random.default_rng(0).standard_normal((5, 4)))
    assert np.all(out["detection"] == [0.5, -1.0])
    assert np.all(out["recognition"] == [1.0, 2.0, 3.0])
    assert np.all(out["vitals"] == 0.3)


def test_identical_rows_give_identical_outputs():
    m = init_model(6, ("detection", "vitals"), hidden=16, seed=2)
    out = forward(m, np.tile(np.arange(6.0), (4, 1)))
    for key in ("z", "detection", "vitals"):
        assert np.all(out[key] == out[key][0])


def test_shared_trunk_perturbation_reaches_every_head():
    m = init_model(6, ("detection", "recognition", "vitals"), hidden=16, seed=3)
    h = np.random.default_rng(1).standard_normal((3, 6))
    before = forward(m, h)
    m.params["enc.W1"][0, 0] += 1e-3
    after = forward(m, h)
    for task in m.tasks:
        assert np.max(np.abs(after[task] - before[task])) > 1e-9


def test_width_mismatch():
    m = init_model(6, ("detection",), hidden=4)
    with pytest.raises(ConfigError):
        forward(m, np.zeros((2, 5)))


def test_predict_rules():
    m = init_model(2, ("detection", "recognition", "vitals"), n_classes=3, hidden=4)
    for k in m.params:
        m.params[k] = np.zeros_like(m.params[k])
    m.params["detection.b"] = np.array([3.0, 1.0])
    m.params["recognition.b"] = np.array([2.0, 2.0, 2.0])
    m.params["vitals.b"] = np.array([0.25])
    p = predict(m, np.zeros((2, 2)))
    assert p["detection"].tolist() == [0, 0]
    assert p["recognition"].tolist() == [0, 0]  # ties go to the lowest index
    assert p["vitals"].tolist() == [0.25, 0.25]


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def test_task_loss_examples():
    assert task_loss("detection", [[0.0, 0.0]], [0]) == pytest.approx(math.log(2), abs=1e-12)
    assert task_loss("vitals", [0.3, 0.4], [0.3, 0.4]) == 0.0
    assert task_loss("recognition", [[1.0, 0.0, 0.0]], [0]) == pytest.approx(
        -math.log(math.e / (math.e + 2)), abs=1e-12)
    assert task_loss("recognition", [[1.0, 0.0, 0.0]], [0]) == pytest.approx(0.5514, abs=1e-4)
    with pytest.raises(ConfigError):
        task_loss("recognition", [[1.0, 0.0, 0.0]], [3])


def test_combine_losses_examples():
    assert combine_losses({"a": 2.0, "b": 4.0}, {"a": 0.0, "b": 0.0}) == 3.0
    assert combine_losses({"a": 2.0}, {"a": 0.0}, align=1.0, lambda_align=0.5, decay=0.25) == 1.75
    # one task with loss 1: the optimum over sigma is sigma = 1, objective 0.5
    grid = np.linspace(-1, 1, 2001)
    vals = [combine_losses({"a": 1.0}, {"a": s}) for s in grid]
    assert grid[int(np.argmin(vals))] == pytest.approx(0.0, abs=1e-9)
    assert min(vals) == pytest.approx(0.5)
    # and sigma^2 = l in general
    vals = [combine_losses({"a": 3.0}, {"a": s}) for s in grid]
    assert math.exp(2 * grid[int(np.argmin(vals))]) == pytest.approx(3.0, rel=3e-3)


def test_zero_heads_have_no_decay():
    m = init_model(3, ("detection",), hidden=4)
    m.params["detection.W"][:] = 0.0
    batch = {"h": np.zeros((2, 3)), "detection": np.array([0, 1])}
    a = total_loss(m, batch, TrainConfig(tasks=("detection",), lambda_reg=0.0, hidden=4))
    b = total_loss(m, batch, TrainConfig(tasks=("detection",), lambda_reg=10.0, hidden=4))
    assert a == b


def test_total_loss_matches_combination():
    model, batch, cfg = random_problem(4)
    total, _, parts = loss_and_grads(model, batch, cfg)
    sig = {t: float(model.params[f"logsigma.{t}"][0]) for t in model.tasks}
    decay = cfg.lambda_reg * sum(float((model.params[f"{t}.W"] ** 2).sum()) for t in model.tasks)
    expected = combine_losses({t: parts[t] for t in model.tasks}, sig, cfg.task_weights,
                              align=parts["align"], lambda_align=cfg.lambda_align, decay=decay)
    assert total == pytest.approx(expected, rel=1e-12)


def test_missing_labels_are_skipped():
    model, batch, cfg = random_problem(5)
    keep = np.isfinite(batch["vitals"])
    _, _, parts = loss_and_grads(model, batch, cfg)
    sub = {k: v[keep] for k, v in batch.items()}
    assert parts["vitals"] == pytest.approx(
        task_loss("vitals", forward(model, sub["h"])["vitals"], sub["vitals"]), rel=1e-12)
    rows = batch["recognition"] >= 0
    assert parts["recognition"] == pytest.approx(
        task_loss("recognition", forward(model, batch["h"][rows])["recognition"],
                  batch["recognition"][rows]), rel=1e-12)
    missing = dict(batch)
    del missing["vitals"]
    with pytest.raises(ConfigError):
        total_loss(model, missing, cfg)


@pytest.mark.parametrize("seed", range(4))
def test_gradients_match_finite_differences(seed):
    model, batch, cfg = random_problem(seed)
    assert max_relative_error(model, batch, cfg) < 1e-4


def test_gradients_with_fixed_bandwidth_and_no_alignment():
    model, batch, cfg = random_problem(9)
    cfg.mmd_bandwidth = 1.5
    assert max_relative_error(model, batch, cfg) < 1e-4
    cfg.lambda_align = 0.0
    assert max_relative_error(model, batch, cfg) < 1e-4


# --------------------------------------------------------------------------
# MMD
# --------------------------------------------------------------------------

def _mmd_oracle(X, Y, bw):
    k = lambda u, v: math.exp(-float(np.sum((u - v) ** 2)) / (2 * bw * bw))
    xx = sum(k(a, b) for a in X for b in X) / len(X) ** 2
    yy = sum(k(a, b) for a in Y for b in Y) / len(Y) ** 2
    xy = sum(k(a, b) for a in X for b in Y) / (len(X) * len(Y))
    return xx + yy - 2 * xy


def test_mmd_examples():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 3))
    assert mmd(X, X) == pytest.approx(0.0, abs=1e-15)
    Y = rng.standard_normal((4, 3)) + 1.0
    assert mmd(X, Y) == pytest.approx(mmd(Y, X), abs=1e-15)
    P = rng.standard_normal((7, 2))
    Q = rng.standard_normal((5, 2))
    P[:, 0] += 10.0
    Q[:, 0] -= 10.0
    assert mmd(P, Q, bandwidth=1.0) == pytest.approx(_mmd_oracle(P, Q, 1.0), abs=1e-6)
    assert mmd(P, Q) == pytest.approx(
        _mmd_oracle(P, Q, float(np.median([np.linalg.norm(a - b) for i, a in enumerate(np.vstack([P, Q]))
                                           for b in np.vstack([P, Q])[i + 1:]]))), abs=1e-9)


def test_mmd_degenerate_cases():
    Z = np.ones((3, 2))
    assert mmd(Z, Z) == 0.0
    with pytest.raises(ConfigError):
        mmd(np.zeros((0, 2)), Z)


# --------------------------------------------------------------------------
# optimizer and schedule
# --------------------------------------------------------------------------

def test_decoupled_decay_exact_factor():
    params = {k: np.full((2, 2), 3.0) for k in DECAYED}
    params["detection.b"] = np.full(2, 3.0)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    opt = AdamW(params, weight_decay=0.1)
    opt.step(params, grads, lr=0.01)
    for k in DECAYED:
        assert np.all(params[k] == 3.0 * (1 - 0.01 * 0.1))
    assert np.all(params["detection.b"] == 3.0)


def test_cosine_schedule():
    lrs = [cosine_lr(e, 50, 3e-3, 1e-4) for e in range(50)]
    assert lrs[0] == 3e-3 and lrs[-1] == pytest.approx(1e-4)
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    assert cosine_lr(0, 1, 1.0, 0.1) == 1.0


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def presence_data():
    spec = DatasetSpec("presence", n_users=4, sessions_per_class=1, duration=10.0)
    return featurize(generate_recordings(spec, seed=21), FeatureConfig())


def test_separable_detection_reaches_095(presence_data):
    data = presence_data
    tr, va = data["user"] != "u3", data["user"] == "u3"
    cfg = TrainConfig(tasks=("detection",), epochs=50, batch_size=16, seed=1)
    res = train(subset(data, tr), cfg, subset(data, va))
    acc = np.mean(predict(res.model, data["h"][va])["detection"] == data["detection"][va])
    assert acc >= 0.95
    assert len(res.history) <= 50 and 0 <= res.best_epoch < len(res.history)


def test_small_batch_overfit():
    rng = np.random.default_rng(0)
    data = {"h": rng.standard_normal((8, 10)), "detection": np.array([0, 1] * 4)}
    cfg = TrainConfig(tasks=("detection",), epochs=500, batch_size=8, patience=500,
                      lambda_reg=0.0, seed=0)
    res = train(data, cfg)
    logits = forward(res.model, data["h"])["detection"]
    assert task_loss("detection", logits, data["detection"]) < 0.05


def test_training_is_deterministic():
    model, batch, _ = random_problem(1)
    data = {k: v for k, v in batch.items()}
    cfg = TrainConfig(tasks=("detection", "recognition", "vitals"), n_classes=3, epochs=5,
                      batch_size=4, hidden=8, lambda_align=0.1, seed=3)
    a, b = train(data, cfg), train(data, cfg)
    assert a.history == b.history
    for k in a.model.params:
        assert np.array_equal(a.model.params[k], b.model.params[k])


def test_noisy_task_gets_larger_sigma():
    wins = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        h = rng.standard_normal((160, 6))
        data = {"h": h, "detection": (h[:, 0] > 0).astype(np.int64),
                "recognition": rng.integers(0, 4, 160)}
        cfg = TrainConfig(tasks=("detection", "recognition"), n_classes=4, epochs=40,
                          batch_size=32, hidden=32, seed=seed)
        m = train(data, cfg).model
        wins += m.sigma("recognition") > m.sigma("detection")
    assert wins >= 3


def test_training_errors():
    cfg = TrainConfig(tasks=("detection",), epochs=1)
    with pytest.raises(ConfigError):
        train({"h": np.zeros((0, 3)), "detection": np.zeros(0)}, cfg)
    with pytest.raises(ConfigError):
        train({"h": np.zeros((4, 3))}, cfg)
    with pytest.raises(NumericalError), np.errstate(invalid="ignore"):
        train({"h": np.full((4, 3), np.inf), "detection": np.array([0, 1, 0, 1])}, cfg)
    for bad in (dict(tasks=()), dict(tasks=("pose",)), dict(lambda_reg=-1.0), dict(epochs=0),
                dict(task_weights={"detection": -1.0})):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
