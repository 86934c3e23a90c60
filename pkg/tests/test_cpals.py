import itertools
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sdp.cpals import (CpConfig, CpDecomposition, canonicalize, cp_als, factor_match_score, fit,
                       fold, identifiability_check, khatri_rao, kruskal_rank, model_norm_sq,
                       random_cp, reconstruct, unfold)
from sdp.errors import ConfigError, NumericalError


def _x222():
    i, j, k = np.meshgrid(range(2), range(2), range(2), indexing="ij")
    return (1 + i + 2 * j + 4 * k).astype(float)


# --------------------------------------------------------------------------
# unfolding / Khatri-Rao
# --------------------------------------------------------------------------

def test_unfold_examples():
    X = _x222()
    assert unfold(X, 1).tolist() == [[1, 3, 5, 7], [2, 4, 6, 8]]
    assert unfold(X, 3).tolist() == [[1, 2, 3, 4], [5, 6, 7, 8]]
    # mode 2: rows j, columns i + 2k
    assert unfold(X, 2).tolist() == [[1, 2, 5, 6], [3, 4, 7, 8]]


def test_unfold_column_index_rule():
    X = np.random.default_rng(0).standard_normal((3, 4, 5))
    X1 = unfold(X, 1)
    for i2, i3 in itertools.product(range(4), range(5)):
        assert np.array_equal(X1[:, i2 + 4 * i3], X[:, i2, i3])


@given(seed=st.integers(0, 10_000), mode=st.sampled_from([1, 2, 3]))
def test_fold_inverts_unfold(seed, mode):
    X = np.random.default_rng(seed).standard_normal((2, 3, 4))
    assert np.array_equal(fold(unfold(X, mode), mode, X.shape), X)


def test_unfold_bad_mode():
    with pytest.raises(ConfigError):
        unfold(np.zeros((2, 2, 2)), 0)
    with pytest.raises(ConfigError):
        fold(np.zeros((2, 4)), 4, (2, 2, 2))


def test_khatri_rao_examples():
    assert khatri_rao([[1], [2]], [[3], [4]]).tolist() == [[3], [4], [6], [8]]
    U = np.array([[1.0, 0.0], [2.0, 0.0]])
    out = khatri_rao(U, np.ones((3, 2)))
    assert np.all(out[:, 1] == 0)
    with pytest.raises(ConfigError):
        khatri_rao(np.ones((2, 2)), np.ones((2, 3)))


def test_khatri_rao_hadamard_identity_and_unfolding():
    rng = np.random.default_rng(1)
    A, B, C = rng.standard_normal((4, 3)), rng.standard_normal((5, 3)), rng.standard_normal((6, 3))
    KR = khatri_rao(C, B)
    assert np.allclose(KR.T @ KR, (C.T @ C) * (B.T @ B), rtol=1e-12)
    X = np.einsum("ir,jr,kr->ijk", A, B, C)
    assert np.allclose(unfold(X, 1), A @ KR.T, atol=1e-12)
    assert np.allclose(unfold(X, 2), B @ khatri_rao(C, A).T, atol=1e-12)
    assert np.allclose(unfold(X, 3), C @ khatri_rao(B, A).T, atol=1e-12)


# --------------------------------------------------------------------------
# cp_als
# --------------------------------------------------------------------------

def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_exact_rank_one():
    rng = np.random.default_rng(2)
    a, b, c = (_unit(rng.standard_normal(n)) for n in (4, 5, 6))
    X = 2 * np.einsum("i,j,k->ijk", a, b, c)
    d = cp_als(X, CpConfig(rank=1, epsilon=1e-9))
    assert d.weights[0] == pytest.approx(2.0, abs=1e-6)
    assert d.fit >= 1 - 1e-6
    assert factor_match_score(d, CpDecomposition(a[:, None], b[:, None], c[:, None], np.array([2.0]))) \
        == pytest.approx(1.0, abs=1e-9)


def test_exact_rank_three():
    truth = random_cp((8, 16, 32), 3, seed=5, weights=[10.0, 5.0, 2.0])
    X = reconstruct(truth)
    d = cp_als(X, CpConfig(rank=3, max_sweeps=50, rel_tol=1e-14, init="hosvd", seed=5))
    assert d.fit >= 1 - 1e-6
    assert d.sweeps_used <= 50
    assert factor_match_score(d, truth) > 0.999
    assert np.allclose(d.weights, [10, 5, 2], rtol=1e-5)


def test_determinism():
    X = np.random.default_rng(3).standard_normal((4, 6, 8))
    for init in ("random", "hosvd"):
        cfg = CpConfig(rank=3, seed=11, init=init)
        d1, d2 = cp_als(X, cfg), cp_als(X, cfg)
        for f1, f2 in zip(d1.factors + (d1.weights,), d2.factors + (d2.weights,)):
            assert np.array_equal(f1, f2)
        assert d1.fit_history == d2.fit_history


def test_invariants_after_every_sweep():
    X = np.random.default_rng(4).standard_normal((4, 6, 10))
    for sweeps in (1, 2, 5, 20):
        d = cp_als(X, CpConfig(rank=4, max_sweeps=sweeps, rel_tol=0.0, seed=1))
        assert d.sweeps_used == sweeps
        for F in d.factors:
            assert np.all(np.abs(np.linalg.norm(F, axis=0) - 1) < 1e-12)
        assert np.all(d.weights >= 0) and np.all(np.diff(d.weights) <= 0)
        assert d.fit <= 1.0
        assert d.fit == pytest.approx(fit(d, X), abs=1e-10)


def test_monotone_fit_with_zero_epsilon():
    X = np.random.default_rng(6).standard_normal((5, 6, 7))
    d = cp_als(X, CpConfig(rank=3, epsilon=0.0, max_sweeps=40, rel_tol=0.0, seed=2))
    h = np.array(d.fit_history)
    assert np.all(h[1:] >= h[:-1] - 1e-10)


def test_zero_epsilon_singular_gram_raises_with_sweep():
    with pytest.raises(NumericalError, match="sweep 1"):
        cp_als(np.zeros((3, 4, 5)), CpConfig(rank=2, epsilon=0.0))


def test_zero_tensor_with_regularization_is_finite():
    d = cp_als(np.zeros((3, 4, 5)), CpConfig(rank=2, epsilon=1e-9))
    assert np.all(d.weights == 0)
    assert d.fit == 1.0


def test_input_validation():
    with pytest.raises(NumericalError):
        cp_als(np.full((2, 2, 2), np.nan), CpConfig(rank=1))
    with pytest.raises(ConfigError):
        cp_als(np.zeros((2, 2)), CpConfig(rank=1))
    with pytest.raises(ConfigError):
        cp_als(np.zeros((2, 2, 2)), CpConfig(rank=5))
    for bad in (dict(rank=0), dict(epsilon=-1.0), dict(max_sweeps=0), dict(rel_tol=-1.0),
                dict(init="svd")):
        with pytest.raises(ConfigError):
            CpConfig(**bad)


def test_sign_convention_and_tie_break():
    A = np.array([[1.0, -2.0], [0.0, 0.0]])
    B = np.array([[1.0, 1.0], [0.0, 0.0]])
    C = np.array([[3.0, 1.0], [0.0, 0.0]])
    A2, B2, C2, w = canonicalize(A, B, C, scales=[1.0, -1.0])
    # weights 3 and 2; the negative scale lands on the A column
    assert w.tolist() == [3.0, 2.0]
    assert A2[:, 1].tolist() == [1.0, 0.0]
    # equal weights order by the first row of A
    A3, _, _, w3 = canonicalize(np.array([[0.5, -0.5], [0.5, 0.5]]), np.eye(2), np.eye(2))
    assert w3[0] == w3[1] and A3[0, 0] < A3[0, 1]


def test_cost_per_sweep_scales_linearly_in_T():
    rng = np.random.default_rng(8)

    def per_sweep(T):
        X = rng.standard_normal((6, 30, T))
        cfg = CpConfig(rank=4, max_sweeps=10, rel_tol=0.0)
        best = np.inf
        for _ in range(5):
            t0 = time.perf_counter()
            cp_als(X, cfg)
            best = min(best, time.perf_counter() - t0)
        return best

    per_sweep(64)  # warm caches
    assert per_sweep(1024) / per_sweep(512) < 3


# --------------------------------------------------------------------------
# reconstruct / fit
# --------------------------------------------------------------------------

def test_zero_weights_give_zero_tensor():
    d = random_cp((3, 4, 5), 2, seed=0, weights=[0.0, 0.0])
    assert np.all(reconstruct(d) == 0)


def test_exact_fit_is_one():
    d = random_cp((3, 4, 5), 1, seed=0, weights=[3.0])
    assert abs(fit(d, reconstruct(d)) - 1) <= 1e-12


def test_norm_identity():
    for seed in range(5):
        d = random_cp((4, 5, 6), 3, seed=seed, weights=[3.0, 2.0, 0.5])
        direct = np.linalg.norm(reconstruct(d)) ** 2
        assert model_norm_sq(d) == pytest.approx(direct, rel=1e-9)


# --------------------------------------------------------------------------
# Kruskal rank / identifiability / matching
# --------------------------------------------------------------------------

def test_kruskal_rank_examples():
    assert kruskal_rank(np.eye(3)) == 3
    M = np.random.default_rng(0).standard_normal((4, 3))
    assert kruskal_rank(np.column_stack([M[:, 0], M[:, 0], M[:, 1]])) == 1
    assert kruskal_rank(M) == 3
    assert kruskal_rank(np.column_stack([M[:, :2], np.zeros(4)])) == 0
    with pytest.raises(ConfigError):
        kruskal_rank(np.zeros((0, 0)))


def test_identifiability_examples():
    d = random_cp((8, 16, 32), 3, seed=1)
    rep = identifiability_check(d)
    assert rep.holds and rep.margin == 1 and rep.kruskal_ranks == (3, 3, 3)

    one = identifiability_check(random_cp((8, 16, 32), 1, seed=1))
    assert not one.holds and one.margin == -1 and one.rank_one

    dup = random_cp((8, 16, 32), 3, seed=1)
    dup.A[:, 1] = dup.A[:, 0]
    rep = identifiability_check(dup)
    assert not rep.holds and rep.margin == -1 and rep.kruskal_ranks[0] == 1


def test_factor_match_examples():
    d = random_cp((5, 6, 7), 3, seed=2, weights=[3.0, 2.0, 1.0])
    assert factor_match_score(d, d) == pytest.approx(1.0)
    p = [2, 0, 1]
    moved = CpDecomposition(-d.A[:, p], d.B[:, p], d.C[:, p], d.weights[p])
    assert factor_match_score(moved, d) == pytest.approx(1.0)
    scores = [factor_match_score(random_cp((50, 50, 50), 3, seed=s),
                                 random_cp((50, 50, 50), 3, seed=s + 100)) for s in range(10)]
    assert max(scores) < 0.9
    with pytest.raises(ConfigError):
        factor_match_score(d, random_cp((5, 6, 7), 2, seed=0))
