import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdp.cpals import CpConfig, CpDecomposition, canonicalize, cp_als, random_cp, reconstruct
from sdp.errors import ConfigError
from sdp.pooling import (COMPONENT_FIELDS, GLOBAL_FIELDS, LAYOUT_VERSION, Reprojection,
                         descriptor_length, field_names, pool, reproject)


def _decomp(a, b, c, w=1.0):
    col = lambda v: np.asarray(v, dtype=float)[:, None] / np.linalg.norm(v)
    return CpDecomposition(col(a), col(b), col(c), np.array([w]), fit=1.0)


def test_layout():
    assert descriptor_length(8) == 52
    names = field_names(2)
    assert len(names) == descriptor_length(2)
    assert names[:6] == [f"{f}_0" for f in COMPONENT_FIELDS]
    assert names[-4:] == list(GLOBAL_FIELDS)
    assert pool(random_cp((3, 4, 5), 2, seed=0)).version == LAYOUT_VERSION


def test_one_hot_temporal_factor():
    c = np.zeros(10)
    c[5] = 1.0
    comp = pool(_decomp([1, 0], [1, 1], c)).component(0)
    assert comp["temporal_centroid"] == 5.0 and comp["temporal_spread"] == 0.0


def test_uniform_temporal_factor():
    comp = pool(_decomp([1], [1], np.ones(64))).component(0)
    assert comp["temporal_centroid"] == pytest.approx(31.5, abs=1e-12)
    assert comp["temporal_spread"] == pytest.approx(np.sqrt((64 ** 2 - 1) / 12), abs=1e-12)
    assert comp["temporal_spread"] == pytest.approx(18.473, abs=5e-4)


def test_spatial_concentration_examples():
    assert pool(_decomp([0, 1, 0], [1], [1])).component(0)["spatial_concentration"] == 1.0
    assert pool(_decomp([1, -1, 1], [1], [1])).component(0)["spatial_concentration"] \
        == pytest.approx(1 / 3, abs=1e-15)


def test_globals_and_determinism():
    d = random_cp((3, 8, 16), 3, seed=4, weights=[3.0, 2.0, 1.0])
    d.fit = 0.75
    h = pool(d, amp_mean=1.5, amp_std=0.25)
    g = h.globals
    assert g["energy"] == pytest.approx(np.linalg.norm(reconstruct(d)), rel=1e-12)
    assert (g["fit"], g["amp_mean"], g["amp_std"]) == (0.75, 1.5, 0.25)
    assert np.array_equal(h.h, pool(d, amp_mean=1.5, amp_std=0.25).h)
    assert [h.component(r)["weight"] for r in range(3)] == [3.0, 2.0, 1.0]


def test_zero_norm_column_is_named():
    d = random_cp((3, 4, 5), 2, seed=0)
    d.C[:, 1] = 0.0
    with pytest.raises(ConfigError, match="component 1"):
        pool(d)


@settings(max_examples=1000)
@given(seed=st.integers(0, 2 ** 31), R=st.integers(1, 5), A=st.integers(1, 6),
       K=st.integers(1, 12), T=st.integers(1, 40))
def test_bounds(seed, R, A, K, T):
    w = np.sort(np.random.default_rng(seed).uniform(0, 5, R))[::-1]
    d = random_cp((A, K, T), R, seed=seed, weights=w)
    h = pool(d)
    assert h.h.shape == (descriptor_length(R),) and np.all(np.isfinite(h.h))
    for r in range(R):
        c = h.component(r)
        assert 0 <= c["temporal_centroid"] <= T - 1
        assert 0 <= c["spectral_centroid"] <= K - 1
        assert c["temporal_spread"] >= 0 and c["spectral_spread"] >= 0
        assert 1 / A - 1e-12 <= c["spatial_concentration"] <= 1 + 1e-12


def test_permutation_immunity():
    rng = np.random.default_rng(1)
    A, B, C = rng.standard_normal((4, 4)), rng.standard_normal((6, 4)), rng.standard_normal((8, 4))

    def pooled(perm):
        return pool(CpDecomposition(*canonicalize(A[:, perm], B[:, perm], C[:, perm]), fit=0.9)).h

    ref = pooled([0, 1, 2, 3])
    for perm in ([3, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1]):
        assert np.array_equal(pooled(perm), ref)


def test_scale_consistency():
    truth = random_cp((4, 12, 24), 2, seed=3, weights=[5.0, 2.0])
    X = reconstruct(truth)
    cfg = CpConfig(rank=2, epsilon=0.0, init="hosvd", rel_tol=1e-14, seed=3)
    h1 = pool(cp_als(X, cfg)).h.reshape(-1)
    h2 = pool(cp_als(7.0 * X, cfg)).h.reshape(-1)
    for r in range(2):
        assert h2[6 * r] == pytest.approx(7.0 * h1[6 * r], rel=1e-8)
        assert np.allclose(h2[6 * r + 1:6 * r + 6], h1[6 * r + 1:6 * r + 6], rtol=1e-8, atol=1e-8)


def test_reproject_examples():
    dims = (2, 3, 4)
    assert np.all(reproject(np.zeros(10), dims, seed=1) == 0)
    rng = np.random.default_rng(0)
    h1, h2 = rng.standard_normal(10), rng.standard_normal(10)
    out = reproject(h1, dims, seed=1)
    assert out.shape == dims
    assert np.array_equal(out, reproject(h1, dims, seed=1))
    lin = reproject(h1 + h2, dims, seed=1) - reproject(h1, dims, seed=1) - reproject(h2, dims, seed=1)
    assert np.max(np.abs(lin)) < 1e-12
    batch = reproject(np.stack([h1, h2]), dims, seed=1)
    assert batch.shape == (2,) + dims


def test_reprojection_stored_map_and_mismatch():
    P = Reprojection(10, (2, 2, 2), seed=5)
    again = Reprojection(10, (2, 2, 2), matrix=P.matrix)
    h = np.arange(10.0)
    assert np.array_equal(P(h), again(h))
    with pytest.raises(ConfigError):
        P(np.zeros(9))
    with pytest.raises(ConfigError):
        Reprojection(10, (2, 2, 3), matrix=P.matrix)
