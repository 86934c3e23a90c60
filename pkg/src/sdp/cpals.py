"""
Rank-R CP decomposition of real 3-way tensors by regularized ALS.

Unfoldings follow the Kolda-Bader convention (earlier modes vary fastest
along the columns), so that ``unfold(X, 1) == A @ khatri_rao(C, B).T`` for
``X = [[A, B, C]]``. Modes are numbered 1, 2, 3.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NumericalError
from .seeding import rng_for

INIT_METHODS = ("random", "hosvd")


def unfold(tensor: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization; column index ``i2 + I2 * i3`` for mode 1."""
    if mode not in (1, 2, 3) or tensor.ndim != 3:
        raise ConfigError(f"invalid mode {mode!r} for a 3-way tensor")
    return np.reshape(np.moveaxis(tensor, mode - 1, 0), (tensor.shape[mode - 1], -1), order="F")


def fold(matrix: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    if mode not in (1, 2, 3):
        raise ConfigError(f"invalid mode {mode!r}")
    shape = tuple(shape)
    moved = (shape[mode - 1],) + tuple(s for i, s in enumerate(shape) if i != mode - 1)
    return np.moveaxis(np.reshape(matrix, moved, order="F"), 0, mode - 1)


def khatri_rao(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; row ``j + J * i`` holds ``U[i] * V[j]``."""
    U, V = np.asarray(U), np.asarray(V)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise ConfigError("khatri_rao needs two matrices with the same column count")
    return (U[:, None, :] * V[None, :, :]).reshape(U.shape[0] * V.shape[0], U.shape[1])


@dataclass(frozen=True)
class CpConfig:
    rank: int = 8
    epsilon: float = 1e-9
    max_sweeps: int = 50
    rel_tol: float = 1e-10
    init: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError("CP rank must be >= 1")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.max_sweeps < 1:
            raise ConfigError("max_sweeps must be >= 1")
        if self.rel_tol < 0:
            raise ConfigError("rel_tol must be >= 0")
        if self.init not in INIT_METHODS:
            raise ConfigError(f"init must be one of {INIT_METHODS}")

    def check_shape(self, shape: Tuple[int, int, int]):
        I, J, K = shape
        if self.rank > min(I * J, J * K, I * K):
            raise ConfigError(f"rank {self.rank} too large for tensor shape {shape}")


@dataclass
class CpDecomposition:
    """Unit-norm factor columns with nonnegative, descending ``weights``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    weights: np.ndarray
    fit: float = float("nan")
    sweeps_used: int = 0
    fit_history: List[float] = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def factors(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.A, self.B, self.C

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.A.shape[0], self.B.shape[0], self.C.shape[0]


def reconstruct(d: CpDecomposition) -> np.ndarray:
    return np.einsum("r,ir,jr,kr->ijk", d.weights, d.A, d.B, d.C)


def relative_fit(X: np.ndarray, Xhat: np.ndarray) -> float:
    nx = np.linalg.norm(X)
    if nx == 0:
        return 1.0 if np.linalg.norm(Xhat) == 0 else -np.inf
    return float(1.0 - np.linalg.norm(X - Xhat) / nx)


def fit(d: CpDecomposition, X: np.ndarray) -> float:
    return relative_fit(np.asarray(X, dtype=float), reconstruct(d))


def model_norm_sq(d: CpDecomposition) -> float:
    """``||X_hat||_F^2`` from the Gram matrices, without forming X_hat."""
    G = (d.A.T @ d.A) * (d.B.T @ d.B) * (d.C.T @ d.C)
    return float(d.weights @ G @ d.weights)


def _normalize(F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(F, axis=0)
    out = np.array(F, dtype=float, copy=True)
    for r, n in enumerate(norms):
        if n > 0:
            out[:, r] /= n
        else:
            out[:, r] = 0.0
            out[0, r] = 1.0
    return out, norms


def canonicalize(A, B, C, scales=None) -> Tuple[np.ndarray, ...]:
    """Normalize columns, absorb scales into weights and sort components.

    A negative incoming scale flips the A column. Order: descending weight,
    then ascending ``A[0, r]``, then original index.
    """
    A, na = _normalize(A)
    B, nb = _normalize(B)
    C, nc = _normalize(C)
    w = na * nb * nc
    if scales is not None:
        scales = np.asarray(scales, dtype=float)
        A = A * np.where(scales < 0, -1.0, 1.0)
        w = w * np.abs(scales)
    order = np.lexsort((np.arange(w.size), A[0], -w))
    return A[:, order], B[:, order], C[:, order], w[order]


def _solve(M: np.ndarray, G: np.ndarray, eps: float, sweep: int) -> np.ndarray:
    """Return ``M @ inv(G + eps I)`` via Cholesky, falling back to pinv."""
    Gr = G + eps * np.eye(G.shape[0])
    try:
        L = np.linalg.cholesky(Gr)
    except np.linalg.LinAlgError:
        if eps == 0:
            raise NumericalError(f"singular Gram matrix at sweep {sweep} (epsilon=0)") from None
        return M @ np.linalg.pinv(Gr)
    Y = np.linalg.solve(L, M.T)
    return np.linalg.solve(L.T, Y).T


def _init(X: np.ndarray, cfg: CpConfig) -> List[np.ndarray]:
    R = cfg.rank
    rng = rng_for(cfg.seed, 0)
    if cfg.init == "random":
        return [_normalize(rng.standard_normal((n, R)))[0] for n in X.shape]
    factors = []
    for mode in (1, 2, 3):
        U, _, _ = np.linalg.svd(unfold(X, mode), full_matrices=False)
        n = X.shape[mode - 1]
        F = np.zeros((n, R))
        k = min(R, U.shape[1])
        F[:, :k] = U[:, :k]
        if k < R:
            F[:, k:] = rng.standard_normal((n, R - k))
        factors.append(_normalize(F)[0])
    return factors


def cp_als(X: np.ndarray, cfg: CpConfig = CpConfig()) -> CpDecomposition:
    """Fit ``X ~ sum_r w_r a_r o b_r o c_r`` by alternating regularized least squares.

    Each sweep solves the three normal-equation updates with Gram matrices
    formed as Hadamard products of the factor Grams, then normalizes and
    sorts the components. Stops after ``max_sweeps`` or when the change in fit
    falls below ``rel_tol * max(|fit_prev|, 1e-12)``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ConfigError("cp_als expects a 3-way tensor")
    if not np.all(np.isfinite(X)):
        raise NumericalError("input tensor contains non-finite values")
    cfg.check_shape(X.shape)
    X1, X2, X3 = unfold(X, 1), unfold(X, 2), unfold(X, 3)
    A, B, C = _init(X, cfg)
    eps = cfg.epsilon
    history: List[float] = []
    prev = None
    w = np.ones(cfg.rank)
    sweep = 0
    for sweep in range(1, cfg.max_sweeps + 1):
        C = C * w  # scale rides on C so the A-update sees the full model
        A = _solve(X1 @ khatri_rao(C, B), (C.T @ C) * (B.T @ B), eps, sweep)
        B = _solve(X2 @ khatri_rao(C, A), (C.T @ C) * (A.T @ A), eps, sweep)
        C = _solve(X3 @ khatri_rao(B, A), (B.T @ B) * (A.T @ A), eps, sweep)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(C))):
            raise NumericalError(f"non-finite factor values at sweep {sweep}")
        A, B, C, w = canonicalize(A, B, C)
        cur = relative_fit(X1, (A * w) @ khatri_rao(C, B).T)
        history.append(cur)
        if prev is not None and abs(cur - prev) <= cfg.rel_tol * max(abs(prev), 1e-12):
            break
        prev = cur
    return CpDecomposition(A=A, B=B, C=C, weights=w, fit=history[-1],
                           sweeps_used=sweep, fit_history=history)


def kruskal_rank(M: np.ndarray, rtol: float = 1e-10) -> int:
    """Largest k such that every k columns of ``M`` are linearly independent.

    Brute force over column subsets; meant for small column counts.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        raise ConfigError("kruskal_rank needs a non-empty matrix")
    n = M.shape[1]
    scale = max(np.linalg.norm(M, 2), np.finfo(float).tiny)
    k = 0
    for size in range(1, min(n, M.shape[0]) + 1):
        for cols in itertools.combinations(range(n), size):
            s = np.linalg.svd(M[:, cols], compute_uv=False)
            if s[-1] <= rtol * scale:
                return k
        k = size
    return k


@dataclass(frozen=True)
class IdentifiabilityReport:
    holds: bool
    margin: int
    kruskal_ranks: Tuple[int, int, int]
    rank: int
    rank_one: bool  # the inequality excludes R = 1, which is unique regardless

    def __bool__(self):
        return self.holds


def identifiability_check(d: CpDecomposition) -> IdentifiabilityReport:
    """Evaluate ``k_A + k_B + k_C >= 2R + 2`` literally."""
    ks = (kruskal_rank(d.A), kruskal_rank(d.B), kruskal_rank(d.C))
    lhs, rhs = sum(ks), 2 * d.rank + 2
    return IdentifiabilityReport(holds=lhs >= rhs, margin=lhs - rhs,
                                 kruskal_ranks=ks, rank=d.rank, rank_one=d.rank == 1)


def factor_match_score(d: CpDecomposition, truth: CpDecomposition) -> float:
    """Best-permutation mean of ``|cos a * cos b * cos c|`` over components."""
    if d.rank != truth.rank:
        raise ConfigError(f"rank mismatch: {d.rank} vs {truth.rank}")
    R = d.rank
    if R > 6:
        raise ConfigError("exhaustive matching is limited to R <= 6")

    def cosines(P, Q):
        P = P / np.maximum(np.linalg.norm(P, axis=0), 1e-300)
        Q = Q / np.maximum(np.linalg.norm(Q, axis=0), 1e-300)
        return P.T @ Q

    S = np.abs(cosines(truth.A, d.A) * cosines(truth.B, d.B) * cosines(truth.C, d.C))
    best = max(S[np.arange(R), list(p)].mean() for p in itertools.permutations(range(R)))
    return float(min(best, 1.0))


def random_cp(shape: Tuple[int, int, int], rank: int, seed: int,
              weights: Optional[Sequence[float]] = None) -> CpDecomposition:
    """Generic Gaussian factors with unit columns, sorted by ``weights``."""
    rng = rng_for(seed, 7)
    A, B, C = (_normalize(rng.standard_normal((n, rank)))[0] for n in shape)
    w = np.ones(rank) if weights is None else np.asarray(weights, dtype=float)
    order = np.lexsort((np.arange(rank), A[0], -w))
    return CpDecomposition(A=A[:, order], B=B[:, order], C=C[:, order],
                           weights=w[order].copy(), fit=1.0)
