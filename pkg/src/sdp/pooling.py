"""Fixed-length descriptor ``h`` pooled from a CP decomposition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .cpals import CpDecomposition, model_norm_sq
from .errors import ConfigError
from .seeding import rng_for

LAYOUT_VERSION = "h1"
COMPONENT_FIELDS = ("weight", "spatial_concentration", "temporal_centroid",
                    "temporal_spread", "spectral_centroid", "spectral_spread")
GLOBAL_FIELDS = ("energy", "fit", "amp_mean", "amp_std")


def descriptor_length(rank: int) -> int:
    return len(COMPONENT_FIELDS) * rank + len(GLOBAL_FIELDS)


def field_names(rank: int):
    names = [f"{f}_{r}" for r in range(rank) for f in COMPONENT_FIELDS]
    return names + list(GLOBAL_FIELDS)


@dataclass(frozen=True)
class PooledDescriptor:
    h: np.ndarray
    rank: int
    version: str = LAYOUT_VERSION

    def component(self, r: int) -> dict:
        base = len(COMPONENT_FIELDS) * r
        return dict(zip(COMPONENT_FIELDS, self.h[base:base + len(COMPONENT_FIELDS)]))

    @property
    def globals(self) -> dict:
        return dict(zip(GLOBAL_FIELDS, self.h[-len(GLOBAL_FIELDS):]))


def _energy_distribution(col: np.ndarray, name: str, r: int) -> np.ndarray:
    sq = col * col
    total = sq.sum()
    if not total > 0:
        raise ConfigError(f"component {r}: zero-norm {name} factor column")
    return sq / total


def _centroid_spread(p: np.ndarray) -> Tuple[float, float]:
    idx = np.arange(p.size, dtype=float)
    c = float(idx @ p)
    var = float(((idx - c) ** 2) @ p)
    return c, float(np.sqrt(max(var, 0.0)))


def pool(d: CpDecomposition, amp_mean: float = 0.0, amp_std: float = 0.0) -> PooledDescriptor:
    """Per-component statistics in weight order, then the global block.

    Spatial concentration is the inverse participation ratio ``sum p_a^2``
    of the energy distribution over antenna pairs. Centroids and spreads are
    the mean and standard deviation of the index under the squared,
    normalized spectral (B) and temporal (C) factor columns. ``amp_mean`` and
    ``amp_std`` summarize the decomposed tensor itself.
    """
    R = d.rank
    out = np.empty(descriptor_length(R))
    for r in range(R):
        pa = _energy_distribution(d.A[:, r], "spatial", r)
        pb = _energy_distribution(d.B[:, r], "spectral", r)
        pc = _energy_distribution(d.C[:, r], "temporal", r)
        tc, ts = _centroid_spread(pc)
        sc, ss = _centroid_spread(pb)
        out[6 * r:6 * r + 6] = (d.weights[r], float(pa @ pa), tc, ts, sc, ss)
    out[-4:] = (np.sqrt(max(model_norm_sq(d), 0.0)), d.fit, amp_mean, amp_std)
    if not np.all(np.isfinite(out)):
        raise ConfigError("pooled descriptor has non-finite entries")
    return PooledDescriptor(h=out, rank=R)


class Reprojection:
    """Frozen seeded linear map from ``h`` to a small (A~, K~, T~) tensor."""

    def __init__(self, in_dim: int, target_dims: Tuple[int, int, int], seed: int = 0,
                 matrix: Optional[np.ndarray] = None):
        self.in_dim = int(in_dim)
        self.target_dims = tuple(int(x) for x in target_dims)
        out_dim = int(np.prod(self.target_dims))
        if matrix is None:
            matrix = rng_for(seed, 23).standard_normal((out_dim, self.in_dim)) / np.sqrt(self.in_dim)
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (out_dim, self.in_dim):
            raise ConfigError(f"stored map has shape {matrix.shape}, expected {(out_dim, self.in_dim)}")
        self.matrix = matrix

    def __call__(self, h) -> np.ndarray:
        vec = h.h if isinstance(h, PooledDescriptor) else np.asarray(h, dtype=float)
        if vec.shape[-1] != self.in_dim:
            raise ConfigError(f"descriptor width {vec.shape[-1]} does not match map width {self.in_dim}")
        return (vec @ self.matrix.T).reshape(vec.shape[:-1] + self.target_dims)


def reproject(h, target_dims: Tuple[int, int, int], seed: int = 0) -> np.ndarray:
    vec = h.h if isinstance(h, PooledDescriptor) else np.asarray(h, dtype=float)
    return Reprojection(vec.shape[-1], target_dims, seed)(vec)
