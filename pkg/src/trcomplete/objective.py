"""Sampling sets, the regularized sampled objective, and its gradient.

The gradient accumulates per-sample subchain rows through shared prefix and
suffix slice products, so the full subchain matrix is never materialized.
All per-sample work is batched over the whole sampling set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensors import check_dims, delinearize, linearize_indices
from .tr import TangentVector, TRPoint, core_stacks, factor_inner

__all__ = [
    "SparseSample",
    "ObjectiveConfig",
    "make_sample",
    "sample_uniform",
    "chain_entries",
    "subchain_rows",
    "residual_values",
    "cost",
    "euclidean_gradient",
]


@dataclass
class SparseSample:
    """Observed entries on a sampling set, sorted by linearized index."""

    dims: tuple[int, ...]
    indices: np.ndarray  # (N, d) int64, 1-based
    values: np.ndarray  # (N,) float64
    _row_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def rate(self) -> float:
        return len(self) / float(np.prod(self.dims, dtype=np.float64))

    def idx0(self) -> np.ndarray:
        return self.indices - 1

    def mode_groups(self, mode: int):
        """(order, starts, rows) grouping samples by their index along `mode`.

        `order` sorts samples by the mode index, `starts` are segment starts
        into the sorted array, `rows` the distinct 0-based row indices.
        Cached per mode; the sample is immutable by convention.
        """
        if mode not in self._row_cache:
            col = self.indices[:, mode - 1] - 1
            order = np.argsort(col, kind="stable")
            sorted_col = col[order]
            starts = np.flatnonzero(np.r_[True, sorted_col[1:] != sorted_col[:-1]])
            rows = sorted_col[starts]
            self._row_cache[mode] = (order, starts, rows)
        return self._row_cache[mode]


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights of the sampled least-squares term and the ridge term."""

    lam: float = 0.0
    rate: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("regularization weight must be >= 0")
        if not 0 < self.rate <= 1:
            raise ValueError("sampling rate must lie in (0, 1]")


def make_sample(dims, indices, values) -> SparseSample:
    """Validate and sort observed entries; duplicate indices are rejected."""
    dims = check_dims(dims)
    indices = np.asarray(indices, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if indices.shape[0] != values.shape[0]:
        raise ValueError("index/value count mismatch")
    if indices.shape[0] == 0:
        raise ValueError("empty sampling set")
    lin = linearize_indices(dims, indices)
    order = np.argsort(lin, kind="stable")
    lin = lin[order]
    if np.any(lin[1:] == lin[:-1]):
        raise ValueError("duplicate multi-indices in sampling set")
    return SparseSample(dims, np.ascontiguousarray(indices[order]),
                        np.ascontiguousarray(values[order]))


def sample_uniform(dims, count: int, rng, exclude: np.ndarray | None = None) -> np.ndarray:
    """Draw `count` distinct 1-based multi-indices uniformly without replacement.

    `exclude` removes linear indices (0-based) from the candidate pool, e.g.
    to draw a test set from the complement of a training set.
    """
    dims = check_dims(dims)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    total = int(np.prod(dims, dtype=np.int64))
    pool = np.arange(total, dtype=np.int64)
    if exclude is not None and len(exclude) > 0:
        pool = np.setdiff1d(pool, np.asarray(exclude, dtype=np.int64), assume_unique=False)
    if not 0 < count <= len(pool):
        raise ValueError(f"count {count} out of range for pool of {len(pool)}")
    lin = rng.choice(pool, size=count, replace=False)
    return delinearize(dims, np.sort(lin))


def _gather_slices(p: TRPoint, idx0: np.ndarray) -> list[np.ndarray]:
    """Per-sample lateral slices, one (N, r_k, r_{k+1}) stack per mode."""
    stacks = core_stacks(p)
    return [stacks[k][idx0[:, k]] for k in range(p.order)]


def _prefix_suffix(slices: list[np.ndarray]):
    """Left and right partial slice products shared by all modes.

    prefix[k] is the product of modes 1..k (prefix[0] = I), suffix[k] the
    product of modes k+1..d (suffix[d] = I), batched over samples.
    """
    d = len(slices)
    n = slices[0].shape[0]
    r1 = slices[0].shape[1]
    eye = np.broadcast_to(np.eye(r1), (n, r1, r1))
    prefix = [eye]
    for k in range(d):
        prefix.append(prefix[-1] @ slices[k])
    suffix = [None] * (d + 1)
    suffix[d] = eye
    for k in range(d - 1, -1, -1):
        suffix[k] = slices[k] @ suffix[k + 1]
    return prefix, suffix


def chain_entries(p: TRPoint, indices: np.ndarray) -> np.ndarray:
    """Entries of the represented tensor at 1-based multi-indices (N, d)."""
    idx0 = np.asarray(indices, dtype=np.int64) - 1
    slices = _gather_slices(p, idx0)
    prod = slices[0]
    for s in slices[1:]:
        prod = prod @ s
    return np.einsum("nii->n", prod)


def subchain_rows(p: TRPoint, indices: np.ndarray, mode: int) -> np.ndarray:
    """Subchain rows for one mode at the given samples, shape (N, r_k r_{k+1})."""
    idx0 = np.asarray(indices, dtype=np.int64) - 1
    slices = _gather_slices(p, idx0)
    prefix, suffix = _prefix_suffix(slices)
    k0 = mode - 1
    m = suffix[k0 + 1] @ prefix[k0]
    return m.reshape(m.shape[0], -1)


def residual_values(p: TRPoint, data: SparseSample) -> np.ndarray:
    """Residuals between the point's entries and the observed values on the set."""
    if p.dims != data.dims:
        raise ValueError("point and sample have different tensor shapes")
    return chain_entries(p, data.indices) - data.values


def cost(p: TRPoint, data: SparseSample, cfg: ObjectiveConfig,
         resid: np.ndarray | None = None) -> float:
    """Sampled least-squares cost plus ridge term.

    (1 / 2 rate) * sum of squared residuals + (lam / 2) * squared factor norm.
    """
    if resid is None:
        resid = residual_values(p, data)
    val = float(resid @ resid) / (2.0 * cfg.rate)
    if cfg.lam != 0.0:
        val += 0.5 * cfg.lam * factor_inner(p, p)
    return val


def _scatter_rows(contrib: np.ndarray, data: SparseSample, mode: int, n_rows: int) -> np.ndarray:
    """Sum per-sample row contributions into an (n_rows, m) matrix."""
    order, starts, rows = data.mode_groups(mode)
    sums = np.add.reduceat(contrib[order], starts, axis=0)
    out = np.zeros((n_rows, contrib.shape[1]))
    out[rows] = sums
    return out


def euclidean_gradient(p: TRPoint, data: SparseSample, cfg: ObjectiveConfig,
                       resid: np.ndarray | None = None) -> TangentVector:
    """Gradient of :func:`cost` without materializing any subchain matrix.

    Each observed entry contributes its scaled subchain row to one row of
    each mode's gradient block; prefix/suffix slice products are shared
    across all modes in one pass over the sampling set.
    """
    if p.dims != data.dims:
        raise ValueError("point and sample have different tensor shapes")
    idx0 = data.idx0()
    slices = _gather_slices(p, idx0)
    prefix, suffix = _prefix_suffix(slices)
    if resid is None:
        resid = np.einsum("nii->n", prefix[p.order]) - data.values
    coeff = resid / cfg.rate

    comps = []
    for k0 in range(p.order):
        m = suffix[k0 + 1] @ prefix[k0]
        rows = coeff[:, None] * m.reshape(m.shape[0], -1)
        g = _scatter_rows(rows, data, k0 + 1, p.dims[k0])
        if cfg.lam != 0.0:
            g += cfg.lam * p.factors[k0]
        comps.append(g)
    return TangentVector(p.dims, p.ranks, tuple(comps))


def relative_error(p: TRPoint, data: SparseSample) -> float:
    """Relative Frobenius error of the point's entries on a sampling set."""
    denom = math.sqrt(float(data.values @ data.values))
    if denom == 0.0:
        raise ValueError("all-zero observed values on the set")
    resid = residual_values(p, data)
    return math.sqrt(float(resid @ resid)) / denom
