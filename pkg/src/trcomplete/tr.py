"""Tensor-ring points, tangent vectors, and reconstruction.

A point is the tuple of mode-2 unfolding matrices (W_1, ..., W_d) of the
ring cores; cores are recovered on demand.  Points and tangent vectors are
immutable after construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .tensors import (
    check_dims,
    mode2_unfold_core,
    tensorize_mode2,
)

__all__ = [
    "TRPoint",
    "TangentVector",
    "make_point",
    "make_tangent",
    "check_ranks",
    "slice_matrix",
    "slice_stack",
    "tr_entry",
    "tr_full",
    "subchain_dense",
    "point_axpy",
    "point_as_tangent",
    "tangent_combine",
    "tangent_scale",
    "factor_inner",
    "factor_norm",
]

# Reconstruction guard: tr_full and subchain_dense refuse larger tensors.
DENSE_GUARD = 2**24

_POINT_VERSIONS = itertools.count(1)


def check_ranks(ranks) -> tuple[int, ...]:
    ranks = tuple(int(r) for r in ranks)
    if any(r < 1 for r in ranks):
        raise ValueError(f"all ranks must be >= 1, got {ranks}")
    return ranks


def _check_factors(dims, ranks, factors):
    d = len(dims)
    if len(ranks) != d or len(factors) != d:
        raise ValueError("need one rank and one factor per mode")
    for k in range(d):
        r, r_next = ranks[k], ranks[(k + 1) % d]
        want = (dims[k], r * r_next)
        if factors[k].shape != want:
            raise ValueError(f"factor {k + 1} has shape {factors[k].shape}, want {want}")
        if not np.all(np.isfinite(factors[k])):
            raise ValueError(f"factor {k + 1} has non-finite entries")


@dataclass(frozen=True)
class TRPoint:
    """A ring-format variable: one n_k x (r_k r_{k+1}) matrix per mode.

    `version` is a unique stamp used to detect stale metric state.
    """

    dims: tuple[int, ...]
    ranks: tuple[int, ...]
    factors: tuple[np.ndarray, ...]
    version: int = field(default_factory=lambda: next(_POINT_VERSIONS), compare=False)

    @property
    def order(self) -> int:
        return len(self.dims)


@dataclass(frozen=True)
class TangentVector:
    """A direction in the flat product space; same layout as a point's factors.

    Kept distinct from TRPoint so optimizer code cannot mix points and
    directions by accident.
    """

    dims: tuple[int, ...]
    ranks: tuple[int, ...]
    components: tuple[np.ndarray, ...]


def make_point(dims, ranks, factors) -> TRPoint:
    dims = check_dims(dims)
    ranks = check_ranks(ranks)
    factors = tuple(np.ascontiguousarray(w, dtype=np.float64) for w in factors)
    _check_factors(dims, ranks, factors)
    return TRPoint(dims, ranks, factors)


def make_tangent(dims, ranks, components) -> TangentVector:
    dims = check_dims(dims)
    ranks = check_ranks(ranks)
    components = tuple(np.ascontiguousarray(c, dtype=np.float64) for c in components)
    _check_factors(dims, ranks, components)
    return TangentVector(dims, ranks, components)


def _bond(p, k0: int) -> tuple[int, int]:
    """(left, right) bond sizes of mode k0 (0-based)."""
    return p.ranks[k0], p.ranks[(k0 + 1) % len(p.ranks)]


def slice_matrix(p: TRPoint, mode: int, i: int) -> np.ndarray:
    """Lateral slice of core `mode` at 1-based index `i`, shape r_k x r_{k+1}."""
    k0 = mode - 1
    if not 1 <= i <= p.dims[k0]:
        raise IndexError(f"index {i} out of range for extent {p.dims[k0]}")
    r, r_next = _bond(p, k0)
    return p.factors[k0][i - 1].reshape(r_next, r).T


def slice_stack(p: TRPoint, mode: int) -> np.ndarray:
    """All lateral slices of core `mode` stacked: shape (n_k, r_k, r_{k+1})."""
    k0 = mode - 1
    r, r_next = _bond(p, k0)
    return p.factors[k0].reshape(p.dims[k0], r_next, r).transpose(0, 2, 1)


def tr_entry(p: TRPoint, idx) -> float:
    """Entry at a 1-based multi-index: trace of the cyclic slice product."""
    idx = tuple(int(i) for i in idx)
    if len(idx) != p.order:
        raise ValueError(f"expected {p.order} indices, got {len(idx)}")
    m = slice_matrix(p, 1, idx[0])
    for k in range(2, p.order + 1):
        m = m @ slice_matrix(p, k, idx[k - 1])
    return float(np.trace(m))


def tr_full(p: TRPoint, guard: int = DENSE_GUARD) -> np.ndarray:
    """Reconstruct the dense tensor represented by `p`.

    Contracts the ring cores left to right and closes the loop with a trace.
    Guarded against accidental huge reconstructions.
    """
    total = int(np.prod(p.dims, dtype=np.int64))
    if total > guard:
        raise MemoryError(f"dense reconstruction of {total} entries exceeds guard {guard}")
    cores = [tensorize_mode2(p.factors[k], *_bond(p, k)) for k in range(p.order)]
    t = cores[0]
    for core in cores[1:]:
        t = np.tensordot(t, core, axes=(-1, 0))
    return np.trace(t, axis1=0, axis2=-1)


def subchain_dense(p: TRPoint, mode: int, guard: int = DENSE_GUARD) -> np.ndarray:
    """Dense subchain matrix of size n_{-k} x (r_k r_{k+1}).

    Test oracle only: enumerates all remaining multi-indices one row at a
    time, which is exactly the computation the production paths avoid.
    """
    d = p.order
    k0 = mode - 1
    n_rest = int(np.prod([p.dims[m] for m in range(d) if m != k0], dtype=np.int64))
    r, r_next = _bond(p, k0)
    if n_rest * r * r_next > guard:
        raise MemoryError("dense subchain exceeds memory guard")

    other = [m for m in range(d) if m != k0]
    strides = {}
    j = 1
    for m in other:
        strides[m] = j
        j *= p.dims[m]
    stacks = {m: slice_stack(p, m + 1) for m in other}

    out = np.empty((n_rest, r * r_next))
    # modes after k then modes before k, in ring order
    chain = [m for m in range(k0 + 1, d)] + [m for m in range(k0)]
    for row in range(n_rest):
        m0 = chain[0]
        prod = stacks[m0][(row // strides[m0]) % p.dims[m0]]
        for m in chain[1:]:
            prod = prod @ stacks[m][(row // strides[m]) % p.dims[m]]
        # row is vec of the transposed product, column-major
        out[row] = prod.ravel()
    return out


def _check_compatible(p: TRPoint, v: TangentVector):
    if p.dims != v.dims or p.ranks != v.ranks:
        raise ValueError("point and tangent vector have incompatible layout")


def point_axpy(p: TRPoint, s: float, v: TangentVector) -> TRPoint:
    """Retracted update W + s * xi (the retraction is the identity map)."""
    _check_compatible(p, v)
    factors = tuple(w + s * c for w, c in zip(p.factors, v.components))
    return TRPoint(p.dims, p.ranks, factors)


def point_as_tangent(p: TRPoint) -> TangentVector:
    return TangentVector(p.dims, p.ranks, p.factors)


def tangent_combine(a: float, u: TangentVector, b: float, v: TangentVector) -> TangentVector:
    if u.dims != v.dims or u.ranks != v.ranks:
        raise ValueError("tangent vectors have incompatible layout")
    comps = tuple(a * x + b * y for x, y in zip(u.components, v.components))
    return TangentVector(u.dims, u.ranks, comps)


def tangent_scale(s: float, v: TangentVector) -> TangentVector:
    return TangentVector(v.dims, v.ranks, tuple(s * c for c in v.components))


def _blocks(x) -> tuple[np.ndarray, ...]:
    return x.factors if isinstance(x, TRPoint) else x.components


def factor_inner(x, y) -> float:
    """Euclidean inner product summed over all factor matrices."""
    xs, ys = _blocks(x), _blocks(y)
    if len(xs) != len(ys) or any(a.shape != b.shape for a, b in zip(xs, ys)):
        raise ValueError("shape mismatch")
    return float(sum(np.vdot(a, b) for a, b in zip(xs, ys)))


def factor_norm(x) -> float:
    return math.sqrt(factor_inner(x, x))


def core_stacks(p: TRPoint) -> list[np.ndarray]:
    """Slice stacks for every mode; shared helper for batched chain products."""
    return [slice_stack(p, k) for k in range(1, p.order + 1)]


def point_from_cores(dims, cores) -> TRPoint:
    ranks = tuple(core.shape[0] for core in cores)
    factors = tuple(mode2_unfold_core(core) for core in cores)
    return make_point(dims, ranks, factors)
