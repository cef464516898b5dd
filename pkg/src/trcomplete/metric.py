"""Preconditioned metric: per-mode Gram matrices and Riemannian gradients.

The Gram matrix of each mode's subchain is built by a ring recursion that
applies Kronecker factors blockwise, so neither the subchain matrix nor any
dense Kronecker product is ever formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .objective import SparseSample, _gather_slices, _prefix_suffix, _scatter_rows
from .tr import TangentVector, TRPoint, slice_stack

__all__ = [
    "MetricState",
    "subchain_gram",
    "metric_state",
    "metric_inner",
    "metric_norm",
    "riemannian_gradient",
    "hessian_diag_apply",
]


@dataclass(frozen=True)
class MetricState:
    """Per-mode Grams, their shifted Cholesky factors, and the base point stamp.

    Valid only at the point it was computed from; the version stamp makes
    cross-point use an explicit error instead of a silent bug.
    """

    point_version: int
    delta: float
    grams: tuple[np.ndarray, ...]
    chol: tuple  # cho_factor results for gram + delta * I


def subchain_gram(p: TRPoint, mode: int) -> np.ndarray:
    """Gram matrix of the mode's subchain, size (r_k r_{k+1}) squared.

    Ring recursion: seed with the summed outer products of the vectorized
    transposed slices of the neighboring core, then absorb the remaining
    cores one by one.  Kronecker factors act only on the slow index block,
    implemented as a contraction, never as a dense Kronecker matrix.
    """
    d = p.order
    k0 = mode - 1
    rk = p.ranks[k0]

    # ring order of the remaining modes, nearest-left first
    chain = [(k0 - step) % d for step in range(1, d)]

    j0 = chain[0]
    slices = slice_stack(p, j0 + 1)  # (n_j, r_j, r_{j+1})
    vecs = slices.reshape(slices.shape[0], -1)  # vec of transposed slices
    h = vecs.T @ vecs

    for j in chain[1:]:
        slices = slice_stack(p, j + 1)
        rb = slices.shape[2]  # current slow block size r_{j+1}
        h4 = h.reshape(rb, rk, rb, rk)
        h = np.einsum("sic,cadb,sjd->iajb", slices, h4, slices, optimize=True)
        h = h.reshape(slices.shape[1] * rk, slices.shape[1] * rk)
    # rounding can break exact symmetry of the accumulated sum
    return 0.5 * (h + h.T)


def metric_state(p: TRPoint, delta: float) -> MetricState:
    """Assemble the metric at a point: Grams plus shifted Cholesky factors.

    A Cholesky failure signals that `delta` is too small for the accumulated
    rounding; callers should retry with a larger shift.
    """
    if delta <= 0:
        raise ValueError("metric shift must be > 0")
    grams = tuple(subchain_gram(p, k) for k in range(1, p.order + 1))
    chols = []
    for g in grams:
        h = g + delta * np.eye(g.shape[0])
        try:
            chols.append(cho_factor(h, lower=True))
        except LinAlgError as exc:
            raise LinAlgError(f"metric shift {delta} too small for stable factorization") from exc
    return MetricState(p.version, float(delta), grams, tuple(chols))


def _check_state(st: MetricState, p: TRPoint | None):
    if p is not None and st.point_version != p.version:
        raise ValueError("metric state is stale: computed at a different point")


def metric_inner(st: MetricState, xi: TangentVector, eta: TangentVector) -> float:
    """Preconditioned inner product: sum over modes of tr(xi_k H_k eta_k^T)."""
    if xi.dims != eta.dims or xi.ranks != eta.ranks:
        raise ValueError("tangent vectors have incompatible layout")
    total = 0.0
    for g, x, e in zip(st.grams, xi.components, eta.components):
        if x.shape[1] != g.shape[0]:
            raise ValueError("tangent vector does not match metric state")
        total += float(np.vdot(x @ g, e)) + st.delta * float(np.vdot(x, e))
    return total


def metric_norm(st: MetricState, xi: TangentVector) -> float:
    return math.sqrt(max(metric_inner(st, xi, xi), 0.0))


def riemannian_gradient(st: MetricState, g_eucl: TangentVector,
                        p: TRPoint | None = None) -> TangentVector:
    """Convert a Euclidean gradient to the metric's gradient.

    Solves eta_k H_k = G_k per mode via the cached Cholesky factors.  Pass
    the base point to assert the state is not stale.
    """
    _check_state(st, p)
    comps = []
    for c, g in zip(st.chol, g_eucl.components):
        comps.append(cho_solve(c, g.T).T)
    return TangentVector(g_eucl.dims, g_eucl.ranks, tuple(comps))


def hessian_diag_apply(p: TRPoint, data: SparseSample, xi: TangentVector,
                       rate: float | None = None) -> TangentVector:
    """Sampled diagonal-block curvature action on a tangent vector.

    Diagnostic: per mode, projects xi_k onto the sampled subchain rows and
    scatters back, scaled by the sampling rate.  Its expectation over the
    sampling pattern is xi_k times the mode's Gram matrix.
    """
    if p.dims != xi.dims or p.ranks != xi.ranks:
        raise ValueError("point and tangent vector have incompatible layout")
    if rate is None:
        rate = data.rate
    idx0 = data.idx0()
    slices = _gather_slices(p, idx0)
    prefix, suffix = _prefix_suffix(slices)
    comps = []
    for k0 in range(p.order):
        m = suffix[k0 + 1] @ prefix[k0]
        rows = m.reshape(m.shape[0], -1)
        z = np.einsum("nc,nc->n", xi.components[k0][idx0[:, k0]], rows)
        contrib = (z / rate)[:, None] * rows
        comps.append(_scatter_rows(contrib, data, k0 + 1, p.dims[k0]))
    return TangentVector(p.dims, p.ranks, tuple(comps))
