"""Dense tensor substrate: index maps, unfoldings, and inner products.

Multi-indices are 1-based at the API boundary and converted to 0-based
internally.  All scalars are float64.  Every function here is pure.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "check_dims",
    "mode_linear_index",
    "unfold",
    "fold",
    "tensorize_mode2",
    "mode2_unfold_core",
    "tensor_inner",
    "frob_norm",
    "linearize_indices",
    "delinearize",
]


def check_dims(dims) -> tuple[int, ...]:
    """Validate tensor extents: at least three modes, all extents >= 1."""
    dims = tuple(int(n) for n in dims)
    if len(dims) < 3:
        raise ValueError(f"need at least 3 modes, got {len(dims)}")
    if any(n < 1 for n in dims):
        raise ValueError(f"all extents must be >= 1, got {dims}")
    return dims


def _strides_without(dims: tuple[int, ...], mode0: int) -> list[int]:
    """Column-major strides over the modes other than `mode0` (0-based)."""
    strides = []
    j = 1
    for m, n in enumerate(dims):
        if m == mode0:
            strides.append(0)
            continue
        strides.append(j)
        j *= n
    return strides


def mode_linear_index(dims, mode: int, reduced) -> int:
    """Map the d-1 remaining 1-based indices of a mode to a 1-based column.

    `reduced` lists (i_1, ..., i_{mode-1}, i_{mode+1}, ..., i_d).  The first
    remaining mode varies fastest, so the map is a bijection onto
    [1, prod of remaining extents].
    """
    dims = check_dims(dims)
    d = len(dims)
    if not 1 <= mode <= d:
        raise ValueError(f"mode {mode} out of range for {d} modes")
    reduced = tuple(int(i) for i in reduced)
    if len(reduced) != d - 1:
        raise ValueError(f"expected {d - 1} indices, got {len(reduced)}")
    k0 = mode - 1
    other = [m for m in range(d) if m != k0]
    strides = _strides_without(dims, k0)
    j = 0
    for i, m in zip(reduced, other):
        if not 1 <= i <= dims[m]:
            raise ValueError(f"index {i} out of range for extent {dims[m]}")
        j += (i - 1) * strides[m]
    return j + 1


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k matricization: rows indexed by mode k, columns by the rest.

    Columns follow the same ordering as :func:`mode_linear_index`.
    """
    d = t.ndim
    if not 1 <= mode <= d:
        raise ValueError(f"mode {mode} out of range for {d} modes")
    k0 = mode - 1
    return np.moveaxis(t, k0, 0).reshape(t.shape[k0], -1, order="F")


def fold(m: np.ndarray, mode: int, dims) -> np.ndarray:
    """Inverse of :func:`unfold`; exact round trip."""
    dims = check_dims(dims)
    k0 = mode - 1
    rest = tuple(n for j, n in enumerate(dims) if j != k0)
    expected = (dims[k0], int(np.prod(rest)))
    if m.shape != expected:
        raise ValueError(f"matrix shape {m.shape} does not match {expected}")
    t = m.reshape((dims[k0],) + rest, order="F")
    return np.moveaxis(t, 0, k0)


def tensorize_mode2(w: np.ndarray, r_left: int, r_right: int) -> np.ndarray:
    """Reshape an n x (r_left * r_right) matrix into an (r_left, n, r_right) core.

    Row i of `w` is the column-major vectorization of the i-th lateral slice,
    so the mode-2 unfolding of the result reproduces `w` exactly.
    """
    n, cols = w.shape
    if cols != r_left * r_right:
        raise ValueError(f"expected {r_left * r_right} columns, got {cols}")
    return w.reshape(n, r_right, r_left).transpose(2, 0, 1)


def mode2_unfold_core(core: np.ndarray) -> np.ndarray:
    """Mode-2 unfolding of an (r_left, n, r_right) core; inverse of tensorize_mode2."""
    r_left, n, r_right = core.shape
    return core.transpose(1, 2, 0).reshape(n, r_left * r_right)


def tensor_inner(x: np.ndarray, y: np.ndarray) -> float:
    """Elementwise-product sum of two equal-shape tensors."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.vdot(x, y))


def frob_norm(x: np.ndarray) -> float:
    return math.sqrt(tensor_inner(x, x))


def linearize_indices(dims, indices: np.ndarray) -> np.ndarray:
    """Column-major linear index (0-based) of 1-based multi-indices (N, d)."""
    dims = check_dims(dims)
    idx0 = np.asarray(indices, dtype=np.int64) - 1
    if idx0.ndim != 2 or idx0.shape[1] != len(dims):
        raise ValueError(f"expected (N, {len(dims)}) index array")
    if np.any(idx0 < 0) or np.any(idx0 >= np.asarray(dims)):
        raise ValueError("multi-index out of range")
    return np.ravel_multi_index(tuple(idx0.T), dims, order="F")


def delinearize(dims, linear: np.ndarray) -> np.ndarray:
    """Inverse of :func:`linearize_indices`; returns 1-based (N, d) indices."""
    dims = check_dims(dims)
    coords = np.unravel_index(np.asarray(linear, dtype=np.int64), dims, order="F")
    return np.stack(coords, axis=1) + 1
