"""Synthetic data generators and recovery metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objective import SparseSample, make_sample, sample_uniform
from .tensors import check_dims, frob_norm, linearize_indices
from .tr import TRPoint, tr_full

__all__ = [
    "NoiseSpec",
    "FunctionTensorSpec",
    "gen_tr_random",
    "add_normalized_noise",
    "gen_function_tensor",
    "function_excluded_linear",
    "sample_from_dense",
    "psnr",
    "mse",
    "relerr",
    "phase_sweep",
]


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise level must be >= 0")


@dataclass(frozen=True)
class FunctionTensorSpec:
    """Discretization of a radial test function on the unit cube grid."""

    name: str  # "h1" (exp(-|x|)) or "h2" (1/|x|)
    dims: tuple[int, ...]

    def __post_init__(self):
        if self.name not in ("h1", "h2"):
            raise ValueError(f"unknown function tag {self.name!r}")
        if any(n < 2 for n in self.dims):
            raise ValueError("grid needs at least 2 points per mode")


def gen_tr_random(dims, ranks, seed) -> tuple[TRPoint, np.ndarray]:
    """Random low-rank target: uniform [0, 1] factors and its dense tensor."""
    from .solvers import random_init  # local import avoids a cycle

    rng = np.random.default_rng(seed) if isinstance(seed, (int, np.integer)) else seed
    p = random_init(check_dims(dims), ranks, rng)
    return p, tr_full(p)


def add_normalized_noise(a_hat: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Unit-normalize the signal and add noise of Frobenius norm exactly sigma."""
    norm = frob_norm(a_hat)
    if norm == 0.0:
        raise ValueError("cannot normalize an all-zero tensor")
    out = a_hat / norm
    if spec.sigma > 0:
        rng = np.random.default_rng(spec.seed)
        e = rng.standard_normal(a_hat.shape)
        out = out + spec.sigma * e / frob_norm(e)
    return out


def gen_function_tensor(spec: FunctionTensorSpec) -> np.ndarray:
    """Evaluate the function on the uniform grid over [0, 1]^d.

    For the reciprocal-norm function the grid origin is undefined; it is set
    to zero here and must be excluded from any sampling set (see
    :func:`function_excluded_linear`).
    """
    axes = [np.arange(n) / (n - 1) for n in spec.dims]
    grids = np.meshgrid(*axes, indexing="ij")
    norm = np.sqrt(sum(g * g for g in grids))
    if spec.name == "h1":
        return np.exp(-norm)
    with np.errstate(divide="ignore"):
        out = 1.0 / norm
    out[tuple([0] * len(spec.dims))] = 0.0
    return out


def function_excluded_linear(spec: FunctionTensorSpec) -> np.ndarray:
    """Linear indices that sampling must skip for the given function."""
    if spec.name == "h2":
        return np.array([0], dtype=np.int64)
    return np.array([], dtype=np.int64)


def sample_from_dense(a: np.ndarray, count: int, rng,
                      exclude: np.ndarray | None = None) -> SparseSample:
    """Observe `count` uniformly chosen entries of a dense tensor."""
    dims = a.shape
    idx = sample_uniform(dims, count, rng, exclude=exclude)
    lin = linearize_indices(dims, idx)
    return make_sample(dims, idx, a.reshape(-1, order="F")[lin])


def mse(x: np.ndarray, a: np.ndarray) -> float:
    if x.shape != a.shape:
        raise ValueError("shape mismatch")
    return float(np.mean((x - a) ** 2))


def psnr(x: np.ndarray, a: np.ndarray) -> float:
    """Peak signal-to-noise ratio; the peak is the true tensor's maximum entry."""
    m = mse(x, a)
    if m == 0.0:
        return math.inf
    peak = float(np.max(a))
    return 10.0 * math.log10(peak * peak / m)


def relerr(x: np.ndarray, a: np.ndarray) -> float:
    if x.shape != a.shape:
        raise ValueError("shape mismatch")
    return frob_norm(x - a) / frob_norm(a)


def phase_sweep(n_grid, omega_grid, rank, trials: int, cfg, base_seed: int = 0,
                success_tol: float = 1e-4, max_iters: int = 250,
                test_size: int = 100) -> np.ndarray:
    """Recovery success counts over a (tensor size, sample count) grid.

    One cell runs `trials` independent problems; a trial succeeds when the
    held-out error drops below `success_tol` within `max_iters` iterations.
    Rows index the size grid, columns the sample-count grid, so each row is
    expected to be non-decreasing.
    """
    from dataclasses import replace

    from .objective import make_sample as _make
    from .solvers import random_init, solve

    rank = tuple(rank)
    d = len(rank)
    counts = np.zeros((len(n_grid), len(omega_grid)), dtype=np.int64)
    run_cfg = replace(cfg, stopping=replace(cfg.stopping, max_iters=max_iters))

    for i, n in enumerate(n_grid):
        dims = (int(n),) * d
        total = int(np.prod(dims))
        for j, n_omega in enumerate(omega_grid):
            n_omega = int(min(n_omega, total - test_size))
            for trial in range(trials):
                seed = np.random.SeedSequence([base_seed, int(n), int(n_omega), trial])
                rng = np.random.default_rng(seed)
                target, dense = gen_tr_random(dims, rank, rng)
                data = sample_from_dense(dense, n_omega, rng)
                gamma_idx = sample_uniform(dims, test_size, rng,
                                           exclude=linearize_indices(dims, data.indices))
                gamma = _make(dims, gamma_idx,
                              dense.reshape(-1, order="F")[linearize_indices(dims, gamma_idx)])
                init = random_init(dims, rank, rng, data)
                _, rec = solve(init, data, run_cfg, test=gamma)
                best = min(log.eps_gamma for log in rec.iterations
                           if log.eps_gamma is not None)
                if best < success_tol:
                    counts[i, j] += 1
    return counts
