"""Completion solvers: preconditioned gradient descent, conjugate gradient,
an alternating least-squares baseline, and the greedy rank-increase driver."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .linesearch import (
    LineSearchParams,
    RBBMemory,
    armijo_step,
    exact_step,
    rbb_step,
)
from .metric import metric_inner, metric_norm, metric_state, riemannian_gradient
from .objective import (
    ObjectiveConfig,
    SparseSample,
    cost,
    euclidean_gradient,
    relative_error,
    residual_values,
    subchain_rows,
)
from .tr import (
    TangentVector,
    TRPoint,
    factor_inner,
    factor_norm,
    make_point,
    point_axpy,
    slice_stack,
    tangent_combine,
    tangent_scale,
    tensorize_mode2,
    mode2_unfold_core,
)

__all__ = [
    "StoppingCriteria",
    "SolverConfig",
    "IterationLog",
    "RunRecord",
    "random_init",
    "tr_rgd",
    "tr_rcg",
    "tr_als",
    "rank_increase_drive",
    "check_convergence_invariants",
    "solve",
]


@dataclass(frozen=True)
class StoppingCriteria:
    """Termination thresholds; gradient norm applies to Riemannian solvers only."""

    eps_relerr: float = 1e-12
    eps_relchange: float = 1e-8
    eps_gradnorm: float = 1e-8
    max_iters: int = 1000
    time_budget: float | None = None

    def __post_init__(self):
        if min(self.eps_relerr, self.eps_relchange, self.eps_gradnorm) <= 0:
            raise ValueError("stopping thresholds must be positive")


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = "rgd"  # rgd | rcg | als
    stepsize: str = "rbb"  # rbb | exact (rgd only)
    bb_variant: str = "rbb2"
    delta: float = 1e-8
    lam: float = 0.0
    linesearch: LineSearchParams = field(default_factory=LineSearchParams)
    stopping: StoppingCriteria = field(default_factory=StoppingCriteria)
    seed: int = 0
    bb_floor: float = 1e-10
    bb_ceil: float = 1e10
    max_rank: tuple[int, ...] | None = None
    phase_iters: int = 50  # per fixed-rank phase of the rank-increase driver
    rank_floor: float = 1e-6  # validation error considered fully converged


@dataclass
class IterationLog:
    iter: int
    time_s: float
    f: float
    eps_omega: float
    eps_gamma: float | None
    grad_norm: float | None  # Frobenius norm of the metric gradient
    step: float | None
    beta: float | None
    # extra diagnostics kept in memory (not part of the CSV schema)
    w_norm: float = math.nan
    dir_deriv: float = math.nan  # g(grad f, eta) at this iterate
    grad_norm_w: float = math.nan  # metric norm of the gradient


@dataclass
class RunRecord:
    algorithm: str
    iterations: list[IterationLog] = field(default_factory=list)
    termination: str = "max_iters"

    @property
    def final(self) -> IterationLog:
        return self.iterations[-1]


def random_init(dims, ranks, rng, data: SparseSample | None = None) -> TRPoint:
    """Uniform [0, 1] factors, scaled so initial entries match the data's magnitude."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    dims = tuple(dims)
    ranks = tuple(ranks)
    d = len(dims)
    scale = 1.0
    if data is not None:
        mean_sq = float(data.values @ data.values) / len(data)
        if mean_sq > 0:
            scale = mean_sq ** (1.0 / (2.0 * d))
    factors = [scale * rng.uniform(size=(dims[k], ranks[k] * ranks[(k + 1) % d]))
               for k in range(d)]
    return make_point(dims, ranks, factors)


def _gamma_error(p: TRPoint, test: SparseSample | None) -> float | None:
    return None if test is None else relative_error(p, test)


def _train_error(resid: np.ndarray, values: np.ndarray) -> float:
    """Relative residual norm; undefined (nan) when the observations are all zero."""
    denom = math.sqrt(float(values @ values))
    if denom == 0.0:
        return math.nan
    return math.sqrt(float(resid @ resid)) / denom


def _stopped(log: IterationLog, prev_eps: float | None, stop: StoppingCriteria,
             t: int, elapsed: float, riemannian: bool) -> str | None:
    if log.eps_omega < stop.eps_relerr:
        return "relerr"
    if prev_eps is not None and prev_eps > 0:
        if abs((log.eps_omega - prev_eps) / prev_eps) < stop.eps_relchange:
            return "relchange"
    if riemannian and log.grad_norm is not None and log.grad_norm < stop.eps_gradnorm:
        return "gradnorm"
    if t >= stop.max_iters:
        return "max_iters"
    if stop.time_budget is not None and elapsed > stop.time_budget:
        return "time_budget"
    return None


def _riemannian_solve(init: TRPoint, data: SparseSample, cfg: SolverConfig,
                      test: SparseSample | None, use_cg: bool) -> tuple[TRPoint, RunRecord]:
    if init.dims != data.dims:
        raise ValueError("initial point does not match the data's tensor shape")
    obj = ObjectiveConfig(lam=cfg.lam, rate=data.rate)
    stop = cfg.stopping
    prm = cfg.linesearch
    rec = RunRecord("rcg" if use_cg else "rgd")

    p = init
    mem: RBBMemory | None = None
    prev_eta: TangentVector | None = None
    prev_grad: TangentVector | None = None
    prev_eps: float | None = None
    prev_exact = 1.0
    t0 = time.perf_counter()

    t = 0
    while True:
        resid = residual_values(p, data)
        f = cost(p, data, obj, resid=resid)
        eps_omega = _train_error(resid, data.values)
        g_eucl = euclidean_gradient(p, data, obj, resid=resid)
        state = metric_state(p, cfg.delta)
        grad = riemannian_gradient(state, g_eucl, p)
        grad_norm = factor_norm(grad)
        grad_norm_w = metric_norm(state, grad)

        log = IterationLog(t, time.perf_counter() - t0, f, eps_omega,
                           _gamma_error(p, test), grad_norm, None, None,
                           w_norm=factor_norm(p), grad_norm_w=grad_norm_w)
        rec.iterations.append(log)

        reason = _stopped(log, prev_eps, stop, t, log.time_s, riemannian=True)
        if reason is not None:
            rec.termination = reason
            return p, rec
        prev_eps = eps_omega

        # search direction
        beta = 0.0
        eta = tangent_scale(-1.0, grad)
        if use_cg and prev_eta is not None:
            if metric_inner(state, prev_eta, grad) >= 0:
                beta = 0.0  # restart to steepest descent
            else:
                y = tangent_combine(1.0, grad, -1.0, prev_grad)
                denom = metric_inner(state, y, prev_eta)
                if denom != 0.0:
                    beta = max(metric_inner(state, y, grad) / denom, 0.0)
            if beta != 0.0:
                eta = tangent_combine(-1.0, grad, beta, prev_eta)
        log.beta = beta if use_cg else None

        g0 = metric_inner(state, grad, eta)
        log.dir_deriv = g0

        # stepsize
        if cfg.stepsize == "exact" and not use_cg:
            res = exact_step(p, eta, data, obj, s_max=2.0 * prev_exact)
            if res.interior:
                s = res.step
                prev_exact = s
            else:
                s = armijo_step(lambda z: cost(point_axpy(p, z, eta), data, obj),
                                f, g0, 1.0, prm)
        else:
            if mem is None:
                seed = exact_step(p, eta, data, obj, s_max=2.0 * prev_exact)
                s0 = seed.step if seed.interior else 1.0
                if seed.interior:
                    prev_exact = s0
            else:
                s0 = rbb_step(state, mem, p, grad, cfg.bb_variant,
                              cfg.bb_floor, cfg.bb_ceil)
            s = armijo_step(lambda z: cost(point_axpy(p, z, eta), data, obj),
                            f, g0, s0, prm)

        if s is None:
            rec.termination = "stalled"
            return p, rec
        log.step = s

        new_p = point_axpy(p, s, eta)
        mem = RBBMemory(p, grad)
        prev_eta, prev_grad = eta, grad
        p = new_p
        t += 1


def tr_rgd(init: TRPoint, data: SparseSample, cfg: SolverConfig,
           test: SparseSample | None = None) -> tuple[TRPoint, RunRecord]:
    """Preconditioned gradient descent with exact or BB-seeded Armijo steps."""
    return _riemannian_solve(init, data, cfg, test, use_cg=False)


def tr_rcg(init: TRPoint, data: SparseSample, cfg: SolverConfig,
           test: SparseSample | None = None) -> tuple[TRPoint, RunRecord]:
    """Preconditioned conjugate gradient with the clipped Hestenes-Stiefel rule."""
    return _riemannian_solve(init, data, cfg, test, use_cg=True)


def _als_update_mode(p: TRPoint, data: SparseSample, obj: ObjectiveConfig,
                     mode: int) -> np.ndarray:
    """Exact minimizer of the objective over one factor, all rows independently."""
    rows_mat = subchain_rows(p, data.indices, mode)
    order, starts, row_ids = data.mode_groups(mode)
    sorted_rows = rows_mat[order]
    sorted_vals = data.values[order]
    n_k, m = p.dims[mode - 1], rows_mat.shape[1]
    ends = np.r_[starts[1:], len(data)]

    ridge = data.rate * obj.lam
    new_w = np.zeros((n_k, m)) if obj.lam > 0 else p.factors[mode - 1].copy()
    eye = np.eye(m)
    for seg, i in enumerate(row_ids):
        block = sorted_rows[starts[seg]:ends[seg]]
        vals = sorted_vals[starts[seg]:ends[seg]]
        gram = block.T @ block + ridge * eye
        rhs = block.T @ vals
        try:
            new_w[i] = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            # rank-deficient row system with lam = 0; minimum-norm solution
            new_w[i] = np.linalg.lstsq(block, vals, rcond=None)[0]
    return new_w


def tr_als(init: TRPoint, data: SparseSample, cfg: SolverConfig,
           test: SparseSample | None = None) -> tuple[TRPoint, RunRecord]:
    """Alternating least squares: modes updated sequentially, each to its
    regularized subproblem optimum, so the cost never increases."""
    if init.dims != data.dims:
        raise ValueError("initial point does not match the data's tensor shape")
    obj = ObjectiveConfig(lam=cfg.lam, rate=data.rate)
    stop = cfg.stopping
    rec = RunRecord("als")
    p = init
    prev_eps: float | None = None
    t0 = time.perf_counter()

    t = 0
    while True:
        resid = residual_values(p, data)
        f = cost(p, data, obj, resid=resid)
        eps_omega = _train_error(resid, data.values)
        log = IterationLog(t, time.perf_counter() - t0, f, eps_omega,
                           _gamma_error(p, test), None, None, None,
                           w_norm=factor_norm(p))
        rec.iterations.append(log)

        reason = _stopped(log, prev_eps, stop, t, log.time_s, riemannian=False)
        if reason is not None:
            rec.termination = reason
            return p, rec
        prev_eps = eps_omega

        for mode in range(1, p.order + 1):
            new_w = _als_update_mode(p, data, obj, mode)
            factors = list(p.factors)
            factors[mode - 1] = new_w
            p = make_point(p.dims, p.ranks, factors)
        t += 1


_SOLVERS = {"rgd": tr_rgd, "rcg": tr_rcg, "als": tr_als}


def solve(init: TRPoint, data: SparseSample, cfg: SolverConfig,
          test: SparseSample | None = None) -> tuple[TRPoint, RunRecord]:
    """Dispatch on cfg.algorithm."""
    try:
        fn = _SOLVERS[cfg.algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {cfg.algorithm!r}") from None
    return fn(init, data, cfg, test)


def _grow_bond(p: TRPoint, bond: int, rng) -> TRPoint:
    """Embed a point into the space with bond `bond` (1-based) one larger.

    The new core blocks are filled with small scaled noise so the
    represented tensor is perturbed only slightly.
    """
    d = p.order
    k0 = bond - 1
    left = (k0 - 1) % d  # core whose right bond grows
    new_ranks = list(p.ranks)
    new_ranks[k0] += 1

    def noise(shape, ref_factor, n_rows):
        scale = 1e-4 * np.linalg.norm(ref_factor) / math.sqrt(n_rows)
        return scale * rng.standard_normal(shape)

    factors = list(p.factors)

    core_l = tensorize_mode2(p.factors[left], p.ranks[left], p.ranks[k0])
    pad = noise((p.ranks[left], p.dims[left], 1), p.factors[left], p.dims[left])
    factors[left] = mode2_unfold_core(np.concatenate([core_l, pad], axis=2))

    core_r = tensorize_mode2(p.factors[k0], p.ranks[k0], p.ranks[(k0 + 1) % d])
    pad = noise((1, p.dims[k0], p.ranks[(k0 + 1) % d]), p.factors[k0], p.dims[k0])
    factors[k0] = mode2_unfold_core(np.concatenate([core_r, pad], axis=0))

    return make_point(p.dims, tuple(new_ranks), factors)


def rank_increase_drive(data: SparseSample, validation: SparseSample,
                        cfg: SolverConfig, test: SparseSample | None = None,
                        ) -> tuple[TRPoint, RunRecord]:
    """Greedy rank search: start at rank one everywhere and grow one bond at
    a time, keeping an increment only if the validation error drops.

    Each fixed-rank phase runs the configured solver capped at
    cfg.phase_iters iterations.  Stops when every bond is at its cap or a
    full cycle of candidate bonds is rejected.
    """
    if validation is None or len(validation) == 0:
        raise ValueError("rank-increase driver needs a non-empty validation set")
    if cfg.max_rank is None:
        raise ValueError("config must set max_rank")
    max_rank = tuple(int(r) for r in cfg.max_rank)
    d = len(data.dims)
    if len(max_rank) != d or any(r < 1 for r in max_rank):
        raise ValueError("max_rank must have one entry >= 1 per mode")

    rng = np.random.default_rng(cfg.seed)
    phase_cfg = replace(cfg, stopping=replace(cfg.stopping, max_iters=cfg.phase_iters))

    p = random_init(data.dims, (1,) * d, rng, data)
    p, rec = solve(p, data, phase_cfg, test)
    record = RunRecord(rec.algorithm, list(rec.iterations), rec.termination)
    best_val = relative_error(p, validation)

    bond = 0
    rejected = 0
    while True:
        open_bonds = [k for k in range(d) if p.ranks[k] < max_rank[k]]
        if not open_bonds:
            record.termination = "max_rank"
            break
        if rejected >= len(open_bonds):
            record.termination = "no_rank_acceptance"
            break
        # next candidate bond, cyclic over modes that can still grow
        while (bond % d) not in open_bonds:
            bond += 1
        k = bond % d
        bond += 1

        candidate = _grow_bond(p, k + 1, rng)
        cand_p, cand_rec = solve(candidate, data, phase_cfg, test)
        val = relative_error(cand_p, validation)
        # once the parent is converged on the validation set, noise-floor
        # fluctuations must not grow the rank
        if val < best_val and best_val >= cfg.rank_floor:
            p, best_val = cand_p, val
            # keep the concatenated trace strictly increasing in `iter`
            offset = record.final.iter + 1
            for log in cand_rec.iterations:
                log.iter += offset
            record.iterations.extend(cand_rec.iterations)
            rejected = 0
        else:
            rejected += 1
    return p, record


@dataclass
class InvariantReport:
    ok: bool
    violations: list[str]


def check_convergence_invariants(rec: RunRecord, lam: float,
                                 require_descent_dirs: bool = False) -> InvariantReport:
    """Verify the logged run against the theory-backed runtime properties.

    (a) non-increasing cost, (b) the ridge-induced iterate bound when
    lam > 0, (c) for conjugate-gradient runs, every direction is at least
    as steep as the negative gradient in the metric.
    """
    violations = []
    logs = rec.iterations
    for a, b in zip(logs, logs[1:]):
        if b.f > a.f * (1 + 1e-12) + 1e-15:
            violations.append(f"cost increased at iteration {b.iter}: {a.f} -> {b.f}")
    if lam > 0 and logs:
        bound = 2.0 * logs[0].f / lam
        for log in logs:
            if log.w_norm**2 > bound + 1e-9:
                violations.append(
                    f"iterate norm bound violated at iteration {log.iter}: "
                    f"{log.w_norm**2} > {bound}")
    if require_descent_dirs:
        for log in logs:
            if math.isnan(log.dir_deriv):
                continue
            if log.dir_deriv > -log.grad_norm_w**2 + 1e-10:
                violations.append(
                    f"direction not gradient-related at iteration {log.iter}")
    return InvariantReport(not violations, violations)
