"""End-to-end acceptance suite.

Twelve criteria, one test each, printed as a pass/fail line (run pytest with
-s or check the captured output).  Tolerances are pinned; the heavier
experiment replications (criteria 6, 7, 10, 12) take tens of seconds each.
"""

import math
import time

import numpy as np
import pytest

import trcomplete as tc
from trcomplete.cli import param_count
from trcomplete.datagen import (
    FunctionTensorSpec,
    NoiseSpec,
    add_normalized_noise,
    function_excluded_linear,
    gen_function_tensor,
    gen_tr_random,
    phase_sweep,
    sample_from_dense,
)
from trcomplete.linesearch import exact_step
from trcomplete.metric import metric_inner, metric_state, riemannian_gradient, subchain_gram
from trcomplete.objective import (
    ObjectiveConfig,
    cost,
    euclidean_gradient,
    make_sample,
    relative_error,
    sample_uniform,
)
from trcomplete.solvers import (
    SolverConfig,
    StoppingCriteria,
    check_convergence_invariants,
    rank_increase_drive,
    random_init,
    solve,
)
from trcomplete.tensors import linearize_indices, unfold
from trcomplete.tr import make_point, make_tangent, point_axpy, subchain_dense, tr_full


def _report(num, name, ok):
    print(f"\nACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"acceptance criterion {num} ({name}) failed"


def _random_instances(count, seed, dmax=4):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        d = int(rng.integers(3, dmax + 1))
        dims = tuple(int(x) for x in rng.integers(2, 7, size=d))
        ranks = tuple(int(x) for x in rng.integers(1, 4, size=d))
        factors = [rng.standard_normal((dims[k], ranks[k] * ranks[(k + 1) % d]))
                   for k in range(d)]
        out.append(make_point(dims, ranks, factors))
    return out


def test_01_gram_recursion_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for p in _random_instances(50, seed=101):
        for k in range(1, p.order + 1):
            sub = subchain_dense(p, k)
            naive = sub.T @ sub
            fast = subchain_gram(p, k)
            worst = max(worst, np.linalg.norm(fast - naive)
                        / max(np.linalg.norm(naive), 1e-300))
    elapsed = time.perf_counter() - t0
    _report(1, "Gram-recursion oracle equivalence",
            worst <= 1e-12 and elapsed < 10.0)


def test_02_unfolding_identity():
    worst = 0.0
    for p in _random_instances(50, seed=102):
        dense = tr_full(p)
        for k in range(1, p.order + 1):
            lhs = unfold(dense, k)
            rhs = p.factors[k - 1] @ subchain_dense(p, k).T
            worst = max(worst, np.linalg.norm(lhs - rhs)
                        / max(np.linalg.norm(lhs), 1e-300))
    _report(2, "unfolding identity", worst <= 1e-12)


def test_03_gradient_correctness():
    rng = np.random.default_rng(103)
    worst_dense, worst_fd = 0.0, 0.0
    for p in _random_instances(20, seed=104):
        total = int(np.prod(p.dims))
        m = max(2, total // 3)
        idx = sample_uniform(p.dims, m, rng)
        data = make_sample(p.dims, idx, rng.standard_normal(m))
        lam = 1e-3
        cfg = ObjectiveConfig(lam, data.rate)
        grad = euclidean_gradient(p, data, cfg)

        # dense formula oracle: (1/p) S_(k) W_neq + lam W_k
        resid = np.zeros(p.dims)
        resid[tuple((data.indices - 1).T)] = (
            tr_full(p)[tuple((data.indices - 1).T)] - data.values)
        for k in range(1, p.order + 1):
            expect = unfold(resid, k) @ subchain_dense(p, k) / data.rate \
                + lam * p.factors[k - 1]
            worst_dense = max(worst_dense, np.linalg.norm(grad.components[k - 1] - expect)
                              / max(np.linalg.norm(expect), 1e-300))

        # central finite differences of the cost along coordinate probes
        h = 1e-6
        probes = 3
        for _ in range(probes):
            xi = make_tangent(p.dims, p.ranks,
                              [rng.standard_normal(w.shape) for w in p.factors])
            fp = cost(point_axpy(p, h, xi), data, cfg)
            fm = cost(point_axpy(p, -h, xi), data, cfg)
            fd = (fp - fm) / (2 * h)
            an = sum(float(np.sum(g * x))
                     for g, x in zip(grad.components, xi.components))
            worst_fd = max(worst_fd, abs(fd - an) / max(abs(an), 1e-300))
    _report(3, "gradient correctness", worst_dense <= 1e-12 and worst_fd <= 1e-5)


def test_04_riemannian_duality():
    rng = np.random.default_rng(105)
    worst = 0.0
    for p in _random_instances(5, seed=106):
        total = int(np.prod(p.dims))
        idx = sample_uniform(p.dims, max(2, total // 3), rng)
        data = make_sample(p.dims, idx, rng.standard_normal(len(idx)))
        cfg = ObjectiveConfig(1e-6, data.rate)
        g = euclidean_gradient(p, data, cfg)
        st = metric_state(p, 1e-8)
        rg = riemannian_gradient(st, g, p)
        for _ in range(20):
            xi = make_tangent(p.dims, p.ranks,
                              [rng.standard_normal(w.shape) for w in p.factors])
            lhs = metric_inner(st, rg, xi)
            rhs = sum(float(np.sum(a * b)) for a, b in zip(g.components, xi.components))
            worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    _report(4, "Riemannian duality", worst <= 1e-10)


def test_05_exact_line_search_closed_form():
    p = make_point((1, 1, 1), (1, 1, 1), [np.zeros((1, 1))] * 3)
    data = make_sample((1, 1, 1), np.array([[1, 1, 1]]), np.array([8.0]))
    eta = make_tangent((1, 1, 1), (1, 1, 1), [np.ones((1, 1))] * 3)
    res = exact_step(p, eta, data, ObjectiveConfig(0.0, 1.0))
    _report(5, "exact line search closed form",
            res.interior and abs(res.step - 2.0) <= 1e-8 and res.value <= 1e-20)


def test_06_noiseless_recovery():
    dims, ranks = (20, 20, 20), (2, 2, 2)
    ok = True
    for alg in ("rgd", "rcg", "als"):
        wins = 0
        for seed in range(5):
            rng = np.random.default_rng([7, seed])
            _, dense = gen_tr_random(dims, ranks, rng)
            data = sample_from_dense(dense, round(0.3 * 8000), rng)
            gi = sample_uniform(dims, 100, rng,
                                exclude=linearize_indices(dims, data.indices))
            gamma = make_sample(dims, gi, dense[tuple((gi - 1).T)])
            init = random_init(dims, ranks, rng, data)
            cfg = SolverConfig(algorithm=alg, lam=0.0,
                               stopping=StoppingCriteria(max_iters=250))
            t0 = time.perf_counter()
            _, rec = solve(init, data, cfg, test=gamma)
            run_s = time.perf_counter() - t0
            best = min(log.eps_gamma for log in rec.iterations)
            wins += best < 1e-4
            ok = ok and run_s < 60.0
        ok = ok and wins >= 4
    _report(6, "noiseless recovery (3 algorithms, 4 of 5 seeds)", ok)


def test_07_noisy_floor():
    dims, ranks = (20, 20, 20), (2, 2, 2)
    ok = True
    for alg in ("rgd", "rcg", "als"):
        for sigma in (1e-3, 1e-4, 1e-6):
            rng = np.random.default_rng([13, int(-np.log10(sigma))])
            _, clean = gen_tr_random(dims, ranks, rng)
            noisy = add_normalized_noise(clean, NoiseSpec(sigma, 99))
            data = sample_from_dense(noisy, 2400, rng)
            gi = sample_uniform(dims, 100, rng,
                                exclude=linearize_indices(dims, data.indices))
            gamma = make_sample(dims, gi, noisy[tuple((gi - 1).T)])
            init = random_init(dims, ranks, rng, data)
            cfg = SolverConfig(algorithm=alg, lam=1e-12,
                               stopping=StoppingCriteria(max_iters=500))
            _, rec = solve(init, data, cfg, test=gamma)
            f = rec.final
            ok = ok and 0.5 * sigma <= f.eps_omega <= 2 * sigma
            ok = ok and f.eps_gamma >= f.eps_omega
    _report(7, "noisy error floor in [0.5 sigma, 2 sigma]", ok)


def test_08_convergence_theory_properties():
    dims, ranks = (12, 12, 12), (2, 2, 2)
    ok = True
    for run_id, (alg, lam) in enumerate((("rgd", 1e-6), ("rcg", 1e-6), ("rcg", 0.0))):
        rng = np.random.default_rng([19, run_id])
        _, dense = gen_tr_random(dims, ranks, np.random.default_rng([19, 5]))
        data = sample_from_dense(dense, 600, rng)
        init = random_init(dims, ranks, rng, data)
        cfg = SolverConfig(algorithm=alg, lam=lam,
                           stopping=StoppingCriteria(max_iters=150))
        _, rec = solve(init, data, cfg)
        rep = check_convergence_invariants(rec, lam,
                                           require_descent_dirs=(alg == "rcg"))
        ok = ok and rep.ok
    _report(8, "convergence-theory runtime invariants", ok)


def test_09_gram_speedup():
    p, _ = gen_tr_random((50, 50, 50), (4, 4, 4), 9)

    def time_best(fn, reps=5):
        best = math.inf
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        return best

    t_fast = time_best(lambda: [subchain_gram(p, k) for k in (1, 2, 3)])

    def naive():
        for k in (1, 2, 3):
            sub = subchain_dense(p, k)
            _ = sub.T @ sub

    t_naive = time_best(naive, reps=3)
    speedup = t_naive / t_fast
    print(f"\n  gram speedup: {speedup:.1f}x (fast {t_fast * 1e3:.2f} ms, "
          f"naive {t_naive * 1e3:.2f} ms)")
    _report(9, "Gram recursion at least 5x faster than naive", speedup >= 5.0)


def test_10_function_interpolation():
    dims = (20,) * 4
    ok = True
    for fn, tol in (("h1", 1e-3), ("h2", 1e-2)):
        spec = FunctionTensorSpec(fn, dims)
        dense = gen_function_tensor(spec)
        excl = function_excluded_linear(spec)
        excl = excl if len(excl) else None
        rng = np.random.default_rng([21, 1])
        data = sample_from_dense(dense, 16000, rng, exclude=excl)
        taken = linearize_indices(dims, data.indices)
        if excl is not None:
            taken = np.concatenate([taken, excl])
        gi = sample_uniform(dims, 100, rng, exclude=taken)
        gamma = make_sample(dims, gi, dense[tuple((gi - 1).T)])
        vi = sample_uniform(dims, 100, rng,
                            exclude=np.concatenate([taken, linearize_indices(dims, gi)]))
        val = make_sample(dims, vi, dense[tuple((vi - 1).T)])
        cfg = SolverConfig(algorithm="rgd", lam=0.0, max_rank=(4, 4, 4, 4),
                           phase_iters=50, seed=3)
        pt, _ = rank_increase_drive(data, val, cfg, test=gamma)
        eg = relative_error(pt, gamma)
        print(f"\n  {fn}: final rank {pt.ranks}, eps_gamma {eg:.3e} (tol {tol})")
        ok = ok and eg <= tol
    _report(10, "function interpolation with rank increase", ok)


def test_11_parameter_count_parity():
    ok = (param_count((250, 330, 33), (7, 16, 7)) == 66577
          and param_count((6040, 3952, 150), (6, 6, 6)) == 365112)
    _report(11, "parameter-count parity", ok)


def test_12_phase_sweep_monotone():
    cfg = SolverConfig(algorithm="rgd", lam=0.0)
    counts = phase_sweep((16, 18, 20, 22, 24), (150, 300, 600, 1000, 1600),
                         (2, 2, 2), 5, cfg, base_seed=17)
    print("\n  success counts:\n", counts)
    ok = all(counts[i, j + 1] >= counts[i, j] - 1
             for i in range(counts.shape[0]) for j in range(counts.shape[1] - 1))
    _report(12, "phase-sweep success monotone in sample count", ok)
