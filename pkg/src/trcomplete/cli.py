"""Command-line harness: experiment runners, configuration, and artifacts.

Verbs: complete, synth, noisy, phase, function, params.  Every run takes one
master seed; all randomness flows through named streams derived from it, so
changing e.g. the noise draw never perturbs the sampling set.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import zlib

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datagen import (
    FunctionTensorSpec,
    NoiseSpec,
    add_normalized_noise,
    function_excluded_linear,
    gen_function_tensor,
    gen_tr_random,
    phase_sweep,
    psnr,
    sample_from_dense,
)
from .io import (
    emit_plotdata,
    parse_coo,
    save_point,
    write_run_csv,
    write_summary,
)
from .linesearch import LineSearchParams
from .objective import make_sample, sample_uniform
from .solvers import (
    SolverConfig,
    StoppingCriteria,
    random_init,
    rank_increase_drive,
    solve,
)
from .tensors import linearize_indices
from .tr import tr_full

__all__ = ["ExperimentConfig", "stream_rng", "param_count", "run_experiment", "main"]

DEFAULT_TEST_SIZE = 100


@dataclass
class ExperimentConfig:
    experiment: str  # synth | noisy | phase | function | complete
    shape: tuple[int, ...] = ()
    rank: tuple[int, ...] = ()
    max_rank: tuple[int, ...] | None = None
    p: float | None = None
    n_omega: int | None = None
    sigma: float = 0.0
    lam: float = 0.0
    delta: float = 1e-8
    algorithm: str = "rgd"
    stepsize: str = "rbb"
    seed: int = 0
    max_iters: int = 1000
    time_budget: float | None = None
    eps_relchange: float = 1e-8
    test_size: int = DEFAULT_TEST_SIZE
    out: Path = Path(".")
    strict: bool = False
    # phase sweeps
    n_grid: tuple[int, ...] = ()
    omega_grid: tuple[int, ...] = ()
    trials: int = 5
    # function interpolation
    function: str = "h1"
    phase_iters: int = 50
    # file completion
    input: Path | None = None
    test_file: Path | None = None
    rho: float = 0.4
    armijo_a: float = 1e-5
    s_min: float = 1e-10


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named randomness stream of a run."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def param_count(shape, rank, fmt: str = "tr") -> int:
    """Number of free parameters of the format at the given rank."""
    shape = tuple(int(n) for n in shape)
    rank = tuple(int(r) for r in rank)
    if fmt != "tr":
        raise ValueError(f"unsupported format {fmt!r}")
    if len(rank) != len(shape):
        raise ValueError("rank and shape must have the same number of modes")
    d = len(shape)
    return sum(rank[k] * shape[k] * rank[(k + 1) % d] for k in range(d))


def _solver_config(cfg: ExperimentConfig) -> SolverConfig:
    return SolverConfig(
        algorithm=cfg.algorithm,
        stepsize=cfg.stepsize,
        delta=cfg.delta,
        lam=cfg.lam,
        linesearch=LineSearchParams(rho=cfg.rho, a=cfg.armijo_a, s_min=cfg.s_min),
        stopping=StoppingCriteria(eps_relchange=cfg.eps_relchange,
                                  max_iters=cfg.max_iters,
                                  time_budget=cfg.time_budget),
        seed=cfg.seed,
        max_rank=cfg.max_rank,
        phase_iters=cfg.phase_iters,
    )


def _omega_count(cfg: ExperimentConfig, total: int) -> int:
    if cfg.n_omega is not None:
        return int(cfg.n_omega)
    if cfg.p is None:
        raise ValueError("set either the sampling rate or the sample count")
    return max(1, round(cfg.p * total))


def _summary(cfg: ExperimentConfig, rec, eps_omega, eps_gamma, psnr_val, seconds) -> dict:
    return {
        "algorithm": cfg.algorithm,
        "shape": list(cfg.shape),
        "rank": list(cfg.rank),
        "lambda": cfg.lam,
        "delta": cfg.delta,
        "p": cfg.p,
        "sigma": cfg.sigma,
        "final_eps_omega": eps_omega,
        "final_eps_gamma": eps_gamma,
        "psnr": psnr_val if psnr_val is None or np.isfinite(psnr_val) else "inf",
        "iters": rec.final.iter if rec is not None else None,
        "seconds": seconds,
        "termination_reason": rec.termination if rec is not None else None,
    }


def _write_artifacts(cfg: ExperimentConfig, rec, summary: dict, point=None):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if rec is not None:
        write_run_csv(out / "run.csv", rec)
        emit_plotdata(rec, out / "plot")
    write_summary(out / "summary.json", summary)
    if point is not None:
        save_point(out / "factors.npz", point)


def _dense_experiment(cfg: ExperimentConfig, dense: np.ndarray,
                      exclude: np.ndarray | None = None) -> int:
    """Shared path for experiments with a dense ground truth tensor."""
    dims = dense.shape
    total = int(np.prod(dims))
    data = sample_from_dense(dense, _omega_count(cfg, total),
                             stream_rng(cfg.seed, "omega"), exclude=exclude)
    taken = linearize_indices(dims, data.indices)
    if exclude is not None:
        taken = np.concatenate([taken, exclude])
    gamma_idx = sample_uniform(dims, cfg.test_size, stream_rng(cfg.seed, "gamma"),
                               exclude=taken)
    gamma = make_sample(dims, gamma_idx,
                        dense.reshape(-1, order="F")[linearize_indices(dims, gamma_idx)])
    scfg = _solver_config(cfg)
    t0 = time.perf_counter()

    if cfg.experiment == "function":
        val_idx = sample_uniform(
            dims, cfg.test_size, stream_rng(cfg.seed, "validation"),
            exclude=np.concatenate([taken, linearize_indices(dims, gamma_idx)]))
        validation = make_sample(dims, val_idx,
                                 dense.reshape(-1, order="F")[linearize_indices(dims, val_idx)])
        point, rec = rank_increase_drive(data, validation, scfg, test=gamma)
    else:
        init = random_init(dims, cfg.rank, stream_rng(cfg.seed, "init"), data)
        point, rec = solve(init, data, scfg, test=gamma)

    seconds = time.perf_counter() - t0
    psnr_val = psnr(tr_full(point), dense)
    summary = _summary(cfg, rec, rec.final.eps_omega, rec.final.eps_gamma,
                       psnr_val, seconds)
    if cfg.experiment == "function":
        summary["final_rank"] = list(point.ranks)
    _write_artifacts(cfg, rec, summary, point)
    if cfg.strict and rec.termination == "stalled":
        return 1
    return 0


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run one experiment and write its artifacts; returns an exit status."""
    if cfg.experiment == "synth":
        _, dense = gen_tr_random(cfg.shape, cfg.rank, stream_rng(cfg.seed, "target"))
        return _dense_experiment(cfg, dense)

    if cfg.experiment == "noisy":
        _, clean = gen_tr_random(cfg.shape, cfg.rank, stream_rng(cfg.seed, "target"))
        noise_seed = stream_rng(cfg.seed, "noise").integers(2**32)
        dense = add_normalized_noise(clean, NoiseSpec(cfg.sigma, int(noise_seed)))
        return _dense_experiment(cfg, dense)

    if cfg.experiment == "function":
        spec = FunctionTensorSpec(cfg.function, cfg.shape)
        dense = gen_function_tensor(spec)
        excluded = function_excluded_linear(spec)
        return _dense_experiment(cfg, dense, exclude=excluded if len(excluded) else None)

    if cfg.experiment == "phase":
        counts = phase_sweep(cfg.n_grid, cfg.omega_grid, cfg.rank, cfg.trials,
                             _solver_config(cfg), base_seed=cfg.seed,
                             test_size=cfg.test_size)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        header = "n\\omega," + ",".join(str(m) for m in cfg.omega_grid)
        lines = [header]
        for n, row in zip(cfg.n_grid, counts):
            lines.append(f"{n}," + ",".join(str(int(c)) for c in row))
        (out / "phase.csv").write_text("\n".join(lines) + "\n")
        write_summary(out / "summary.json", {
            "algorithm": cfg.algorithm, "rank": list(cfg.rank),
            "n_grid": list(cfg.n_grid), "omega_grid": list(cfg.omega_grid),
            "trials": cfg.trials, "success_counts": counts.tolist(),
        })
        return 0

    if cfg.experiment == "complete":
        data = parse_coo(cfg.input)
        cfg = replace(cfg, shape=data.dims, p=data.rate)
        gamma = parse_coo(cfg.test_file) if cfg.test_file else None
        scfg = _solver_config(cfg)
        init = random_init(data.dims, cfg.rank, stream_rng(cfg.seed, "init"), data)
        t0 = time.perf_counter()
        point, rec = solve(init, data, scfg, test=gamma)
        seconds = time.perf_counter() - t0
        summary = _summary(cfg, rec, rec.final.eps_omega, rec.final.eps_gamma,
                           None, seconds)
        _write_artifacts(cfg, rec, summary, point)
        if cfg.strict and rec.termination == "stalled":
            return 1
        return 0

    raise ValueError(f"unknown experiment {cfg.experiment!r}")


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _add_common(sp):
    sp.add_argument("--config", type=Path, help="flat TOML config; flags win")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--algorithm", choices=["rgd", "rcg", "als"])
    sp.add_argument("--stepsize", choices=["rbb", "exact"])
    sp.add_argument("--lam", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--max-iters", type=int, dest="max_iters")
    sp.add_argument("--time-budget", type=float, dest="time_budget")
    sp.add_argument("--test-size", type=int, dest="test_size")
    sp.add_argument("--strict", action="store_const", const=True)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trcomplete",
                                 description="Tensor-ring completion experiments")
    sub = ap.add_subparsers(dest="verb", required=True)

    sp = sub.add_parser("synth", help="noiseless synthetic recovery")
    _add_common(sp)
    sp.add_argument("--shape", type=_int_tuple)
    sp.add_argument("--rank", type=_int_tuple)
    sp.add_argument("--p", type=float)
    sp.add_argument("--n-omega", type=int, dest="n_omega")

    sp = sub.add_parser("noisy", help="noisy synthetic recovery")
    _add_common(sp)
    sp.add_argument("--shape", type=_int_tuple)
    sp.add_argument("--rank", type=_int_tuple)
    sp.add_argument("--p", type=float)
    sp.add_argument("--n-omega", type=int, dest="n_omega")
    sp.add_argument("--sigma", type=float)

    sp = sub.add_parser("phase", help="recovery phase sweep")
    _add_common(sp)
    sp.add_argument("--rank", type=_int_tuple)
    sp.add_argument("--n-grid", type=_int_tuple, dest="n_grid")
    sp.add_argument("--omega-grid", type=_int_tuple, dest="omega_grid")
    sp.add_argument("--trials", type=int)

    sp = sub.add_parser("function", help="function-tensor interpolation with rank increase")
    _add_common(sp)
    sp.add_argument("--function", choices=["h1", "h2"])
    sp.add_argument("--shape", type=_int_tuple)
    sp.add_argument("--max-rank", type=_int_tuple, dest="max_rank")
    sp.add_argument("--p", type=float)
    sp.add_argument("--n-omega", type=int, dest="n_omega")
    sp.add_argument("--phase-iters", type=int, dest="phase_iters")

    sp = sub.add_parser("complete", help="complete observations from a COO file")
    _add_common(sp)
    sp.add_argument("--input", type=Path)
    sp.add_argument("--test-file", type=Path, dest="test_file")
    sp.add_argument("--rank", type=_int_tuple)

    sp = sub.add_parser("params", help="parameter count of a format/rank")
    sp.add_argument("--shape", type=_int_tuple, required=True)
    sp.add_argument("--rank", type=_int_tuple, required=True)
    sp.add_argument("--format", default="tr")

    return ap


_TUPLE_KEYS = {"shape", "rank", "max_rank", "n_grid", "omega_grid"}
_PATH_KEYS = {"out", "input", "test_file"}


def _merge_config(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig(experiment=args.verb)
    overrides = {}
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            overrides.update(tomllib.load(fh))
    for key, val in vars(args).items():
        if key in ("verb", "config") or val is None:
            continue
        overrides[key] = val
    clean = {}
    for key, val in overrides.items():
        if key in _TUPLE_KEYS and not isinstance(val, tuple):
            val = _int_tuple(val) if isinstance(val, str) else tuple(val)
        if key in _PATH_KEYS:
            val = Path(val)
        if not hasattr(base, key):
            raise ValueError(f"unknown configuration key {key!r}")
        clean[key] = val
    return replace(base, **clean)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.verb == "params":
        count = param_count(args.shape, args.rank, args.format)
        print(json.dumps({"format": args.format, "shape": list(args.shape),
                          "rank": list(args.rank), "params": count}))
        return 0
    try:
        cfg = _merge_config(args)
        return run_experiment(cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
