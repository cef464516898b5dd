"""Tensor-ring completion: Riemannian preconditioned solvers and experiments."""

from .datagen import (
    FunctionTensorSpec,
    NoiseSpec,
    add_normalized_noise,
    gen_function_tensor,
    gen_tr_random,
    mse,
    phase_sweep,
    psnr,
    relerr,
    sample_from_dense,
)
from .io import load_point, parse_coo, save_point, write_coo, write_run_csv, write_summary
from .linesearch import LineSearchParams, armijo_step, exact_step, rbb_step
from .metric import metric_inner, metric_norm, metric_state, riemannian_gradient, subchain_gram
from .objective import (
    ObjectiveConfig,
    SparseSample,
    cost,
    euclidean_gradient,
    make_sample,
    relative_error,
    residual_values,
    sample_uniform,
)
from .solvers import (
    RunRecord,
    SolverConfig,
    StoppingCriteria,
    check_convergence_invariants,
    random_init,
    rank_increase_drive,
    solve,
    tr_als,
    tr_rcg,
    tr_rgd,
)
from .tensors import fold, mode_linear_index, unfold
from .tr import TRPoint, make_point, tr_entry, tr_full

__version__ = "0.1.0"
