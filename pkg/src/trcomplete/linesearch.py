"""Stepsize rules: exact polynomial line search, Armijo backtracking, and
Barzilai-Borwein seeds measured in the current point's metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .metric import MetricState, metric_inner
from .objective import ObjectiveConfig, SparseSample, cost
from .tr import TangentVector, TRPoint, point_as_tangent, point_axpy, tangent_combine

__all__ = [
    "LineSearchParams",
    "RBBMemory",
    "ExactStepResult",
    "exact_step",
    "armijo_step",
    "rbb_step",
]


@dataclass(frozen=True)
class LineSearchParams:
    """Backtracking parameters; defaults follow common practice for this problem."""

    rho: float = 0.4
    a: float = 1e-5
    s_min: float = 1e-10
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not 0 < self.a < 1:
            raise ValueError("sufficient-decrease constant must lie in (0, 1)")
        if self.s_min <= 0:
            raise ValueError("stepsize floor must be > 0")


@dataclass
class RBBMemory:
    """Previous iterate and its metric gradient, for BB quotients."""

    prev_point: TRPoint
    prev_grad: TangentVector


class ExactStepResult(NamedTuple):
    step: float | None
    value: float
    interior: bool  # False means no decreasing stationary point was found


def _cheb_nodes(s_max: float, count: int) -> np.ndarray:
    k = np.arange(count)
    return 0.5 * s_max * (np.cos(np.pi * (2 * k + 1) / (2 * count)) + 1.0)


def exact_step(p: TRPoint, eta: TangentVector, data: SparseSample,
               cfg: ObjectiveConfig, s_max: float = 1.0,
               max_expand: int = 60) -> ExactStepResult:
    """Minimize the cost along a ray by polynomial root-finding.

    The restricted cost is a polynomial of degree 2d in the step, so fitting
    it at 2d+1 Chebyshev nodes is exact up to conditioning; expanding the
    coefficients symbolically would be far more expensive.  Roots of the
    derivative come from the companion matrix, polished by Newton steps.
    The window doubles while the minimum keeps sitting on its boundary.
    """
    d = p.order
    deg = 2 * d

    def h(s: float) -> float:
        return cost(point_axpy(p, s, eta), data, cfg)

    h0 = h(0.0)
    s_hi = float(s_max)
    for _ in range(max_expand):
        nodes = _cheb_nodes(s_hi, deg + 1)
        vals = np.array([h(s) for s in nodes])
        poly = np.polynomial.chebyshev.Chebyshev.fit(nodes, vals, deg, domain=[0.0, s_hi])
        dpoly = poly.deriv()
        ddpoly = dpoly.deriv()
        roots = dpoly.roots()
        roots = roots[np.abs(roots.imag) < 1e-9 * max(s_hi, 1.0)].real
        roots = roots[(roots > 0.0) & (roots <= s_hi * (1.0 + 1e-9))]
        # polish on the fitted polynomial
        for _ in range(3):
            dd = ddpoly(roots)
            nz = dd != 0.0
            roots[nz] -= dpoly(roots[nz]) / dd[nz]
        roots = roots[(roots > 0.0) & (roots <= s_hi * (1.0 + 1e-9))]

        if len(roots) > 0:
            root_vals = np.array([h(s) for s in roots])
            best = int(np.argmin(root_vals))
            if root_vals[best] <= h(s_hi) and root_vals[best] < h0:
                return ExactStepResult(float(roots[best]), float(root_vals[best]), True)
        if h(s_hi) >= h0:
            # not decreasing out to the boundary and no interior minimizer
            return ExactStepResult(None, h0, False)
        s_hi *= 2.0
    return ExactStepResult(None, h0, False)


def armijo_step(f_at: Callable[[float], float], f0: float, g0: float,
                s0: float, prm: LineSearchParams) -> float | None:
    """Backtrack from s0 until the sufficient-decrease inequality holds.

    `g0` is the metric inner product of the gradient with the search
    direction and must be negative.  Returns None when the floor or the
    backtrack cap is hit; the caller decides the failure policy.
    """
    if g0 >= 0:
        raise ValueError("search direction is not a descent direction")
    if s0 <= 0:
        raise ValueError("initial stepsize must be > 0")
    s = float(s0)
    for _ in range(prm.max_backtracks):
        if s <= prm.s_min:
            return None
        if f0 - f_at(s) >= -s * prm.a * g0:
            return s
        s *= prm.rho
    return None


def rbb_step(st_new: MetricState, mem: RBBMemory, current: TRPoint,
             current_grad: TangentVector, variant: str = "rbb2",
             s_floor: float = 1e-10, s_ceil: float = 1e10,
             fallback: float = 1.0) -> float:
    """Barzilai-Borwein stepsize from the last displacement and gradient change.

    Both quotients are evaluated in the metric at the new point.  A zero
    denominator returns the configured fallback stepsize.
    """
    z = tangent_combine(1.0, point_as_tangent(current), -1.0, point_as_tangent(mem.prev_point))
    y = tangent_combine(1.0, current_grad, -1.0, mem.prev_grad)
    zy = metric_inner(st_new, z, y)
    if variant == "rbb1":
        if zy == 0.0:
            return fallback
        s = metric_inner(st_new, z, z) / abs(zy)
    elif variant == "rbb2":
        yy = metric_inner(st_new, y, y)
        if yy == 0.0:
            return fallback
        s = abs(zy) / yy
    else:
        raise ValueError(f"unknown BB variant {variant!r}")
    return float(min(max(s, s_floor), s_ceil))
