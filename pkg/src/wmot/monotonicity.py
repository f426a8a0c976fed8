"""Finite-support optimality checks: martingale C-monotonicity and finite optimality.

A finite family of pairs ``(x_i, p_i)`` is martingale C-monotone when no other
kernels ``q_i`` with the same aggregate ``sum_i w_i q_i`` and the same
barycenters lower ``sum_i w_i C(x_i, q_i)``. Deciding this is itself a weak
martingale transport problem whose rows are indexed by ``i``, so repeated
source points stay separate rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .couplings import MARTINGALE_TOL, DiscreteCoupling, kernels_from_rows
from .costs import CostFunctional, LinearCost
from .errors import NumericError, ValidationError
from .measures import DiscreteMeasure, as_measure, mean, union_support
from .solver import SolveOptions, SolverReport, solve_wmot_arrays
from .transport_lp import TransportLP, solve_lp

GAP_TOL = 1e-6
CROSS_TOL = 1e-7


@dataclass(frozen=True)
class SupportSet:
    x: tuple[float, ...]
    kernels: tuple[DiscreteMeasure, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "kernels", tuple(as_measure(k) for k in self.kernels))
        if len(self.x) < 1:
            raise ValidationError("a support set needs at least one pair")
        if len(self.x) != len(self.kernels):
            raise ValidationError("one kernel per source point required")
        if not all(math.isfinite(v) for v in self.x):
            raise ValidationError("source points must be finite")
        for xi, k in zip(self.x, self.kernels):
            if abs(mean(k) - xi) > MARTINGALE_TOL * max(1.0, abs(xi)):
                raise ValidationError(f"kernel at x={xi} has barycenter {mean(k)}")

    def __len__(self) -> int:
        return len(self.x)

    @classmethod
    def from_coupling(cls, pi: DiscreteCoupling) -> "SupportSet":
        return cls(tuple(pi.x.tolist()), pi.kernels)


@dataclass
class MonotonicityResult:
    monotone: bool
    improvement: float
    current: float
    value: float
    competitor: tuple[DiscreteMeasure, ...] | None
    report: SolverReport

    def to_dict(self) -> dict:
        d = {"monotone": self.monotone, "improvement": self.improvement,
             "current": self.current, "value": self.value, "gap": self.report.gap}
        if self.competitor is not None:
            d["competitor"] = [{"atoms": k.atoms.tolist(), "weights": k.weights.tolist()}
                               for k in self.competitor]
        return d


def _kernel_rows(kernels, y):
    W = np.zeros((len(kernels), y.size))
    for i, k in enumerate(kernels):
        W[i, np.searchsorted(y, k.atoms)] = k.weights
    return W


def _weighted_check(x, w, kernels, cost: CostFunctional, gap_tol: float,
                    opts: SolveOptions | None) -> MonotonicityResult:
    x = np.asarray(x, float)
    w = np.asarray(w, float)
    y = union_support(kernels)
    W = _kernel_rows(kernels, y)
    nu = w @ W
    current = math.fsum(w * cost.row_values(x, y, W))
    opts = opts or SolveOptions(gap_tolerance=gap_tol)
    rep = solve_wmot_arrays(x, w, y, nu, cost, opts)
    improvement = max(0.0, current - rep.value)
    competitor = None
    if improvement > gap_tol:
        competitor = kernels_from_rows(y, rep.plan / w[:, None])
    return MonotonicityResult(current <= rep.value + gap_tol, improvement, current,
                              rep.value, competitor, rep)


def check_martingale_c_monotone(support: SupportSet | DiscreteCoupling, cost: CostFunctional,
                                gap_tol: float = GAP_TOL,
                                opts: SolveOptions | None = None) -> MonotonicityResult:
    """Search for a cheaper reassignment of kernels with the same aggregate and barycenters.

    A bare :class:`SupportSet` gets uniform weights ``1/N``. A coupling is
    checked with its own source weights.
    """
    if isinstance(support, DiscreteCoupling):
        return _weighted_check(support.x, support.mu, support.kernels, cost, gap_tol, opts)
    N = len(support)
    return _weighted_check(support.x, np.full(N, 1.0 / N), support.kernels, cost, gap_tol, opts)


@dataclass
class FiniteOptimalityResult:
    optimal: bool
    improvement: float
    current: float
    lp_value: float
    dual_value: float
    competitor: tuple[DiscreteMeasure, ...] | None

    def to_dict(self) -> dict:
        return {"optimal": self.optimal, "improvement": self.improvement,
                "current": self.current, "lp_value": self.lp_value}


def check_finite_optimality(pi: DiscreteCoupling, c, gap_tol: float = GAP_TOL,
                            backend: str = "auto") -> FiniteOptimalityResult:
    """Finite optimality of ``pi`` for a linear cost ``c(x, y)``.

    The LP value is cross-checked against the dual objective of the same LP.
    """
    cost = c if isinstance(c, LinearCost) else LinearCost(c)
    res = check_martingale_c_monotone(pi, cost, gap_tol,
                                      SolveOptions(gap_tolerance=gap_tol, lp_backend=backend))
    y = res.report.y
    lp = TransportLP(pi.x, pi.mu, y, pi.mu @ _kernel_rows(pi.kernels, y),
                     cost.cost_matrix(pi.x, y), martingale=True)
    sol = solve_lp(lp, backend)
    dual = sol.dual_value(lp)
    if abs(dual - res.value) > CROSS_TOL * max(1.0, abs(res.value)):
        raise NumericError(f"LP value {res.value} and dual value {dual} disagree")
    return FiniteOptimalityResult(res.improvement <= gap_tol, res.improvement, res.current,
                                  res.value, dual, res.competitor)
