"""Exact linear programs over the transport and martingale transport polytopes.

Constraint layout for an ``n x m`` plan ``P`` flattened row-major:

* ``n`` row-sum rows ``sum_j P_ij = mu_i``
* ``m`` column-sum rows ``sum_i P_ij = nu_j``
* (martingale) ``n`` barycenter rows ``s_i sum_j y_j P_ij = s_i x_i mu_i`` with
  ``s_i = 1 / max(1, |x_i|)``

Dual multipliers are reported unscaled, so that a feasible dual satisfies
``a_i + b_j + h_i y_j <= c_ij``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .couplings import DiscreteCoupling, from_matrix
from .errors import NumericError, ValidationError
from .measures import DiscreteMeasure
from .simplex import solve_equality_lp

FEAS_TOL = 1e-9
SLACK_TOL = 1e-7


@dataclass(frozen=True)
class TransportLP:
    x: np.ndarray
    mu: np.ndarray
    y: np.ndarray
    nu: np.ndarray
    cost: np.ndarray
    martingale: bool = False

    def __post_init__(self):
        for name in ("x", "mu", "y", "nu", "cost"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))
        n, m = self.x.size, self.y.size
        if self.mu.shape != (n,) or self.nu.shape != (m,):
            raise ValidationError("marginal weights do not match atoms")
        if self.cost.shape != (n, m):
            raise ValidationError(f"cost matrix must be {n}x{m}, got {self.cost.shape}")
        if not np.all(np.isfinite(self.cost)):
            raise ValidationError("cost entries must be finite")
        if np.any(self.mu < 0) or np.any(self.nu < 0):
            raise ValidationError("negative marginal weight")

    @property
    def shape(self):
        return self.x.size, self.y.size

    def row_scale(self) -> np.ndarray:
        return 1.0 / np.maximum(1.0, np.abs(self.x))

    def constraints(self):
        n, m = self.shape
        I_n = sp.identity(n, format="csr")
        I_m = sp.identity(m, format="csr")
        blocks = [sp.kron(I_n, np.ones((1, m))), sp.kron(np.ones((1, n)), I_m)]
        rhs = [self.mu, self.nu]
        if self.martingale:
            s = self.row_scale()
            blocks.append(sp.kron(sp.diags(s), self.y[None, :]))
            rhs.append(s * self.x * self.mu)
        return sp.vstack(blocks, format="csc"), np.concatenate(rhs)


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible"
    plan: np.ndarray | None
    value: float
    row_duals: np.ndarray | None = None
    col_duals: np.ndarray | None = None
    bary_duals: np.ndarray | None = None
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    backend: str = ""
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def coupling(self) -> DiscreteCoupling:
        if self.plan is None:
            raise ValidationError(f"no plan available (status {self.status})")
        P = self.plan / math.fsum(self.plan.ravel())
        return from_matrix(self.x, self.y, P)

    def dual_value(self, lp: TransportLP) -> float:
        terms = [self.row_duals * lp.mu, self.col_duals * lp.nu]
        if self.bary_duals is not None:
            terms.append(self.bary_duals * lp.x * lp.mu)
        return math.fsum(np.concatenate(terms))


def _unpack_duals(lp: TransportLP, duals: np.ndarray):
    n, m = lp.shape
    a, b = duals[:n], duals[n:n + m]
    h = duals[n + m:] * lp.row_scale() if lp.martingale else None
    return a, b, h


def _solve_simplex(lp: TransportLP) -> LPResult:
    A, rhs = lp.constraints()
    res = solve_equality_lp(A.toarray(), rhs, lp.cost.ravel())
    if res.status == "infeasible":
        return LPResult("infeasible", None, math.nan, x=lp.x, y=lp.y, backend="simplex")
    if res.status != "optimal":
        raise NumericError(f"simplex terminated with status {res.status}")
    a, b, h = _unpack_duals(lp, res.duals)
    return LPResult("optimal", res.x.reshape(lp.shape), 0.0, a, b, h, lp.x, lp.y,
                    backend="simplex", info={"iterations": res.iterations})


class _HighsModel:
    """A HiGHS model over fixed marginals whose cost vector may be replaced."""

    def __init__(self, lp: TransportLP):
        import highspy

        self._hs = highspy
        A, rhs = lp.constraints()
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("solver", "simplex")
        h.setOptionValue("primal_feasibility_tolerance", 1e-10)
        h.setOptionValue("dual_feasibility_tolerance", 1e-10)
        model = highspy.HighsLp()
        ncol, nrow = A.shape[1], A.shape[0]
        model.num_col_ = ncol
        model.num_row_ = nrow
        model.col_cost_ = lp.cost.ravel().copy()
        model.col_lower_ = np.zeros(ncol)
        model.col_upper_ = np.full(ncol, highspy.kHighsInf)
        model.row_lower_ = rhs
        model.row_upper_ = rhs
        model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        model.a_matrix_.start_ = A.indptr
        model.a_matrix_.index_ = A.indices
        model.a_matrix_.value_ = A.data
        model.a_matrix_.num_col_ = ncol
        model.a_matrix_.num_row_ = nrow
        h.passModel(model)
        self.h = h
        self.ncol = ncol
        self._idx = np.arange(ncol, dtype=np.int32)

    def solve(self, lp: TransportLP, cost: np.ndarray | None = None) -> LPResult:
        hs = self._hs
        if cost is not None:
            self.h.changeColsCost(self.ncol, self._idx, np.ascontiguousarray(cost.ravel(), float))
        self.h.run()
        status = self.h.getModelStatus()
        if status == hs.HighsModelStatus.kInfeasible:
            return LPResult("infeasible", None, math.nan, x=lp.x, y=lp.y, backend="highs")
        if status != hs.HighsModelStatus.kOptimal:
            raise NumericError(f"HiGHS returned {self.h.modelStatusToString(status)}")
        sol = self.h.getSolution()
        plan = np.maximum(np.asarray(sol.col_value), 0.0).reshape(lp.shape)
        a, b, h = _unpack_duals(lp, np.asarray(sol.row_dual))
        return LPResult("optimal", plan, 0.0, a, b, h, lp.x, lp.y, backend="highs",
                        info={"iterations": int(self.h.getInfo().simplex_iteration_count)})


def _finish(lp: TransportLP, res: LPResult, cost: np.ndarray) -> LPResult:
    if not res.optimal:
        return res
    res.value = math.fsum((cost * res.plan).ravel())
    n, m = lp.shape
    P = res.plan
    resid = max(np.abs(P.sum(1) - lp.mu).max(), np.abs(P.sum(0) - lp.nu).max())
    if lp.martingale:
        resid = max(resid, np.abs((P @ lp.y - lp.x * lp.mu) * lp.row_scale()).max())
    red = cost - res.row_duals[:, None] - res.col_duals[None, :]
    if res.bary_duals is not None:
        red = red - res.bary_duals[:, None] * lp.y[None, :]
    dual_infeas = float(max(0.0, -red.min()))
    slack = float(np.abs(red * P).sum())
    res.info.update(primal_residual=float(resid), dual_infeasibility=dual_infeas,
                    complementary_slackness=slack)
    if resid > FEAS_TOL * 10:
        raise NumericError(f"LP primal residual {resid:.3e} exceeds tolerance")
    return res


def _choose(lp: TransportLP, backend: str) -> str:
    if backend == "auto":
        return "highs"
    if backend not in ("simplex", "highs"):
        raise ValidationError(f"unknown LP backend {backend!r}")
    return backend


def solve_lp(lp: TransportLP, backend: str = "auto") -> LPResult:
    kind = _choose(lp, backend)
    res = _solve_simplex(lp) if kind == "simplex" else _HighsModel(lp).solve(lp)
    return _finish(lp, res, lp.cost)


def _arrays(mu: DiscreteMeasure, nu: DiscreteMeasure):
    return mu.atoms, mu.weights, nu.atoms, nu.weights


def solve_linear_ot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost_matrix,
                    backend: str = "auto") -> LPResult:
    res = solve_lp(TransportLP(*_arrays(mu, nu), cost_matrix, martingale=False), backend)
    if not res.optimal:
        raise NumericError("transport LP reported infeasibility for valid marginals")
    return res


def solve_linear_mot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost_matrix,
                     backend: str = "auto") -> LPResult:
    return solve_lp(TransportLP(*_arrays(mu, nu), cost_matrix, martingale=True), backend)


def feasible_martingale_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure,
                                 backend: str = "auto") -> DiscreteCoupling | None:
    """Any element of the martingale polytope (phase-1 LP), or ``None`` if empty."""
    plan = feasible_plan(mu.atoms, mu.weights, nu.atoms, nu.weights, True, backend)
    return None if plan is None else from_matrix(mu.atoms, nu.atoms, plan / plan.sum())


def feasible_plan(x, mu, y, nu, martingale: bool = True, backend: str = "auto"):
    res = solve_lp(TransportLP(x, mu, y, nu, np.zeros((len(x), len(y))), martingale), backend)
    return res.plan if res.optimal else None


class LinearOracle:
    """Repeated linear minimization over one fixed polytope (Frank–Wolfe LMO).

    Keeps a HiGHS model alive between calls so that each new cost vector is
    warm-started from the previous optimal basis.
    """

    def __init__(self, x, mu, y, nu, martingale: bool = True, backend: str = "auto"):
        self.lp = TransportLP(x, mu, y, nu, np.zeros((len(x), len(y))), martingale)
        self.kind = _choose(self.lp, backend)
        self._model = _HighsModel(self.lp) if self.kind == "highs" else None
        self.calls = 0

    def __call__(self, cost: np.ndarray) -> LPResult:
        self.calls += 1
        cost = np.asarray(cost, float)
        # shift by a constant for conditioning; argmin is unchanged
        shift = float(np.median(cost))
        c = cost - shift
        if self.kind == "simplex":
            lp = TransportLP(self.lp.x, self.lp.mu, self.lp.y, self.lp.nu, c, self.lp.martingale)
            res = _solve_simplex(lp)
        else:
            res = self._model.solve(self.lp, c)
        if not res.optimal:
            return res
        res.row_duals = res.row_duals + shift
        return _finish(self.lp, res, cost)
