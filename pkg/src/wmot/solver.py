"""Frank–Wolfe solver for weak (martingale) transport with convex costs.

The iterate is the dense joint matrix ``P`` on the ``mu x nu`` grid. Each
iteration linearizes ``F(P) = sum_i mu_i C(x_i, P_i / mu_i)`` and minimizes the
linearization over the polytope with the exact LP. The reported ``gap`` is
always a certified upper bound on ``F(P) - min F``: either the Frank–Wolfe
gap from the LP oracle or the bound obtained from a dual-feasible triple
``(a, b, h)`` with ``a_i + b_j + h_i y_j <= dF/dP_ij``; the second needs no LP
solve and is tried first.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .couplings import DiscreteCoupling, coupling_to_dict, from_matrix
from .costs import CostFunctional
from .errors import InfeasibleError, NumericError, ValidationError
from .measures import DiscreteMeasure, check_convex_order
from .transport_lp import LinearOracle, feasible_plan

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SolveOptions:
    martingale: bool = True
    max_iterations: int = 5000
    gap_tolerance: float = 1e-6
    step_rule: str = "line-search"  # or "classic" for 2/(t+2)
    line_search_tol: float = 1e-10
    initial: object = None  # None, "lp", "random", a joint matrix or a DiscreteCoupling
    seed: int | None = None
    lp_backend: str = "auto"
    use_corrector: bool = True
    use_certificate: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if not self.gap_tolerance > 0 or not self.line_search_tol > 0:
            raise ValidationError("tolerances must be positive")
        if self.step_rule not in ("line-search", "classic"):
            raise ValidationError(f"unknown step rule {self.step_rule!r}")


@dataclass
class SolverReport:
    coupling: DiscreteCoupling
    value: float
    gap: float
    iterations: int
    trace: list = field(default_factory=list)
    converged: bool = True
    warning: str | None = None
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    plan: np.ndarray | None = None
    lmo_calls: int = 0
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "gap": self.gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "warning": self.warning,
            "lmo_calls": self.lmo_calls,
            "coupling": coupling_to_dict(self.coupling),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "value", "gap"])
        for k, (v, g) in enumerate(self.trace):
            w.writerow([k, repr(float(v)), repr(float(g))])
        return buf.getvalue()


def objective(cost: CostFunctional, x, mu, y, P) -> float:
    W = P / mu[:, None]
    return math.fsum(mu * cost.row_values(x, y, W))


def evaluate(mu: DiscreteMeasure | DiscreteCoupling, kernels=None, cost: CostFunctional | None = None) -> float:
    """``sum_i mu_i C(x_i, pi_i)`` for a coupling, or a source measure plus kernels."""
    if isinstance(mu, DiscreteCoupling):
        if cost is None:
            cost, kernels = kernels, mu.kernels
        else:
            kernels = mu.kernels
        mu = mu.source
    if len(kernels) != len(mu):
        raise ValidationError("one kernel per source atom required")
    vals = [cost.value(x, k) for x, k in zip(mu.atoms.tolist(), kernels)]
    return math.fsum(w * v for w, v in zip(mu.weights.tolist(), vals))


def golden_section(f, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-10) -> float:
    """Minimizer of a unimodal ``f`` on ``[lo, hi]`` to within ``tol``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def certified_gap(G, P, x, mu, y, nu, martingale: bool = True):
    """Upper bound on ``<G, P> - min_S <G, S>`` over the polytope, without an LP.

    Fits ``G_ij ~ a_i + b_j + h_i y_j`` by least squares weighted by ``P``,
    then lowers each ``a_i`` until the triple is dual feasible on the whole
    grid. Weak duality turns the triple into a lower bound on the LP value.
    Returns ``(bound, (a, b, h))``; the bound is ``inf`` if the repair fails.
    """
    n, m = P.shape
    Fm = np.vstack([np.ones(m), y]) if martingale else np.ones((1, m))
    finite = np.isfinite(G)
    Wt = np.where(finite, P, 0.0)
    Gf = np.where(finite, G, 0.0)
    K = np.einsum("ij,aj,bj->iab", Wt, Fm, Fm)
    Kinv = np.linalg.pinv(K, hermitian=True)
    B = Wt[:, None, :] * Fm[None, :, :]
    WG = Wt * Gf
    r_row = WG @ Fm.T
    r_col = WG.sum(0)
    C = np.einsum("iab,ibm->iam", Kinv, B)
    q = Fm.shape[0]
    S = np.diag(Wt.sum(0)) - B.reshape(n * q, m).T @ C.reshape(n * q, m)
    KR = np.einsum("iab,ib->ia", Kinv, r_row)
    rhs = r_col - KR.ravel() @ B.reshape(n * q, m)
    S[np.diag_indices_from(S)] += 1e-13 * max(np.abs(np.diag(S)).max(), 1e-300)
    try:
        b = linalg.cho_solve(linalg.cho_factor(S), rhs)
    except (linalg.LinAlgError, ValueError):
        b = linalg.lstsq(S, rhs)[0]
    theta = KR - (C.reshape(n * q, m) @ b).reshape(n, q)
    with np.errstate(invalid="ignore"):
        R = G - theta @ Fm - b[None, :]
    shift = R.min(axis=1)
    if not np.all(np.isfinite(shift)):
        return math.inf, None
    theta[:, 0] += shift
    lower = math.fsum(np.concatenate([theta[:, 0] * mu, b * nu,
                                      theta[:, 1] * mu * x if martingale else []]))
    upper = math.fsum(np.where(P > 0, G * P, 0.0).ravel())
    h = theta[:, 1] if martingale else None
    return max(upper - lower, 0.0), (theta[:, 0], b, h)


def _residual(P, x, mu, y, nu, martingale):
    r = max(np.abs(P.sum(1) - mu).max(), np.abs(P.sum(0) - nu).max())
    if martingale:
        r = max(r, np.abs(P @ y - x * mu).max())
    return float(r)


def _initial_plan(opts: SolveOptions, x, mu, y, nu, oracle_factory):
    init = opts.initial
    if isinstance(init, DiscreteCoupling):
        _, _, P = init.to_matrix(y)
        return P
    if isinstance(init, np.ndarray):
        if init.shape != (x.size, y.size):
            raise ValidationError("initial plan has the wrong shape")
        return np.array(init, float)
    if init == "random":
        rng = np.random.default_rng(opts.seed)
        res = oracle_factory()(rng.standard_normal((x.size, y.size)))
        return None if not res.optimal else res.plan
    if init in (None, "lp"):
        return feasible_plan(x, mu, y, nu, opts.martingale, opts.lp_backend)
    raise ValidationError(f"unsupported initial point {init!r}")


def solve_wmot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostFunctional,
               opts: SolveOptions | None = None) -> SolverReport:
    """Minimize ``sum_i mu_i C(x_i, pi_i)`` over (martingale) couplings of ``mu`` and ``nu``."""
    return solve_wmot_arrays(mu.atoms, mu.weights, nu.atoms, nu.weights, cost, opts)


def solve_wmot_arrays(x, mu, y, nu, cost: CostFunctional, opts: SolveOptions | None = None) -> SolverReport:
    """Array form of :func:`solve_wmot`; source atoms may repeat (kept distinct by index)."""
    opts = opts or SolveOptions()
    x = np.asarray(x, float)
    mu = np.asarray(mu, float)
    y = np.asarray(y, float)
    nu = np.asarray(nu, float)
    cost.check_domain(x, y)
    t0 = time.perf_counter()
    if opts.martingale:
        order = check_convex_order(DiscreteMeasure(x, mu, mass_tol=1e-9), DiscreteMeasure(y, nu, mass_tol=1e-9))
        # clear violations are rejected outright; borderline ones go to the phase-1 LP
        if not order and order.gap > 1e-7:
            raise InfeasibleError(f"marginals are not in convex order (witness {order.witness}, gap {order.gap:.3e})")

    oracle = None

    def get_oracle():
        nonlocal oracle
        if oracle is None:
            oracle = LinearOracle(x, mu, y, nu, opts.martingale, opts.lp_backend)
        return oracle

    def report(P, value, gap, iters, trace, converged, warning=None, **info):
        info["seconds"] = time.perf_counter() - t0
        coupling = from_matrix(x, y, P / P.sum())
        return SolverReport(coupling, value, gap, iters, trace, converged, warning, x, y, P,
                            oracle.calls if oracle else 0, info)

    # identical marginals: the identity is the only martingale coupling
    if opts.martingale and x.size == y.size and np.array_equal(x, y) and np.array_equal(mu, nu):
        P = np.diag(mu)
        F = objective(cost, x, mu, y, P)
        return report(P, F, 0.0, 0, [(F, 0.0)], True, reason="identity")

    if cost.is_linear:
        res = get_oracle()(cost.row_gradients(x, y, np.zeros((x.size, y.size))))
        if not res.optimal:
            raise InfeasibleError("no martingale coupling exists for these marginals")
        F = objective(cost, x, mu, y, res.plan)
        return report(res.plan, F, 0.0, 1, [(F, 0.0)], True, reason="lp")

    corrector_pending = opts.use_corrector
    P = None
    if opts.initial is None and corrector_pending:
        P = cost.corrector(x, mu, y, nu, opts.martingale)
        corrector_pending = False
        if P is not None and _residual(P, x, mu, y, nu, opts.martingale) > 1e-9:
            P = None
    if P is None:
        P = _initial_plan(opts, x, mu, y, nu, get_oracle)
    if P is None:
        raise InfeasibleError("no martingale coupling exists for these marginals")
    if _residual(P, x, mu, y, nu, opts.martingale) > 1e-8:
        raise ValidationError("initial plan is not feasible")

    F = objective(cost, x, mu, y, P)
    trace = []
    tol = opts.gap_tolerance
    warning = None
    converged = False
    gap = math.inf
    t = 0
    while True:
        G = cost.row_gradients(x, y, P / mu[:, None])
        gap = math.inf
        if opts.use_certificate:
            gap, _ = certified_gap(G, P, x, mu, y, nu, opts.martingale)
        S = None
        if gap > tol:
            lmo = get_oracle()(G)
            if not lmo.optimal:
                raise NumericError("linear minimization oracle failed")
            S = lmo.plan
            gap = min(gap, max(math.fsum((G * (P - S)).ravel()), 0.0))
        trace.append((F, gap))
        if gap <= tol:
            converged = True
            break
        if t >= opts.max_iterations:
            warning = f"gap {gap:.3e} above tolerance after {t} iterations"
            break
        if corrector_pending:
            corrector_pending = False
            crng = None
            if opts.initial == "random":
                crng = np.random.default_rng(None if opts.seed is None else [opts.seed, 1])
            Q = cost.corrector(x, mu, y, nu, opts.martingale, crng)
            if Q is not None and _residual(Q, x, mu, y, nu, opts.martingale) <= 1e-9:
                FQ = objective(cost, x, mu, y, Q)
                if FQ < F:
                    P, F = Q, FQ
                    t += 1
                    continue
        D = S - P
        if opts.step_rule == "classic":
            alpha = 2.0 / (t + 2.0)
        else:
            phi = lambda a: objective(cost, x, mu, y, P + a * D)
            alpha = golden_section(phi, 0.0, 1.0, opts.line_search_tol)
            if phi(1.0) <= phi(alpha):
                alpha = 1.0
        Pn = P + alpha * D
        np.maximum(Pn, 0.0, out=Pn)
        Fn = objective(cost, x, mu, y, Pn)
        if opts.step_rule == "line-search" and Fn > F:
            warning = f"line search stalled at gap {gap:.3e}"
            break
        P, F = Pn, Fn
        t += 1

    resid = _residual(P, x, mu, y, nu, opts.martingale)
    if resid > 1e-8:
        raise NumericError(f"final plan violates constraints by {resid:.3e}")
    return report(P, F, gap, t, trace, converged, warning)
